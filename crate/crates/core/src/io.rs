//! Output layout, legacy VTK, plain-text mesh dumps and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::geometry::{Point, TriMesh};
use crate::stepper::NormRow;
use crate::transform::AssumptionReport;
use crate::unfolding::OperatorResiduals;

/// `<output_dir>/<run_id>/{config-echo.toml, meshes/, fields/, reports/}`.
#[derive(Debug, Clone)]
pub struct OutputLayout {
    pub root: PathBuf,
}

impl OutputLayout {
    pub fn create(output_dir: &Path, run_id: &str, config_echo: &str) -> io::Result<Self> {
        let root = output_dir.join(run_id);
        for d in ["meshes", "fields", "reports"] {
            fs::create_dir_all(root.join(d))?;
        }
        fs::write(root.join("config-echo.toml"), config_echo)?;
        Ok(OutputLayout { root })
    }

    pub fn meshes(&self) -> PathBuf {
        self.root.join("meshes")
    }

    pub fn fields(&self) -> PathBuf {
        self.root.join("fields")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

/// Legacy ASCII VTK unstructured grid with nodal scalar fields.
pub fn vtk_string(title: &str, nodes: &[Point], triangles: &[[usize; 3]], fields: &[(&str, &[f64])]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", nodes.len());
    for p in nodes {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
    let _ = writeln!(s, "CELLS {} {}", triangles.len(), 4 * triangles.len());
    for t in triangles {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", triangles.len());
    for _ in triangles {
        s.push_str("5\n");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", nodes.len());
        for (name, v) in fields {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for x in v.iter() {
                let _ = writeln!(s, "{x:e}");
            }
        }
    }
    s
}

pub fn write_vtk(path: &Path, mesh: &TriMesh, fields: &[(&str, &[f64])]) -> io::Result<()> {
    fs::write(path, vtk_string("perfhom", &mesh.nodes, &mesh.triangles, fields))
}

/// Plain-text listing: nodes, triangles, then tagged boundary edges.
pub fn mesh_text(mesh: &TriMesh) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.n_nodes());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e}", p[0], p[1]);
    }
    let _ = writeln!(s, "triangles {}", mesh.n_triangles());
    for t in &mesh.triangles {
        let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "edges {}", mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let _ = writeln!(s, "{} {} {} {}", e.nodes[0], e.nodes[1], e.tag.name(), e.cell);
    }
    s
}

pub fn norm_trace_csv(rows: &[NormRow]) -> String {
    let mut s = String::from("t,L2,epsH1,Jmass\n");
    for r in rows {
        let _ = writeln!(s, "{:e},{:e},{:e},{:e}", r.t, r.l2, r.eps_h1, r.jmass);
    }
    s
}

pub fn assumption_csv(report: &AssumptionReport) -> String {
    let mut s = String::from("eps,check,value,bound,pass\n");
    for r in &report.rows {
        let bound = r.bound.map_or("NaN".to_string(), |b| format!("{b:e}"));
        let _ = writeln!(s, "{:e},{},{:e},{},{}", r.eps, r.check, r.value, bound, r.pass);
    }
    s
}

pub fn operator_csv(rows: &[OperatorResiduals]) -> String {
    let mut s = String::from("eps,adjointness,isometry,boundary_isometry,gradient,left_inverse,time_difference\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.eps, r.adjointness, r.isometry, r.boundary_isometry, r.gradient, r.left_inverse, r.time_difference
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_reference_cell, CellSpec};

    #[test]
    fn vtk_counts() {
        let s = vtk_string("t", &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], &[[0, 1, 2]], &[("u", &[1.0, 2.0, 3.0])]);
        assert!(s.contains("POINTS 3 double"));
        assert!(s.contains("CELLS 1 4\n3 0 1 2"));
        assert!(s.contains("CELL_TYPES 1\n5\n"));
        assert!(s.ends_with("1e0\n2e0\n3e0\n"));
    }

    #[test]
    fn mesh_listing_is_deterministic() {
        let c = build_reference_cell(&CellSpec::default()).unwrap();
        let a = mesh_text(&c.mesh);
        let b = mesh_text(&build_reference_cell(&CellSpec::default()).unwrap().mesh);
        assert_eq!(a, b);
        assert!(a.starts_with(&format!("nodes {}\n", c.mesh.n_nodes())));
    }

    #[test]
    fn layout_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let l = OutputLayout::create(dir.path(), "r1", "schema_version = 1\n").unwrap();
        assert!(l.meshes().is_dir() && l.fields().is_dir() && l.reports().is_dir());
        assert_eq!(fs::read_to_string(l.root.join("config-echo.toml")).unwrap(), "schema_version = 1\n");
    }
}
