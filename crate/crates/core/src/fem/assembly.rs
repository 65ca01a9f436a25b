//! Element loops for the weighted mass, transport operator and boundary terms.

use thiserror::Error;

use super::quadrature::{gauss2, lerp, map_bary, TRI3};
use super::sparse::CsrMatrix;
use crate::geometry::{BoundaryTag, Point, TriMesh};
use crate::transform::{mat_vec, PointCoefficients};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error("non-positive weight {value} at element {element}")]
    NonPositiveWeight { element: usize, value: f64 },
    #[error("expected {expected} quadrature values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("mesh has no boundary edges tagged {0}")]
    UnknownTag(String),
}

/// Factors multiplying diffusion, the `q` drift and the surface integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub diffusion: f64,
    pub drift: f64,
    pub surface: f64,
}

impl Scaling {
    /// `ε²` diffusion, `ε` drift, `ε` surface measure.
    pub fn micro(eps: f64) -> Self {
        Scaling { diffusion: eps * eps, drift: eps, surface: eps }
    }

    pub fn cell() -> Self {
        Scaling { diffusion: 1.0, drift: 1.0, surface: 1.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub area: f64,
    pub coords: [Point; 3],
    /// Constant gradients of the three hat functions.
    pub grads: [Point; 3],
}

impl Element {
    pub fn new(coords: [Point; 3]) -> Self {
        let [a, b, c] = coords;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let grads = [
            [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
            [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
            [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
        ];
        Element { area: 0.5 * det, coords, grads }
    }
}

/// Precomputed element geometry and matrix pattern of one mesh.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub mesh: TriMesh,
    pub elements: Vec<Element>,
    pattern: CsrMatrix,
    positions: Vec<[usize; 9]>,
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

impl Assembler {
    pub fn new(mesh: &TriMesh) -> Self {
        let elements = (0..mesh.n_triangles()).map(|t| Element::new(mesh.triangle_coords(t))).collect();
        let pattern = CsrMatrix::from_triangles(mesh.n_nodes(), &mesh.triangles);
        let positions = pattern.element_positions(&mesh.triangles);
        Assembler { mesh: mesh.clone(), elements, pattern, positions }
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_nodes()
    }

    pub fn pattern(&self) -> &CsrMatrix {
        &self.pattern
    }

    /// Interior quadrature points, three per element in element order.
    pub fn quadrature_points(&self) -> Vec<Point> {
        self.elements.iter().flat_map(|e| TRI3.iter().map(move |(l, _)| map_bary(&e.coords, l))).collect()
    }

    fn check_len(&self, got: usize, per: usize, n: usize) -> Result<(), AssemblyError> {
        if got != per * n {
            return Err(AssemblyError::DimensionMismatch { expected: per * n, got });
        }
        Ok(())
    }

    /// `M_ij = ∫ w φ_i φ_j` with `w` given at the interior quadrature points.
    pub fn weighted_mass(&self, weight: &[f64]) -> Result<CsrMatrix, AssemblyError> {
        self.check_len(weight.len(), 3, self.elements.len())?;
        let mut m = self.pattern.zeroed();
        for (e, el) in self.elements.iter().enumerate() {
            let pos = &self.positions[e];
            for (q, (l, w)) in TRI3.iter().enumerate() {
                let wq = weight[3 * e + q];
                if !(wq > 0.0) {
                    return Err(AssemblyError::NonPositiveWeight { element: e, value: wq });
                }
                let s = w * el.area * wq;
                for a in 0..3 {
                    for b in 0..3 {
                        m.values[pos[3 * a + b]] += s * l[a] * l[b];
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn mass(&self) -> CsrMatrix {
        self.weighted_mass(&vec![1.0; 3 * self.elements.len()]).expect("unit weight")
    }

    /// Plain stiffness `∫ ∇φ_j·∇φ_i`.
    pub fn stiffness(&self) -> CsrMatrix {
        let mut k = self.pattern.zeroed();
        for (e, el) in self.elements.iter().enumerate() {
            let pos = &self.positions[e];
            for a in 0..3 {
                for b in 0..3 {
                    k.values[pos[3 * a + b]] += el.area * dot(el.grads[a], el.grads[b]);
                }
            }
        }
        k
    }

    /// `A_ij = ∫ [σ_d J D*∇φ_j − σ_q J q φ_j + J v φ_j]·∇φ_i`, no boundary terms.
    pub fn transport(&self, coeff: &[PointCoefficients], scaling: Scaling) -> Result<CsrMatrix, AssemblyError> {
        self.check_len(coeff.len(), 3, self.elements.len())?;
        let mut m = self.pattern.zeroed();
        let mut has_drift = false;
        for (e, el) in self.elements.iter().enumerate() {
            let pos = &self.positions[e];
            for (q, (l, w)) in TRI3.iter().enumerate() {
                let c = &coeff[3 * e + q];
                let s = w * el.area * c.jac;
                let drift = [c.v[0] - scaling.drift * c.q[0], c.v[1] - scaling.drift * c.q[1]];
                has_drift |= drift != [0.0, 0.0];
                for b in 0..3 {
                    let flux = mat_vec(&c.d_trans, el.grads[b]);
                    for a in 0..3 {
                        let diff = scaling.diffusion * dot(flux, el.grads[a]);
                        let adv = l[b] * dot(drift, el.grads[a]);
                        m.values[pos[3 * a + b]] += s * (diff + adv);
                    }
                }
            }
        }
        if has_drift {
            m.update_symmetry();
        }
        Ok(m)
    }

    /// `∫ s φ_i` for `s` at the interior quadrature points.
    pub fn load(&self, values: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check_len(values.len(), 3, self.elements.len())?;
        let mut b = vec![0.0; self.n_dofs()];
        for (e, el) in self.elements.iter().enumerate() {
            let t = &self.mesh.triangles[e];
            for (q, (l, w)) in TRI3.iter().enumerate() {
                let s = w * el.area * values[3 * e + q];
                for a in 0..3 {
                    b[t[a]] += s * l[a];
                }
            }
        }
        Ok(b)
    }

    /// Indices of the boundary edges carrying `tag`.
    pub fn edges(&self, tag: BoundaryTag) -> Result<Vec<usize>, AssemblyError> {
        let idx: Vec<usize> =
            self.mesh.boundary_edges.iter().enumerate().filter(|(_, e)| e.tag == tag).map(|(i, _)| i).collect();
        if idx.is_empty() {
            return Err(AssemblyError::UnknownTag(tag.name().into()));
        }
        Ok(idx)
    }

    /// Two Gauss points per listed edge.
    pub fn edge_quadrature_points(&self, edges: &[usize]) -> Vec<Point> {
        let g = gauss2();
        edges
            .iter()
            .flat_map(|&i| {
                let [a, b] = self.mesh.boundary_edges[i].nodes;
                let (pa, pb) = (self.mesh.nodes[a], self.mesh.nodes[b]);
                g.into_iter().map(move |(s, _)| lerp(pa, pb, s))
            })
            .collect()
    }

    /// `σ ∫_edges s φ_i dσ` for `s` at the edge Gauss points.
    pub fn surface_load(&self, edges: &[usize], values: &[f64], scale: f64) -> Result<Vec<f64>, AssemblyError> {
        self.check_len(values.len(), 2, edges.len())?;
        let mut b = vec![0.0; self.n_dofs()];
        for (n, &i) in edges.iter().enumerate() {
            let e = &self.mesh.boundary_edges[i];
            let len = self.mesh.edge_length(e);
            for (q, (s, w)) in gauss2().into_iter().enumerate() {
                let v = scale * w * len * values[2 * n + q];
                b[e.nodes[0]] += v * (1.0 - s);
                b[e.nodes[1]] += v * s;
            }
        }
        Ok(b)
    }

    /// `∫_edges w φ_i φ_j dσ`.
    pub fn boundary_mass(&self, edges: &[usize], weight: &[f64]) -> Result<CsrMatrix, AssemblyError> {
        self.check_len(weight.len(), 2, edges.len())?;
        let mut m = self.pattern.zeroed();
        for (n, &i) in edges.iter().enumerate() {
            let e = &self.mesh.boundary_edges[i];
            let len = self.mesh.edge_length(e);
            for (q, (s, w)) in gauss2().into_iter().enumerate() {
                let v = w * len * weight[2 * n + q];
                let phi = [1.0 - s, s];
                for a in 0..2 {
                    for b in 0..2 {
                        let p = self.pattern.position(e.nodes[a], e.nodes[b]).expect("edge in pattern");
                        m.values[p] += v * phi[a] * phi[b];
                    }
                }
            }
        }
        Ok(m)
    }

    /// Nodal field evaluated at the interior quadrature points.
    pub fn interpolate_at_quadrature(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(3 * self.elements.len());
        for t in &self.mesh.triangles {
            for (l, _) in TRI3.iter() {
                out.push(l[0] * u[t[0]] + l[1] * u[t[1]] + l[2] * u[t[2]]);
            }
        }
        out
    }

    pub fn interpolate_at_edges(&self, edges: &[usize], u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * edges.len());
        for &i in edges {
            let [a, b] = self.mesh.boundary_edges[i].nodes;
            for (s, _) in gauss2() {
                out.push((1.0 - s) * u[a] + s * u[b]);
            }
        }
        out
    }

    /// Unit normal of boundary edge `i`, pointing out of the meshed domain.
    pub fn edge_outer_normal(&self, i: usize) -> Point {
        let e = &self.mesh.boundary_edges[i];
        let (a, b) = (self.mesh.nodes[e.nodes[0]], self.mesh.nodes[e.nodes[1]]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len = d[0].hypot(d[1]);
        // domain on the left of a -> b, so the outer normal is the right-hand normal
        [d[1] / len, -d[0] / len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perforated_mesh, build_reference_cell, BoundaryEdge, CellSpec, Rect, Side};
    use crate::transform::IDENTITY;

    fn unit_square(n: usize) -> TriMesh {
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut nodes = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 * h, j as f64 * h]);
            }
        }
        let mut triangles = Vec::new();
        for j in 0..n {
            for i in 0..n {
                triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
                triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
            }
        }
        let mut boundary_edges = Vec::new();
        for i in 0..n {
            boundary_edges.push(BoundaryEdge { nodes: [idx(i, 0), idx(i + 1, 0)], tag: BoundaryTag::Face(Side::Bottom), cell: 0 });
        }
        TriMesh { nodes, triangles, boundary_edges }
    }

    fn plain(n: usize) -> Vec<PointCoefficients> {
        vec![
            PointCoefficients {
                jac: 1.0,
                grad_s: IDENTITY,
                grad_s_inv: IDENTITY,
                d_trans: IDENTITY,
                v: [0.0, 0.0],
                q: [0.0, 0.0]
            };
            n
        ]
    }

    #[test]
    fn unit_mass_sums_to_area() {
        let a = Assembler::new(&unit_square(3));
        assert!((a.mass().values.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let cell = build_reference_cell(&CellSpec::default()).unwrap();
        let a = Assembler::new(&cell.mesh);
        assert!((a.mass().values.iter().sum::<f64>() - cell.area()).abs() < 1e-12);
        assert!(a.mass().symmetric);
        let w = vec![-1.0; 3 * a.elements.len()];
        assert!(matches!(a.weighted_mass(&w), Err(AssemblyError::NonPositiveWeight { .. })));
    }

    #[test]
    fn patch_test() {
        let a = Assembler::new(&unit_square(4));
        let t = a.transport(&plain(3 * a.elements.len()), Scaling::cell()).unwrap();
        for (x, y) in t.values.iter().zip(&a.stiffness().values) {
            assert!((x - y).abs() < 1e-12);
        }
        let u: Vec<f64> = a.mesh.nodes.iter().map(|p| 2.0 * p[0] - 3.0 * p[1] + 1.0).collect();
        let r = t.mul_vec(&u);
        for (i, p) in a.mesh.nodes.iter().enumerate() {
            let interior = p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0;
            if interior {
                assert!(r[i].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn drift_annihilated_by_constant_test_vector() {
        let a = Assembler::new(&unit_square(3));
        let mut c = plain(3 * a.elements.len());
        for (i, x) in c.iter_mut().enumerate() {
            x.v = [0.3 + 0.01 * i as f64, -0.2];
            x.q = [0.1, 0.4];
        }
        let t = a.transport(&c, Scaling::micro(0.5)).unwrap();
        assert!(!t.symmetric);
        let ones = vec![1.0; a.n_dofs()];
        let col = t.mul_vec(&ones);
        assert!(ones.iter().zip(&col).map(|(a, b)| a * b).sum::<f64>().abs() < 1e-13);
        let tt = t.transpose().mul_vec(&ones);
        assert!(tt.iter().all(|v| v.abs() < 1e-13));
    }

    #[test]
    fn surface_loads_match_lengths() {
        let cell = build_reference_cell(&CellSpec::default()).unwrap();
        let a = Assembler::new(&cell.mesh);
        let g = a.edges(BoundaryTag::Gamma).unwrap();
        let b = a.surface_load(&g, &vec![1.0; 2 * g.len()], 1.0).unwrap();
        assert!((b.iter().sum::<f64>() - cell.gamma_length()).abs() < 1e-12);
        assert!(a.surface_load(&g, &vec![0.0; 2 * g.len()], 1.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(a.edges(BoundaryTag::Outer), Err(AssemblyError::UnknownTag(_))));

        let eps = 0.25;
        let pm = build_perforated_mesh(eps, &cell, Rect::unit()).unwrap();
        let a = Assembler::new(&pm.mesh);
        let g = a.edges(BoundaryTag::Gamma).unwrap();
        let b = a.surface_load(&g, &vec![1.0; 2 * g.len()], eps).unwrap();
        let expect = 16.0 * eps * eps * cell.gamma_length();
        assert!((b.iter().sum::<f64>() - expect).abs() < 1e-12);
        let bm = a.boundary_mass(&g, &vec![1.0; 2 * g.len()]).unwrap();
        assert!((bm.values.iter().sum::<f64>() - 16.0 * eps * cell.gamma_length()).abs() < 1e-12);
    }

    #[test]
    fn dilation_covariance() {
        let cell = build_reference_cell(&CellSpec::default()).unwrap();
        let eps = 0.5;
        let scaled = TriMesh {
            nodes: cell.mesh.nodes.iter().map(|p| [eps * p[0], eps * p[1]]).collect(),
            ..cell.mesh.clone()
        };
        let (a, b) = (Assembler::new(&cell.mesh), Assembler::new(&scaled));
        let n = 3 * a.elements.len();
        let cell_t = a.transport(&plain(n), Scaling::cell()).unwrap();
        let micro_t = b.transport(&plain(n), Scaling::micro(eps)).unwrap();
        for (x, y) in cell_t.values.iter().zip(&micro_t.values) {
            assert!((eps * eps * x - y).abs() < 1e-12);
        }
        for (x, y) in a.mass().values.iter().zip(&b.mass().values) {
            assert!((eps * eps * x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn outward_normal_on_gamma_points_into_hole() {
        let cell = build_reference_cell(&CellSpec::default()).unwrap();
        let a = Assembler::new(&cell.mesh);
        for i in a.edges(BoundaryTag::Gamma).unwrap() {
            let e = &a.mesh.boundary_edges[i];
            let m = lerp(a.mesh.nodes[e.nodes[0]], a.mesh.nodes[e.nodes[1]], 0.5);
            let n = a.edge_outer_normal(i);
            let inward = [0.5 - m[0], 0.5 - m[1]];
            assert!(dot(n, inward) > 0.0);
        }
    }
}
