//! Reference cell `Y*`, its triangulation, and the periodically perforated
//! macroscopic mesh obtained by replicating the cell template.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};
use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("hole of radius {radius} centred at ({cx}, {cy}) is not strictly inside the unit cell")]
    HoleTouchesBoundary { radius: f64, cx: f64, cy: f64 },
    #[error("invalid cell parameter: {0}")]
    InvalidParameter(String),
    #[error("meshing failed: {0}")]
    Meshing(String),
    #[error("1/eps must be a positive integer, got eps = {0}")]
    NonIntegerScale(f64),
    #[error("domain is incompatible with eps = {eps}: {reason}")]
    IncompatibleDomain { eps: f64, reason: String },
}

/// Face of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Interior (hole) boundary: `Γ` on the cell, `Γ_ε` on the perforated mesh.
    Gamma,
    /// Face of the reference cell.
    Face(Side),
    /// Outer boundary `∂Ω` of the perforated mesh.
    Outer,
}

impl BoundaryTag {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryTag::Gamma => "gamma",
            BoundaryTag::Face(Side::Left) => "left",
            BoundaryTag::Face(Side::Right) => "right",
            BoundaryTag::Face(Side::Bottom) => "bottom",
            BoundaryTag::Face(Side::Top) => "top",
            BoundaryTag::Outer => "outer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    /// Owning macro cell (always 0 on the reference cell).
    pub cell: usize,
}

/// Plain P1 triangulation with tagged boundary edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
}

impl TriMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_coords(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Signed area (positive for counter-clockwise triangles).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    pub fn edge_length(&self, e: &BoundaryEdge) -> f64 {
        dist(self.nodes[e.nodes[0]], self.nodes[e.nodes[1]])
    }

    pub fn boundary_length(&self, tag: BoundaryTag) -> f64 {
        self.boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .map(|e| self.edge_length(e))
            .sum()
    }

    pub fn min_angle_deg(&self) -> f64 {
        (0..self.n_triangles())
            .map(|t| min_angle(self.triangle_coords(t)))
            .fold(f64::INFINITY, f64::min)
            .to_degrees()
    }

    /// Nodes touched by edges carrying `tag`, sorted and deduplicated.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn min_angle(p: [Point; 3]) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..3 {
        let a = p[i];
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let v = [c[0] - a[0], c[1] - a[1]];
        let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0].hypot(u[1])) * (v[0].hypot(v[1])));
        m = m.min(cos.clamp(-1.0, 1.0).acos());
    }
    m
}

/// Parameters of the reference cell `Y* = (0,1)² \ B(center, r0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellSpec {
    pub hole_center: Point,
    pub hole_radius: f64,
    /// Number of uniform midpoint subdivisions applied to the base mesh.
    pub refine_level: usize,
    /// Target edge length of the base (level 0) mesh.
    pub base_spacing: f64,
    /// Lower bound on triangle angles, in degrees.
    pub min_angle_deg: f64,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec {
            hole_center: [0.5, 0.5],
            hole_radius: 0.25,
            refine_level: 0,
            base_spacing: 1.0 / 12.0,
            min_angle_deg: 20.0,
        }
    }
}

impl CellSpec {
    pub fn with_radius(hole_radius: f64) -> Self {
        CellSpec { hole_radius, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let [cx, cy] = self.hole_center;
        let r = self.hole_radius;
        if !(r > 0.0) || !r.is_finite() {
            return Err(GeometryError::InvalidParameter(format!("hole radius must be positive, got {r}")));
        }
        let d = cx.min(1.0 - cx).min(cy).min(1.0 - cy);
        if !(d > r) {
            return Err(GeometryError::HoleTouchesBoundary { radius: r, cx, cy });
        }
        if !(self.base_spacing > 0.0 && self.base_spacing <= 0.5) {
            return Err(GeometryError::InvalidParameter(format!(
                "base spacing must lie in (0, 0.5], got {}",
                self.base_spacing
            )));
        }
        if !(0.0..60.0).contains(&self.min_angle_deg) {
            return Err(GeometryError::InvalidParameter(format!(
                "angle floor must lie in [0, 60), got {}",
                self.min_angle_deg
            )));
        }
        Ok(())
    }

    /// Exact area of `Y*`.
    pub fn exact_area(&self) -> f64 {
        1.0 - std::f64::consts::PI * self.hole_radius * self.hole_radius
    }
}

/// Triangulated reference cell with periodic face identification.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMesh {
    pub spec: CellSpec,
    pub mesh: TriMesh,
    /// `(left, right)` node pairs with equal `y₂`, sorted by `y₂`.
    pub left_right: Vec<(usize, usize)>,
    /// `(bottom, top)` node pairs with equal `y₁`, sorted by `y₁`.
    pub bottom_top: Vec<(usize, usize)>,
}

impl CellMesh {
    pub fn area(&self) -> f64 {
        self.mesh.area()
    }

    pub fn gamma_length(&self) -> f64 {
        self.mesh.boundary_length(BoundaryTag::Gamma)
    }

    /// Node indices on `side`, sorted along the face.
    pub fn face_nodes(&self, side: Side) -> Vec<usize> {
        let (axis, val) = match side {
            Side::Left => (0, 0.0),
            Side::Right => (0, 1.0),
            Side::Bottom => (1, 0.0),
            Side::Top => (1, 1.0),
        };
        let mut v: Vec<usize> = (0..self.mesh.n_nodes()).filter(|&i| self.mesh.nodes[i][axis] == val).collect();
        v.sort_by(|&a, &b| self.mesh.nodes[a][1 - axis].total_cmp(&self.mesh.nodes[b][1 - axis]));
        v
    }
}

/// Builds and triangulates the reference cell.
///
/// The base mesh is a constrained Delaunay triangulation of boundary, ring and
/// lattice points, improved by Laplacian smoothing. A centred hole gets a mesh
/// mirror-symmetric in both axes, built from one quarter. Each refinement level
/// splits every triangle into four, snapping new hole-boundary nodes onto the
/// exact circle.
pub fn build_reference_cell(spec: &CellSpec) -> Result<CellMesh, GeometryError> {
    spec.validate()?;
    let mut mesh = if spec.hole_center == [0.5, 0.5] { symmetric_base_mesh(spec)? } else { base_mesh(spec)? };
    for _ in 0..spec.refine_level {
        mesh = subdivide(&mesh, spec);
    }
    for t in 0..mesh.n_triangles() {
        if !(mesh.signed_area(t) > 0.0) {
            return Err(GeometryError::Meshing(format!("triangle {t} is degenerate or inverted")));
        }
    }
    let angle = mesh.min_angle_deg();
    if angle < spec.min_angle_deg {
        return Err(GeometryError::Meshing(format!(
            "minimum angle {angle:.2}° is below the floor {}°",
            spec.min_angle_deg
        )));
    }
    let left_right = pair_faces(&mesh, 0)?;
    let bottom_top = pair_faces(&mesh, 1)?;
    Ok(CellMesh { spec: spec.clone(), mesh, left_right, bottom_top })
}

fn on_face(p: Point) -> Option<Side> {
    if p[0] == 0.0 {
        Some(Side::Left)
    } else if p[0] == 1.0 {
        Some(Side::Right)
    } else if p[1] == 0.0 {
        Some(Side::Bottom)
    } else if p[1] == 1.0 {
        Some(Side::Top)
    } else {
        None
    }
}

fn base_mesh(spec: &CellSpec) -> Result<TriMesh, GeometryError> {
    use std::f64::consts::PI;
    let c = spec.hole_center;
    let r0 = spec.hole_radius;
    let h = spec.base_spacing;
    let n_circle = ((2.0 * PI * r0 / h).round() as usize).max(8);
    let n_side = ((1.0 / h).round() as usize).max(2);
    let hc = 2.0 * PI * r0 / n_circle as f64;

    // fixed points: square boundary first, then the circle
    let mut pts: Vec<Point> = Vec::new();
    // shared face abscissae so opposite faces match bit for bit
    let s: Vec<f64> = (0..=n_side).map(|i| i as f64 / n_side as f64).collect();
    for i in 0..n_side {
        pts.push([s[i], 0.0]);
    }
    for i in 0..n_side {
        pts.push([1.0, s[i]]);
    }
    for i in 0..n_side {
        pts.push([s[n_side - i], 1.0]);
    }
    for i in 0..n_side {
        pts.push([0.0, s[n_side - i]]);
    }
    let n_square = pts.len();
    for i in 0..n_circle {
        let th = 2.0 * PI * i as f64 / n_circle as f64;
        pts.push([c[0] + r0 * th.cos(), c[1] + r0 * th.sin()]);
    }
    let n_fixed = pts.len();

    let wall = |p: Point| p[0].min(1.0 - p[0]).min(p[1]).min(1.0 - p[1]);
    let rho = |p: Point| dist(p, c);

    // ring of points one layer off the hole, staggered against the circle vertices
    let ring_r = r0 + 0.5 * 3f64.sqrt() * hc;
    let ring_ok = |p: Point| wall(p) > 0.6 * h;
    for i in 0..n_circle {
        let th = 2.0 * PI * (i as f64 + 0.5) / n_circle as f64;
        let p = [c[0] + ring_r * th.cos(), c[1] + ring_r * th.sin()];
        if ring_ok(p) {
            pts.push(p);
        }
    }
    // hexagonal lattice filling the rest
    let dy = 0.5 * 3f64.sqrt() * h;
    let rows = (1.0 / dy).ceil() as i64 + 1;
    for j in 1..rows {
        let y = j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        let mut i = 0;
        loop {
            let x = shift + i as f64 * h;
            if x >= 1.0 {
                break;
            }
            let p = [x, y];
            if wall(p) > 0.6 * h && rho(p) > ring_r + 0.8 * h {
                pts.push(p);
            }
            i += 1;
        }
    }

    let mut triangles = triangulate(&pts, n_square, n_fixed)?;
    for _ in 0..6 {
        let mut acc = vec![[0.0f64; 2]; pts.len()];
        let mut cnt = vec![0usize; pts.len()];
        for t in &triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        acc[t[a]][0] += pts[t[b]][0];
                        acc[t[a]][1] += pts[t[b]][1];
                        cnt[t[a]] += 1;
                    }
                }
            }
        }
        for i in n_fixed..pts.len() {
            if cnt[i] > 0 {
                pts[i] = [acc[i][0] / cnt[i] as f64, acc[i][1] / cnt[i] as f64];
            }
        }
        triangles = triangulate(&pts, n_square, n_fixed)?;
    }

    let mut boundary_edges = Vec::new();
    for i in 0..n_square {
        let a = i;
        let b = (i + 1) % n_square;
        let side = match i / n_side {
            0 => Side::Bottom,
            1 => Side::Right,
            2 => Side::Top,
            _ => Side::Left,
        };
        boundary_edges.push(BoundaryEdge { nodes: [a, b], tag: BoundaryTag::Face(side), cell: 0 });
    }
    for i in 0..n_circle {
        let a = n_square + i;
        let b = n_square + (i + 1) % n_circle;
        // orientation: fluid domain on the left of b -> a
        boundary_edges.push(BoundaryEdge { nodes: [b, a], tag: BoundaryTag::Gamma, cell: 0 });
    }
    Ok(TriMesh { nodes: pts, triangles, boundary_edges })
}

/// Quarter `[0,½]²` meshed once and mirrored across `y₁ = ½` and `y₂ = ½`.
fn symmetric_base_mesh(spec: &CellSpec) -> Result<TriMesh, GeometryError> {
    use std::f64::consts::PI;
    let c = [0.5, 0.5];
    let r0 = spec.hole_radius;
    let h = spec.base_spacing;
    let n_circle = ((2.0 * PI * r0 / h).round() as usize).max(8);
    let n_arc = (n_circle / 4).max(2);
    let n_face = ((0.5 / h).round() as usize).max(1);
    let gap = 0.5 - r0;
    let n_line = ((gap / h).round() as usize).max(1);
    let hc = 0.5 * PI * r0 / n_arc as f64;

    // polygon loop, counter-clockwise around the fluid part of the quarter
    let mut pts: Vec<Point> = Vec::new();
    let mut is_arc = Vec::new();
    for i in 0..n_face {
        pts.push([0.5 * (i as f64 / n_face as f64), 0.0]);
    }
    for j in 0..n_line {
        pts.push([0.5, gap * (j as f64 / n_line as f64)]);
    }
    let arc_start = pts.len();
    for i in 0..=n_arc {
        let p = match i {
            0 => [0.5, gap],
            _ if i == n_arc => [gap, 0.5],
            _ => {
                let th = 1.5 * PI - 0.5 * PI * i as f64 / n_arc as f64;
                [c[0] + r0 * th.cos(), c[1] + r0 * th.sin()]
            }
        };
        pts.push(p);
    }
    for j in 1..n_line {
        pts.push([gap * (1.0 - j as f64 / n_line as f64), 0.5]);
    }
    for i in 0..n_face {
        pts.push([0.0, 0.5 * (1.0 - i as f64 / n_face as f64)]);
    }
    let n_fixed = pts.len();
    is_arc.extend((0..n_fixed).map(|i| i >= arc_start && i <= arc_start + n_arc));
    let arc_edges: Vec<(usize, usize)> = (arc_start..arc_start + n_arc).map(|i| (i, i + 1)).collect();

    let wall = |p: Point| p[0].min(p[1]);
    let inner = |p: Point| p[0].min(p[1]).min(0.5 - p[0]).min(0.5 - p[1]);
    let rho = |p: Point| dist(p, c);
    let ring_r = r0 + 0.5 * 3f64.sqrt() * hc;
    for i in 0..n_arc {
        let th = 1.5 * PI - 0.5 * PI * (i as f64 + 0.5) / n_arc as f64;
        let p = [c[0] + ring_r * th.cos(), c[1] + ring_r * th.sin()];
        if wall(p) > 0.6 * h {
            pts.push(p);
        }
    }
    let dy = 0.5 * 3f64.sqrt() * h;
    let rows = (0.5 / dy).ceil() as i64 + 1;
    for j in 1..rows {
        let y = j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        let mut i = 0;
        loop {
            let x = shift + i as f64 * h;
            if x >= 0.5 {
                break;
            }
            let p = [x, y];
            if inner(p) > 0.6 * h && rho(p) > ring_r + 0.8 * h {
                pts.push(p);
            }
            i += 1;
        }
    }
    is_arc.resize(pts.len(), false);

    let mut triangles = triangulate_with(&pts, &arc_edges, &is_arc)?;
    for _ in 0..6 {
        let mut acc = vec![[0.0f64; 2]; pts.len()];
        let mut cnt = vec![0usize; pts.len()];
        for t in &triangles {
            for a in 0..3 {
                for b in 0..3 {
                    if a != b {
                        acc[t[a]][0] += pts[t[b]][0];
                        acc[t[a]][1] += pts[t[b]][1];
                        cnt[t[a]] += 1;
                    }
                }
            }
        }
        for i in n_fixed..pts.len() {
            if cnt[i] > 0 {
                pts[i] = [acc[i][0] / cnt[i] as f64, acc[i][1] / cnt[i] as f64];
            }
        }
        triangles = triangulate_with(&pts, &arc_edges, &is_arc)?;
    }

    // mirror images; nodes on the mirror lines map to themselves exactly
    let mut nodes: Vec<Point> = Vec::new();
    let mut index: HashMap<(u64, u64), usize> = HashMap::new();
    let mut tris = Vec::with_capacity(4 * triangles.len());
    for (fx, fy) in [(false, false), (true, false), (false, true), (true, true)] {
        let map: Vec<usize> = pts
            .iter()
            .map(|p| {
                let q = [if fx { 1.0 - p[0] } else { p[0] }, if fy { 1.0 - p[1] } else { p[1] }];
                *index.entry((q[0].to_bits(), q[1].to_bits())).or_insert_with(|| {
                    nodes.push(q);
                    nodes.len() - 1
                })
            })
            .collect();
        for t in &triangles {
            let v = t.map(|i| map[i]);
            tris.push(if fx != fy { [v[0], v[2], v[1]] } else { v });
        }
    }
    let boundary_edges = boundary_from_triangles(&nodes, &tris, c, r0)?;
    Ok(TriMesh { nodes, triangles: tris, boundary_edges })
}

fn triangulate_with(pts: &[Point], constraints: &[(usize, usize)], is_arc: &[bool]) -> Result<Vec<[usize; 3]>, GeometryError> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(pts.len());
    for p in pts {
        let h = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| GeometryError::Meshing(format!("point insertion failed: {e:?}")))?;
        handles.push(h);
    }
    if cdt.num_vertices() != pts.len() {
        return Err(GeometryError::Meshing("duplicate mesh points".into()));
    }
    for &(a, b) in constraints {
        if !cdt.can_add_constraint(handles[a], handles[b]) {
            return Err(GeometryError::Meshing("hole boundary constraint intersects the mesh".into()));
        }
        cdt.add_constraint(handles[a], handles[b]);
    }
    let index: HashMap<usize, usize> = handles.iter().enumerate().map(|(i, h)| (h.index(), i)).collect();
    let mut tris = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let v = f.vertices().map(|v| index[&v.fix().index()]);
        if v.iter().all(|&i| is_arc[i]) {
            continue;
        }
        let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
        let s = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        tris.push(if s > 0.0 { v } else { [v[0], v[2], v[1]] });
    }
    Ok(tris)
}

/// Edges owned by a single triangle, oriented with the mesh on their left.
fn boundary_from_triangles(nodes: &[Point], tris: &[[usize; 3]], c: Point, r0: f64) -> Result<Vec<BoundaryEdge>, GeometryError> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        for a in 0..3 {
            *count.entry(key(t[a], t[(a + 1) % 3])).or_default() += 1;
        }
    }
    let mut edges = Vec::new();
    for t in tris {
        for a in 0..3 {
            let (i, j) = (t[a], t[(a + 1) % 3]);
            if count[&key(i, j)] != 1 {
                continue;
            }
            let (p, q) = (nodes[i], nodes[j]);
            let shared = |axis: usize, v: f64| p[axis] == v && q[axis] == v;
            let tag = match () {
                _ if shared(0, 0.0) => BoundaryTag::Face(Side::Left),
                _ if shared(0, 1.0) => BoundaryTag::Face(Side::Right),
                _ if shared(1, 0.0) => BoundaryTag::Face(Side::Bottom),
                _ if shared(1, 1.0) => BoundaryTag::Face(Side::Top),
                _ if (dist(p, c) - r0).abs() < 1e-12 && (dist(q, c) - r0).abs() < 1e-12 => BoundaryTag::Gamma,
                _ => return Err(GeometryError::Meshing(format!("stray boundary edge {p:?} - {q:?}"))),
            };
            edges.push(BoundaryEdge { nodes: [i, j], tag, cell: 0 });
        }
    }
    Ok(edges)
}

fn triangulate(pts: &[Point], n_square: usize, n_fixed: usize) -> Result<Vec<[usize; 3]>, GeometryError> {
    let mut cdt: ConstrainedDelaunayTriangulation<Point2<f64>> = ConstrainedDelaunayTriangulation::new();
    let mut handles = Vec::with_capacity(pts.len());
    for p in pts {
        let h = cdt
            .insert(Point2::new(p[0], p[1]))
            .map_err(|e| GeometryError::Meshing(format!("point insertion failed: {e:?}")))?;
        handles.push(h);
    }
    if cdt.num_vertices() != pts.len() {
        return Err(GeometryError::Meshing("duplicate mesh points".into()));
    }
    let n_circle = n_fixed - n_square;
    for i in 0..n_circle {
        let a = handles[n_square + i];
        let b = handles[n_square + (i + 1) % n_circle];
        if !cdt.can_add_constraint(a, b) {
            return Err(GeometryError::Meshing("hole boundary constraint intersects the mesh".into()));
        }
        cdt.add_constraint(a, b);
    }
    let index: HashMap<usize, usize> = handles.iter().enumerate().map(|(i, h)| (h.index(), i)).collect();
    let mut tris = Vec::with_capacity(cdt.num_inner_faces());
    for f in cdt.inner_faces() {
        let v = f.vertices().map(|v| index[&v.fix().index()]);
        // faces spanned purely by circle vertices fill the hole
        if v.iter().all(|&i| i >= n_square && i < n_fixed) {
            continue;
        }
        let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
        let s = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if s > 0.0 {
            tris.push(v);
        } else {
            tris.push([v[0], v[2], v[1]]);
        }
    }
    Ok(tris)
}

fn subdivide(mesh: &TriMesh, spec: &CellSpec) -> TriMesh {
    let c = spec.hole_center;
    let r0 = spec.hole_radius;
    let mut nodes = mesh.nodes.clone();
    let mut gamma = std::collections::HashSet::new();
    for e in &mesh.boundary_edges {
        if e.tag == BoundaryTag::Gamma {
            gamma.insert(key(e.nodes[0], e.nodes[1]));
        }
    }
    let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
        let k = key(a, b);
        if let Some(&m) = mid.get(&k) {
            return m;
        }
        let (pa, pb) = (nodes[k.0], nodes[k.1]);
        let mut p = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
        if gamma.contains(&k) {
            let d = dist(p, c);
            p = [c[0] + r0 * (p[0] - c[0]) / d, c[1] + r0 * (p[1] - c[1]) / d];
        }
        nodes.push(p);
        mid.insert(k, nodes.len() - 1);
        nodes.len() - 1
    };
    let mut triangles = Vec::with_capacity(4 * mesh.n_triangles());
    for &[a, b, cc] in &mesh.triangles {
        let ab = midpoint(a, b, &mut nodes);
        let bc = midpoint(b, cc, &mut nodes);
        let ca = midpoint(cc, a, &mut nodes);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, cc]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = mid[&key(e.nodes[0], e.nodes[1])];
        boundary_edges.push(BoundaryEdge { nodes: [e.nodes[0], m], ..*e });
        boundary_edges.push(BoundaryEdge { nodes: [m, e.nodes[1]], ..*e });
    }
    TriMesh { nodes, triangles, boundary_edges }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Pairs nodes on opposite faces orthogonal to `axis` by exact coordinate match.
fn pair_faces(mesh: &TriMesh, axis: usize) -> Result<Vec<(usize, usize)>, GeometryError> {
    let other = 1 - axis;
    let mut lo: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.nodes[i][axis] == 0.0).collect();
    let mut hi: Vec<usize> = (0..mesh.n_nodes()).filter(|&i| mesh.nodes[i][axis] == 1.0).collect();
    lo.sort_by(|&a, &b| mesh.nodes[a][other].total_cmp(&mesh.nodes[b][other]));
    hi.sort_by(|&a, &b| mesh.nodes[a][other].total_cmp(&mesh.nodes[b][other]));
    if lo.len() != hi.len() {
        return Err(GeometryError::Meshing(format!(
            "opposite faces carry {} and {} nodes",
            lo.len(),
            hi.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = lo.into_iter().zip(hi).collect();
    for &(a, b) in &pairs {
        if mesh.nodes[a][other] != mesh.nodes[b][other] {
            return Err(GeometryError::Meshing("face nodes do not match under a unit shift".into()));
        }
    }
    Ok(pairs)
}

/// Axis-aligned macroscopic rectangle `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub origin: Point,
    pub extent: Point,
}

impl Rect {
    pub fn new(origin: Point, extent: Point) -> Self {
        Rect { origin, extent }
    }

    pub fn unit() -> Self {
        Rect { origin: [0.0, 0.0], extent: [1.0, 1.0] }
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..2).all(|i| p[i] > self.origin[i] && p[i] < self.origin[i] + self.extent[i])
    }

    /// Distance from `p` to `∂Ω` for `p` inside the rectangle.
    pub fn wall_distance(&self, p: Point) -> f64 {
        (0..2)
            .map(|i| (p[i] - self.origin[i]).min(self.origin[i] + self.extent[i] - p[i]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Checks `1/ε ∈ ℕ` and returns `1/ε`.
pub fn eps_inverse(eps: f64) -> Result<u32, GeometryError> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(GeometryError::NonIntegerScale(eps));
    }
    let inv = 1.0 / eps;
    let n = inv.round();
    if n < 1.0 || (inv - n).abs() > 1e-9 * n {
        return Err(GeometryError::NonIntegerScale(eps));
    }
    Ok(n as u32)
}

/// Perforated domain `Ω_ε`, built by replicating the cell template over `K_ε`.
#[derive(Debug, Clone)]
pub struct PerforatedMesh {
    pub eps_inv: u32,
    pub eps: f64,
    pub domain: Rect,
    /// Lattice points `k ∈ K_ε`, row-major with `k₁` fastest.
    pub cells: Vec<[i64; 2]>,
    /// Lattice extent `(n₁, n₂)`.
    pub lattice: [usize; 2],
    pub mesh: TriMesh,
    pub n_template_nodes: usize,
    pub n_template_triangles: usize,
    /// `(cell, template node) → global node`, cell-major.
    local_to_global: Vec<usize>,
    /// Every `(cell, template node)` preimage of each global node.
    preimages: Vec<Vec<(usize, usize)>>,
}

impl PerforatedMesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Global node for template node `j` of cell `c`.
    pub fn global_node(&self, c: usize, j: usize) -> usize {
        self.local_to_global[c * self.n_template_nodes + j]
    }

    /// Local-to-global map of cell `c`.
    pub fn cell_nodes(&self, c: usize) -> &[usize] {
        &self.local_to_global[c * self.n_template_nodes..(c + 1) * self.n_template_nodes]
    }

    pub fn preimages(&self, node: usize) -> &[(usize, usize)] {
        &self.preimages[node]
    }

    /// First recorded `(cell, template node)` of a global node.
    pub fn cell_of_node(&self, node: usize) -> (usize, usize) {
        self.preimages[node][0]
    }

    /// Triangle `t` of the template inside cell `c`.
    pub fn triangle(&self, c: usize, t: usize) -> usize {
        c * self.n_template_triangles + t
    }

    pub fn cell_of_triangle(&self, e: usize) -> usize {
        e / self.n_template_triangles
    }

    pub fn cell_index(&self, k: [i64; 2]) -> Option<usize> {
        let o = self.cells.first()?;
        let d1 = k[0] - o[0];
        let d2 = k[1] - o[1];
        if d1 < 0 || d2 < 0 || d1 as usize >= self.lattice[0] || d2 as usize >= self.lattice[1] {
            return None;
        }
        Some(d2 as usize * self.lattice[0] + d1 as usize)
    }

    /// Cell anchor `ε(k + ½)`.
    pub fn anchor(&self, c: usize) -> Point {
        let k = self.cells[c];
        [self.eps * (k[0] as f64 + 0.5), self.eps * (k[1] as f64 + 0.5)]
    }

    /// Cells `k` with `ε(Y + k) ⊂ Ω^h = {x ∈ Ω : dist(x, ∂Ω) > h}`.
    pub fn interior_cells(&self, h: f64) -> Vec<usize> {
        let tol = 1e-12;
        (0..self.n_cells())
            .filter(|&c| {
                let k = self.cells[c];
                (0..2).all(|i| {
                    let lo = self.eps * k[i] as f64 - self.domain.origin[i];
                    let hi = self.domain.origin[i] + self.domain.extent[i] - self.eps * (k[i] + 1) as f64;
                    lo >= h - tol && hi >= h - tol
                })
            })
            .collect()
    }
}

/// Replicates `cell` over every `k ∈ K_ε` and merges shared face nodes.
pub fn build_perforated_mesh(eps: f64, cell: &CellMesh, domain: Rect) -> Result<PerforatedMesh, GeometryError> {
    let eps_inv = eps_inverse(eps)?;
    let eps = 1.0 / eps_inv as f64;
    let mut origin_k = [0i64; 2];
    let mut lattice = [0usize; 2];
    for i in 0..2 {
        let o = domain.origin[i] * eps_inv as f64;
        let n = domain.extent[i] * eps_inv as f64;
        if (o - o.round()).abs() > 1e-9 || (n - n.round()).abs() > 1e-9 || n.round() < 1.0 {
            return Err(GeometryError::IncompatibleDomain {
                eps,
                reason: format!("origin and extent along axis {i} must be positive multiples of eps"),
            });
        }
        origin_k[i] = o.round() as i64;
        lattice[i] = n.round() as usize;
    }
    let tpl = &cell.mesh;
    let nt = tpl.n_nodes();
    let left_to_right: HashMap<usize, usize> = cell.left_right.iter().copied().collect();
    let bottom_to_top: HashMap<usize, usize> = cell.bottom_top.iter().copied().collect();

    let mut cells = Vec::with_capacity(lattice[0] * lattice[1]);
    for k2 in 0..lattice[1] {
        for k1 in 0..lattice[0] {
            cells.push([origin_k[0] + k1 as i64, origin_k[1] + k2 as i64]);
        }
    }
    let mut local_to_global = vec![usize::MAX; cells.len() * nt];
    let mut nodes = Vec::new();
    let mut preimages: Vec<Vec<(usize, usize)>> = Vec::new();
    for (c, k) in cells.iter().enumerate() {
        let k1 = c % lattice[0];
        let k2 = c / lattice[0];
        for j in 0..nt {
            let shared = if k1 > 0 && left_to_right.contains_key(&j) {
                Some(local_to_global[(c - 1) * nt + left_to_right[&j]])
            } else if k2 > 0 && bottom_to_top.contains_key(&j) {
                Some(local_to_global[(c - lattice[0]) * nt + bottom_to_top[&j]])
            } else {
                None
            };
            let g = match shared {
                Some(g) => g,
                None => {
                    let y = tpl.nodes[j];
                    nodes.push([eps * (k[0] as f64 + y[0]), eps * (k[1] as f64 + y[1])]);
                    preimages.push(Vec::with_capacity(1));
                    nodes.len() - 1
                }
            };
            local_to_global[c * nt + j] = g;
            preimages[g].push((c, j));
        }
    }

    let mut triangles = Vec::with_capacity(cells.len() * tpl.n_triangles());
    for c in 0..cells.len() {
        for t in &tpl.triangles {
            triangles.push(t.map(|j| local_to_global[c * nt + j]));
        }
    }
    let mut boundary_edges = Vec::new();
    for c in 0..cells.len() {
        let k1 = c % lattice[0];
        let k2 = c / lattice[0];
        for e in &tpl.boundary_edges {
            let outer = match e.tag {
                BoundaryTag::Gamma => Some(BoundaryTag::Gamma),
                BoundaryTag::Face(Side::Left) if k1 == 0 => Some(BoundaryTag::Outer),
                BoundaryTag::Face(Side::Right) if k1 + 1 == lattice[0] => Some(BoundaryTag::Outer),
                BoundaryTag::Face(Side::Bottom) if k2 == 0 => Some(BoundaryTag::Outer),
                BoundaryTag::Face(Side::Top) if k2 + 1 == lattice[1] => Some(BoundaryTag::Outer),
                _ => None,
            };
            if let Some(tag) = outer {
                boundary_edges.push(BoundaryEdge { nodes: e.nodes.map(|j| local_to_global[c * nt + j]), tag, cell: c });
            }
        }
    }
    Ok(PerforatedMesh {
        eps_inv,
        eps,
        domain,
        cells,
        lattice,
        mesh: TriMesh { nodes, triangles, boundary_edges },
        n_template_nodes: nt,
        n_template_triangles: tpl.n_triangles(),
        local_to_global,
        preimages,
    })
}

/// Cells, elements and nodes of the interior subdomains `Ω_ε^h`, `Ω_ε^{2h}`
/// and the matching part of `Γ_ε`.
#[derive(Debug, Clone)]
pub struct SubdomainMask {
    pub h: f64,
    pub cells_h: Vec<usize>,
    pub cells_2h: Vec<usize>,
    pub elements_h: Vec<bool>,
    pub elements_2h: Vec<bool>,
    pub nodes_h: Vec<bool>,
    /// Indices into the perforated mesh's boundary edges lying on `Γ_ε^h`.
    pub gamma_edges_h: Vec<usize>,
}

impl SubdomainMask {
    pub fn is_empty(&self) -> bool {
        self.cells_h.is_empty()
    }
}

/// Masks the cells with `ε(Y + k) ⊂ Ω^h` (and `Ω^{2h}`).
pub fn interior_subdomain(mesh: &PerforatedMesh, h: f64) -> SubdomainMask {
    let cells_h = mesh.interior_cells(h);
    let cells_2h = mesh.interior_cells(2.0 * h);
    if cells_h.is_empty() {
        log::warn!("interior subdomain for h = {h} at eps = {} is empty", mesh.eps);
    }
    let cell_mask = |cells: &[usize]| {
        let mut m = vec![false; mesh.n_cells()];
        for &c in cells {
            m[c] = true;
        }
        m
    };
    let in_h = cell_mask(&cells_h);
    let in_2h = cell_mask(&cells_2h);
    let elements_h: Vec<bool> = (0..mesh.mesh.n_triangles()).map(|e| in_h[mesh.cell_of_triangle(e)]).collect();
    let elements_2h: Vec<bool> = (0..mesh.mesh.n_triangles()).map(|e| in_2h[mesh.cell_of_triangle(e)]).collect();
    let mut nodes_h = vec![false; mesh.mesh.n_nodes()];
    for &c in &cells_h {
        for &g in mesh.cell_nodes(c) {
            nodes_h[g] = true;
        }
    }
    let gamma_edges_h = mesh
        .mesh
        .boundary_edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.tag == BoundaryTag::Gamma && in_h[e.cell])
        .map(|(i, _)| i)
        .collect();
    SubdomainMask { h, cells_h, cells_2h, elements_h, elements_2h, nodes_h, gamma_edges_h }
}

/// True if template node `j` lies on the cell boundary `∂Y`.
pub fn is_face_node(cell: &CellMesh, j: usize) -> bool {
    on_face(cell.mesh.nodes[j]).is_some()
}
