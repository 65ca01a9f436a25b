//! Discrete periodic unfolding on replicated meshes, its adjoint (averaging),
//! the operator identities and two-scale error norms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cell::{SamplingKind, TwoScaleSolution};
use crate::fem::assembly::Element;
use crate::fem::{solve_linear, Assembler, CsrMatrix, Method, SolverOptions};
use crate::geometry::{BoundaryTag, CellMesh, PerforatedMesh};
use crate::micro::MicroSolution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnfoldingError {
    #[error("field has {got} values, mesh has {expected} nodes")]
    FieldLength { expected: usize, got: usize },
    #[error("unfolded field shape {got:?} does not match {expected:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },
    #[error("macro sampling is not the anchor set of eps = {0}")]
    Sampling(f64),
    #[error("time grids differ")]
    TimeGrid,
    #[error("averaging solve failed: {0}")]
    Solve(String),
}

/// Values indexed by (macro cell, template node), cell-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedField {
    pub eps: f64,
    pub n_cells: usize,
    pub n_template: usize,
    pub values: Vec<f64>,
}

impl UnfoldedField {
    pub fn slice(&self, c: usize) -> &[f64] {
        &self.values[c * self.n_template..(c + 1) * self.n_template]
    }

    /// Tiles a template field over all cells.
    pub fn tiled(eps: f64, n_cells: usize, template: &[f64]) -> Self {
        let values = (0..n_cells).flat_map(|_| template.iter().copied()).collect();
        UnfoldedField { eps, n_cells, n_template: template.len(), values }
    }
}

/// Template matrices used by the discrete pairings.
#[derive(Debug, Clone)]
pub struct TemplateOperators {
    pub mass: CsrMatrix,
    pub gamma_mass: CsrMatrix,
    pub stiffness: CsrMatrix,
}

impl TemplateOperators {
    pub fn new(cell: &CellMesh) -> Self {
        let asm = Assembler::new(&cell.mesh);
        let gamma = asm.edges(BoundaryTag::Gamma).expect("template has a hole");
        let gamma_mass = asm.boundary_mass(&gamma, &vec![1.0; 2 * gamma.len()]).expect("sizes match");
        TemplateOperators { mass: asm.mass(), gamma_mass, stiffness: asm.stiffness() }
    }
}

/// `T_ε u`: exact relabeling by the cell-local preimages.
pub fn unfold(mesh: &PerforatedMesh, field: &[f64]) -> Result<UnfoldedField, UnfoldingError> {
    if field.len() != mesh.mesh.n_nodes() {
        return Err(UnfoldingError::FieldLength { expected: mesh.mesh.n_nodes(), got: field.len() });
    }
    let values = (0..mesh.n_cells()).flat_map(|c| mesh.cell_nodes(c).iter().map(|&g| field[g])).collect();
    Ok(UnfoldedField { eps: mesh.eps, n_cells: mesh.n_cells(), n_template: mesh.n_template_nodes, values })
}

/// `Σ_c s · P_cᵀ A P_c`: a template matrix scattered over all cells.
pub fn scatter_template(mesh: &PerforatedMesh, a: &CsrMatrix, scale: f64) -> CsrMatrix {
    let mut t = Vec::with_capacity(a.nnz() * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let map = mesh.cell_nodes(c);
        for i in 0..a.n_rows {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                t.push((map[i], map[a.col_idx[p]], scale * a.values[p]));
            }
        }
    }
    let mut m = CsrMatrix::from_triplets(mesh.mesh.n_nodes(), mesh.mesh.n_nodes(), t);
    m.symmetric = a.symmetric;
    m
}

/// `Σ_c s · x_cᵀ A y_c` over unfolded fields.
pub fn unfolded_pairing(a: &CsrMatrix, x: &UnfoldedField, y: &UnfoldedField, scale: f64) -> f64 {
    (0..x.n_cells).map(|c| scale * a.bilinear(x.slice(c), y.slice(c))).sum()
}

/// Averaging operator `U_ε`, the adjoint of [`unfold`] for the template-mass pairings.
pub struct Averaging<'a> {
    mesh: &'a PerforatedMesh,
    tpl_mass: CsrMatrix,
    global_mass: CsrMatrix,
}

impl<'a> Averaging<'a> {
    pub fn new(mesh: &'a PerforatedMesh, ops: &TemplateOperators) -> Self {
        let e2 = mesh.eps * mesh.eps;
        Averaging { mesh, tpl_mass: ops.mass.clone(), global_mass: scatter_template(mesh, &ops.mass, e2) }
    }

    pub fn global_mass(&self) -> &CsrMatrix {
        &self.global_mass
    }

    pub fn average(&self, uf: &UnfoldedField) -> Result<Vec<f64>, UnfoldingError> {
        let expected = (self.mesh.n_cells(), self.mesh.n_template_nodes);
        if (uf.n_cells, uf.n_template) != expected {
            return Err(UnfoldingError::Shape { expected, got: (uf.n_cells, uf.n_template) });
        }
        let e2 = self.mesh.eps * self.mesh.eps;
        let mut rhs = vec![0.0; self.mesh.mesh.n_nodes()];
        for c in 0..uf.n_cells {
            let local = self.tpl_mass.mul_vec(uf.slice(c));
            for (j, &g) in self.mesh.cell_nodes(c).iter().enumerate() {
                rhs[g] += e2 * local[j];
            }
        }
        let opts = SolverOptions { tol: 1e-15, max_iter: 10_000, method: Method::Cg };
        match solve_linear(&self.global_mass, &rhs, None, &opts) {
            Ok((x, _)) => Ok(x),
            // roundoff floor: accept the best iterate if it is already tight
            Err(crate::fem::SolverError::Diverged { last, .. }) if last < 1e-13 => {
                let loose = SolverOptions { tol: 1e-13, ..opts };
                solve_linear(&self.global_mass, &rhs, None, &loose)
                    .map(|(x, _)| x)
                    .map_err(|e| UnfoldingError::Solve(e.to_string()))
            }
            Err(e) => Err(UnfoldingError::Solve(e.to_string())),
        }
    }
}

/// Max over elements of `|∇_y(T_ε u)|_element − ε(∇u)|_element|`, relative to
/// `max(1, max |∇_y(T_ε u)|)`.
pub fn gradient_identity_check(mesh: &PerforatedMesh, cell: &CellMesh, field: &[f64]) -> Result<f64, UnfoldingError> {
    let uf = unfold(mesh, field)?;
    let tpl: Vec<Element> = (0..cell.mesh.n_triangles()).map(|t| Element::new(cell.mesh.triangle_coords(t))).collect();
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for c in 0..mesh.n_cells() {
        let slice = uf.slice(c);
        for (t, te) in tpl.iter().enumerate() {
            let e = mesh.triangle(c, t);
            let ge = Element::new(mesh.mesh.triangle_coords(e));
            let tri_t = cell.mesh.triangles[t];
            let tri_g = mesh.mesh.triangles[e];
            for d in 0..2 {
                let gy: f64 = (0..3).map(|a| te.grads[a][d] * slice[tri_t[a]]).sum();
                let gx: f64 = (0..3).map(|a| ge.grads[a][d] * field[tri_g[a]]).sum();
                worst = worst.max((gy - mesh.eps * gx).abs());
                scale = scale.max(gy.abs());
            }
        }
    }
    Ok(worst / scale)
}

/// Residuals of the discrete operator identities on random fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorResiduals {
    pub eps: f64,
    pub adjointness: f64,
    pub isometry: f64,
    pub boundary_isometry: f64,
    pub gradient: f64,
    pub left_inverse: f64,
    pub time_difference: f64,
}

impl OperatorResiduals {
    pub fn max(&self) -> f64 {
        [self.adjointness, self.isometry, self.boundary_isometry, self.gradient, self.left_inverse, self.time_difference]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Checks adjointness, both isometries, `U_ε∘T_ε = I`, the gradient identity and
/// commuting with time differences. Pairing residuals are relative to the
/// magnitude of the pairing.
pub fn verify_operators(mesh: &PerforatedMesh, cell: &CellMesh, seed: u64) -> Result<OperatorResiduals, UnfoldingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = mesh.mesh.n_nodes();
    let mut random = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let u = random(n);
    let v = random(n);
    let w = random(n);
    let phi = UnfoldedField { eps: mesh.eps, n_cells: mesh.n_cells(), n_template: mesh.n_template_nodes, values: random(mesh.n_cells() * mesh.n_template_nodes) };
    let ops = TemplateOperators::new(cell);
    let avg = Averaging::new(mesh, &ops);
    let e2 = mesh.eps * mesh.eps;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);

    let tu = unfold(mesh, &u)?;
    let tv = unfold(mesh, &v)?;
    let u_phi = avg.average(&phi)?;
    let lhs = unfolded_pairing(&ops.mass, &tu, &phi, e2);
    let rhs = avg.global_mass().bilinear(&u, &u_phi);
    let adjointness = rel(lhs, rhs);

    let isometry = rel(unfolded_pairing(&ops.mass, &tu, &tv, e2), avg.global_mass().bilinear(&u, &v));

    let gamma_global = scatter_template(mesh, &ops.gamma_mass, mesh.eps);
    let boundary_isometry = rel(
        unfolded_pairing(&ops.gamma_mass, &tu, &tv, e2) / mesh.eps,
        gamma_global.bilinear(&u, &v),
    );

    let back = avg.average(&tu)?;
    let left_inverse = back.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let gradient = gradient_identity_check(mesh, cell, &u)?;

    let diff: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a - b).collect();
    let td = unfold(mesh, &diff)?;
    let tw = unfold(mesh, &w)?;
    let time_difference = td
        .values
        .iter()
        .zip(tw.values.iter().zip(&tu.values))
        .map(|(d, (a, b))| (d - (a - b)).abs())
        .fold(0.0, f64::max);
    Ok(OperatorResiduals { eps: mesh.eps, adjointness, isometry, boundary_isometry, gradient, left_inverse, time_difference })
}

/// Two-scale errors between a micro run and the cell problems at its anchors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEntry {
    pub eps: f64,
    pub e_bulk: f64,
    pub e_surf: f64,
    pub e_jweighted: f64,
}

pub fn two_scale_error(micro: &MicroSolution, macro_sol: &TwoScaleSolution) -> Result<ErrorEntry, UnfoldingError> {
    let mesh = &micro.mesh;
    match macro_sol.sampling.kind {
        SamplingKind::Anchors { eps } if (eps - mesh.eps).abs() < 1e-14 && macro_sol.trajectories.len() == mesh.n_cells() => {}
        _ => return Err(UnfoldingError::Sampling(mesh.eps)),
    }
    let times = &micro.trajectory.times;
    if macro_sol.trajectories.iter().any(|t| t.times != *times) {
        return Err(UnfoldingError::TimeGrid);
    }
    let ops = TemplateOperators::new(&macro_sol.cell);
    let e2 = mesh.eps * mesh.eps;
    let (mut eb, mut es, mut ej) = (0.0, 0.0, 0.0);
    let nt = mesh.n_template_nodes;
    let mut d = vec![0.0; nt];
    let mut dj = vec![0.0; nt];
    for m in 1..times.len() {
        let tau = times[m] - times[m - 1];
        let tu = unfold(mesh, &micro.trajectory.fields[m])?;
        let tw = unfold(mesh, &micro.trajectory.weighted(m))?;
        for c in 0..mesh.n_cells() {
            let cell_t = &macro_sol.trajectories[c];
            let u0 = &cell_t.fields[m];
            let j0 = &cell_t.jacobians[m];
            for j in 0..nt {
                d[j] = tu.slice(c)[j] - u0[j];
                dj[j] = tw.slice(c)[j] - j0[j] * u0[j];
            }
            eb += tau * e2 * ops.mass.bilinear(&d, &d);
            es += tau * e2 * ops.gamma_mass.bilinear(&d, &d);
            ej += tau * e2 * ops.mass.bilinear(&dj, &dj);
        }
    }
    Ok(ErrorEntry { eps: mesh.eps, e_bulk: eb.sqrt(), e_surf: es.sqrt(), e_jweighted: ej.sqrt() })
}
