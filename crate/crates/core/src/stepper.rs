//! Implicit Euler on `J u` shared by the micro and cell solvers:
//! `(M_J^{m+1} + τA^{m+1}) u^{m+1} = M_J^m u^m + τF + τG`.

use std::sync::Arc;

use thiserror::Error;

use crate::fem::{solve_linear, AssemblyError, Assembler, CsrMatrix, DofMap, PeriodicError, Scaling, SolverError};
use crate::geometry::{BoundaryTag, GeometryError, Point};
use crate::kinetics::{ExternalSource, KineticsSpec};
use crate::scenario::SchemeOptions;
use crate::transform::{cell_coefficients, Level, Mat2, PointCoefficients, QField, TransformError, TransformSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Periodic(#[from] PeriodicError),
    #[error("linear solve failed at step {step}: {source}")]
    Solver { step: usize, source: SolverError },
    #[error("fixed-point sweep {sweep} at step {step} is not contracting (update {update:e} after {previous:e}); reduce tau")]
    NonContraction { step: usize, sweep: usize, update: f64, previous: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Quadrature or nodal sample: lattice cell and cell coordinate.
pub type Sample = ([i64; 2], Point);

/// Per-step norm record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormRow {
    pub t: f64,
    pub l2: f64,
    /// `σ‖∇u‖` with `σ = ε` on the perforated domain and 1 on the cell.
    pub eps_h1: f64,
    pub jmass: f64,
}

/// Nodal time series with per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    /// Nodal `J` at every time level.
    pub jacobians: Vec<Vec<f64>>,
    pub norms: Vec<NormRow>,
    /// `|Σ M_J^{m+1}u^{m+1} − Σ M_J^m u^m − τΣ(F + G)|` per step.
    pub balance: Vec<f64>,
}

impl Trajectory {
    /// Nodal products `J u` at time level `m`.
    pub fn weighted(&self, m: usize) -> Vec<f64> {
        self.fields[m].iter().zip(&self.jacobians[m]).map(|(u, j)| u * j).collect()
    }
}

pub(crate) struct Stepper {
    pub asm: Assembler,
    scaling: Scaling,
    level: Level,
    spec: TransformSpec,
    q: QField,
    diffusion: Mat2,
    kinetics: KineticsSpec,
    source: Option<Arc<dyn ExternalSource>>,
    bulk: Vec<Sample>,
    bulk_x: Vec<Point>,
    gamma: Vec<usize>,
    surf: Vec<Sample>,
    surf_x: Vec<Point>,
    surf_normal: Vec<Point>,
    nodes: Vec<Sample>,
    dofs: DofMap,
    opts: SchemeOptions,
    /// Plain mass and stiffness for the norm trace.
    mass: CsrMatrix,
    stiff: CsrMatrix,
    h1_factor: f64,
}

pub(crate) struct StepperSetup {
    pub asm: Assembler,
    pub scaling: Scaling,
    pub level: Level,
    pub bulk: Vec<Sample>,
    pub surf_local: Box<dyn Fn(usize, Point) -> Sample>,
    pub nodes: Vec<Sample>,
    pub dofs: DofMap,
    pub h1_factor: f64,
}

struct Levels {
    coef: Vec<PointCoefficients>,
    surf_jac: Vec<f64>,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

impl Stepper {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        setup: StepperSetup,
        spec: &TransformSpec,
        q: QField,
        diffusion: Mat2,
        kinetics: KineticsSpec,
        source: Option<Arc<dyn ExternalSource>>,
        opts: SchemeOptions,
    ) -> Result<Self, SimulationError> {
        let asm = setup.asm;
        let bulk_x = asm.quadrature_points();
        let gamma = asm.edges(BoundaryTag::Gamma)?;
        let surf_x = asm.edge_quadrature_points(&gamma);
        let surf: Vec<Sample> =
            gamma.iter().enumerate().flat_map(|(n, &e)| (0..2).map(move |q| (e, 2 * n + q))).map(|(e, i)| (setup.surf_local)(e, surf_x[i])).collect();
        let surf_normal = gamma.iter().flat_map(|&e| {
            let n = asm.edge_outer_normal(e);
            [n, n]
        }).collect();
        let mass = asm.mass();
        let stiff = asm.stiffness();
        Ok(Stepper {
            asm,
            scaling: setup.scaling,
            level: setup.level,
            spec: spec.clone(),
            q,
            diffusion,
            kinetics,
            source,
            bulk: setup.bulk,
            bulk_x,
            gamma,
            surf,
            surf_x,
            surf_normal,
            nodes: setup.nodes,
            dofs: setup.dofs,
            opts,
            mass,
            stiff,
            h1_factor: setup.h1_factor,
        })
    }

    fn levels(&self, t: f64) -> Result<Levels, TransformError> {
        let eval = |&(k, y): &Sample| cell_coefficients(&self.spec, self.level, t, k, y, &self.q, &self.diffusion);
        let coef = self.bulk.iter().map(eval).collect::<Result<Vec<_>, _>>()?;
        let surf_jac = self.surf.iter().map(|s| eval(s).map(|c| c.jac)).collect::<Result<Vec<_>, _>>()?;
        Ok(Levels { coef, surf_jac })
    }

    pub fn nodal_jacobian(&self, t: f64) -> Result<Vec<f64>, TransformError> {
        self.nodes
            .iter()
            .map(|&(k, y)| cell_coefficients(&self.spec, self.level, t, k, y, &self.q, &self.diffusion).map(|c| c.jac))
            .collect()
    }

    fn weighted_mass(&self, lv: &Levels) -> Result<CsrMatrix, AssemblyError> {
        let w: Vec<f64> = lv.coef.iter().map(|c| c.jac).collect();
        self.asm.weighted_mass(&w)
    }

    /// `τ(F + G)` evaluated at the nodal state `u` with the weights of `lv`.
    fn reactions(&self, lv: &Levels, t: f64, u: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        let uq = self.asm.interpolate_at_quadrature(u);
        let fq: Vec<f64> = uq
            .iter()
            .zip(&lv.coef)
            .zip(&self.bulk_x)
            .map(|((&u, c), &x)| {
                let s = self.source.as_ref().map_or(0.0, |s| s.bulk(t, x));
                c.jac * (self.kinetics.f.eval(u) + s)
            })
            .collect();
        let mut b = self.asm.load(&fq)?;
        let ug = self.asm.interpolate_at_edges(&self.gamma, u);
        let gq: Vec<f64> = ug
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let s = self.source.as_ref().map_or(0.0, |s| s.surface(t, self.surf_x[i], self.surf_normal[i]));
                lv.surf_jac[i] * (self.kinetics.g.eval(u) + s)
            })
            .collect();
        let g = self.asm.surface_load(&self.gamma, &gq, self.scaling.surface)?;
        for (bi, gi) in b.iter_mut().zip(&g) {
            *bi = self.opts.tau * (*bi + gi);
        }
        Ok(b)
    }

    fn norms(&self, t: f64, u: &[f64], m_j: &CsrMatrix) -> NormRow {
        NormRow {
            t,
            l2: self.mass.bilinear(u, u).max(0.0).sqrt(),
            eps_h1: self.h1_factor * self.stiff.bilinear(u, u).max(0.0).sqrt(),
            jmass: m_j.mul_vec(u).iter().sum(),
        }
    }

    pub fn tau(&self) -> f64 {
        self.opts.tau
    }

    /// J-weighted mass matrix at time `t`.
    pub fn mass_at(&self, t: f64) -> Result<CsrMatrix, SimulationError> {
        Ok(self.weighted_mass(&self.levels(t)?)?)
    }

    /// Advances `u` from `t_m` to `t_{m+1}`; `m_prev` is `M_J` at `t_m`.
    /// Returns the new state, `M_J` at `t_{m+1}` and the balance residual.
    pub fn step(&self, m: usize, u: &[f64], m_prev: &CsrMatrix) -> Result<(Vec<f64>, CsrMatrix, f64), SimulationError> {
        let tau = self.opts.tau;
        let t = self.opts.time(m + 1);
        let lv = self.levels(t)?;
        let m_next = self.weighted_mass(&lv)?;
        let mut sys = self.asm.transport(&lv.coef, self.scaling)?;
        let sym = sys.symmetric;
        for v in sys.values.iter_mut() {
            *v *= tau;
        }
        sys.add_scaled(&m_next, 1.0);
        sys.symmetric = sym;
        let reduced = self.dofs.reduce_matrix(&sys);
        let row_sums = reduced.row_sums();
        let history = m_prev.mul_vec(u);

        let solve = |react: &[f64], guess: &[f64]| -> Result<Vec<f64>, SimulationError> {
            let rhs: Vec<f64> = history.iter().zip(react).map(|(a, b)| a + b).collect();
            let rhs_r = self.dofs.restrict(&rhs);
            let guess_r = self.dofs.average(guess);
            // lumped predictor; exact for spatially uniform states
            let x0: Vec<f64> = rhs_r
                .iter()
                .zip(&row_sums)
                .zip(&guess_r)
                .map(|((b, s), g)| if *s > 0.0 { b / s } else { *g })
                .collect();
            let (x, _) = solve_linear(&reduced, &rhs_r, Some(&x0), &self.opts.solver)
                .map_err(|source| SimulationError::Solver { step: m + 1, source })?;
            Ok(self.dofs.prolong(&x))
        };

        let mut react = self.reactions(&lv, t, u)?;
        let mut next = solve(&react, u)?;
        let mut previous = max_abs_diff(&next, u);
        for sweep in 1..=self.opts.fixed_point_sweeps {
            if sweep > 1 && previous <= self.opts.fixed_point_tol {
                break;
            }
            let r = self.reactions(&lv, t, &next)?;
            let cand = solve(&r, &next)?;
            let update = max_abs_diff(&cand, &next);
            if sweep > 1 && update > previous {
                return Err(SimulationError::NonContraction { step: m + 1, sweep, update, previous });
            }
            react = r;
            next = cand;
            previous = update;
        }
        let before: f64 = history.iter().sum();
        let after: f64 = m_next.mul_vec(&next).iter().sum();
        let source: f64 = react.iter().sum();
        Ok((next, m_next, (after - before - source).abs()))
    }

    /// Runs the full trajectory from the nodal initial state `u0`.
    pub fn run(&self, u0: Vec<f64>) -> Result<Trajectory, SimulationError> {
        let n_steps = self.opts.n_steps();
        let mut m_prev = self.mass_at(0.0)?;
        let mut u = self.dofs.project(&u0);
        let mut traj = Trajectory {
            times: vec![0.0],
            fields: vec![u.clone()],
            jacobians: vec![self.nodal_jacobian(0.0)?],
            norms: vec![self.norms(0.0, &u, &m_prev)],
            balance: Vec::with_capacity(n_steps),
        };
        for m in 0..n_steps {
            let t = self.opts.time(m + 1);
            let (next, m_next, balance) = self.step(m, &u, &m_prev)?;
            traj.balance.push(balance);
            u = next;
            m_prev = m_next;
            traj.times.push(t);
            traj.norms.push(self.norms(t, &u, &m_prev));
            traj.jacobians.push(self.nodal_jacobian(t)?);
            traj.fields.push(u.clone());
        }
        Ok(traj)
    }
}
