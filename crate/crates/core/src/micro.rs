//! Transformed microscopic problem on the perforated domain `Ω_ε`.

use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use crate::fem::{Assembler, CsrMatrix, DofMap, Scaling};
use crate::geometry::{build_perforated_mesh, CellMesh, PerforatedMesh};
use crate::scenario::Scenario;
use crate::stepper::{SimulationError, Stepper, StepperSetup, Trajectory};
use crate::transform::Level;

#[derive(Debug, Clone)]
pub struct MicroSolution {
    pub eps: f64,
    pub mesh: Arc<PerforatedMesh>,
    pub cell: Arc<CellMesh>,
    pub trajectory: Trajectory,
    /// Hash of the scenario and `ε` that produced the run.
    pub fingerprint: String,
}

pub struct MicroSolver {
    pub eps: f64,
    pub mesh: Arc<PerforatedMesh>,
    pub cell: Arc<CellMesh>,
    stepper: Stepper,
    initial: Vec<f64>,
    fingerprint: String,
}

pub(crate) fn fingerprint(scen: &Scenario, extra: &str) -> String {
    let mut h = DefaultHasher::new();
    format!("{scen:?}|{extra}").hash(&mut h);
    format!("{:016x}", h.finish())
}

pub(crate) fn check_consistency(scen: &Scenario, cell: &CellMesh) -> Result<(), SimulationError> {
    if scen.transform.hole_radius != cell.spec.hole_radius || scen.transform.center != cell.spec.hole_center {
        return Err(SimulationError::Invalid("transform and cell disagree on the hole geometry".into()));
    }
    if !(scen.scheme.tau > 0.0) || !(scen.scheme.t_final > 0.0) {
        return Err(SimulationError::Invalid("tau and t_final must be positive".into()));
    }
    scen.transform.validate()?;
    Ok(())
}

impl MicroSolver {
    pub fn new(scen: &Scenario, cell: Arc<CellMesh>, eps: f64) -> Result<Self, SimulationError> {
        check_consistency(scen, &cell)?;
        let mesh = Arc::new(build_perforated_mesh(eps, &cell, scen.domain)?);
        let eps = mesh.eps;
        let tpl_q = Assembler::new(&cell.mesh).quadrature_points();
        let nt = mesh.n_template_triangles;
        let bulk = (0..mesh.mesh.n_triangles())
            .flat_map(|e| {
                let k = mesh.cells[e / nt];
                let t = e % nt;
                (0..3).map(move |q| (k, t, q))
            })
            .map(|(k, t, q)| (k, tpl_q[3 * t + q]))
            .collect();
        let nodes = (0..mesh.mesh.n_nodes())
            .map(|g| {
                let (c, j) = mesh.cell_of_node(g);
                (mesh.cells[c], cell.mesh.nodes[j])
            })
            .collect();
        let edge_cells: Vec<[i64; 2]> = mesh.mesh.boundary_edges.iter().map(|e| mesh.cells[e.cell]).collect();
        let surf_local = Box::new(move |e: usize, x: [f64; 2]| {
            let k = edge_cells[e];
            (k, [x[0] / eps - k[0] as f64, x[1] / eps - k[1] as f64])
        });
        let setup = StepperSetup {
            asm: Assembler::new(&mesh.mesh),
            scaling: Scaling::micro(eps),
            level: Level::Eps(eps),
            bulk,
            surf_local,
            nodes,
            dofs: DofMap::identity(mesh.mesh.n_nodes()),
            h1_factor: eps,
        };
        let stepper = Stepper::new(
            setup,
            &scen.transform,
            scen.q,
            scen.diffusion,
            scen.kinetics,
            scen.source.clone(),
            scen.scheme,
        )?;
        let initial = mesh.mesh.nodes.iter().map(|&x| scen.initial.eval(x)).collect();
        Ok(MicroSolver { eps, mesh, cell, stepper, initial, fingerprint: fingerprint(scen, &format!("micro {eps}")) })
    }

    /// Nodal interpolant of `U0` at the reference nodes.
    pub fn initial_state(&self) -> Vec<f64> {
        self.initial.clone()
    }

    pub fn assembler(&self) -> &Assembler {
        &self.stepper.asm
    }

    /// `M_J` at time `t`.
    pub fn weighted_mass(&self, t: f64) -> Result<CsrMatrix, SimulationError> {
        self.stepper.mass_at(t)
    }

    pub fn nodal_jacobian(&self, t: f64) -> Result<Vec<f64>, SimulationError> {
        Ok(self.stepper.nodal_jacobian(t)?)
    }

    /// One step from `t_m` to `t_{m+1}`.
    pub fn step_micro(&self, m: usize, u: &[f64]) -> Result<Vec<f64>, SimulationError> {
        let m_prev = self.stepper.mass_at(m as f64 * self.stepper_tau())?;
        Ok(self.stepper.step(m, u, &m_prev)?.0)
    }

    fn stepper_tau(&self) -> f64 {
        self.stepper.tau()
    }

    pub fn run(&self) -> Result<MicroSolution, SimulationError> {
        self.run_from(self.initial_state())
    }

    pub fn run_from(&self, u0: Vec<f64>) -> Result<MicroSolution, SimulationError> {
        let trajectory = self.stepper.run(u0)?;
        Ok(MicroSolution {
            eps: self.eps,
            mesh: self.mesh.clone(),
            cell: self.cell.clone(),
            trajectory,
            fingerprint: self.fingerprint.clone(),
        })
    }
}

/// Builds the template and solves on `Ω_ε`.
pub fn run_micro(scen: &Scenario, eps: f64) -> Result<MicroSolution, SimulationError> {
    MicroSolver::new(scen, scen.build_cell()?, eps)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::kinetics::{InitialProfile, KineticsSpec, Reaction};
    use crate::transform::{Amplitude, QField};

    fn small(kinetics: KineticsSpec, initial: InitialProfile, omega_max: f64) -> Scenario {
        let mut s = Scenario { domain: Rect::unit(), kinetics, initial, ..Default::default() };
        s.scheme.t_final = 0.125;
        s.transform.amplitude = if omega_max == 0.0 {
            Amplitude::Zero
        } else {
            Amplitude::Linear { omega_max, t_final: s.scheme.t_final }
        };
        s
    }

    #[test]
    fn conserves_weighted_mass_under_motion() {
        let mut s = small(KineticsSpec::default(), InitialProfile::default(), 0.05);
        s.q = QField::Constant { q: [0.3, -0.2] };
        let sol = run_micro(&s, 0.25).unwrap();
        let j0 = sol.trajectory.norms[0].jmass;
        for r in &sol.trajectory.norms {
            assert!(((r.jmass - j0) / j0).abs() < 1e-10, "{} vs {}", r.jmass, j0);
        }
        // the geometry did move
        let jt = &sol.trajectory.jacobians;
        assert!(jt.last().unwrap().iter().any(|&j| (j - 1.0).abs() > 1e-3));
    }

    #[test]
    fn uniform_constant_source() {
        let k = KineticsSpec { f: Reaction::Constant { value: 0.7 }, g: Reaction::Zero };
        let s = small(k, InitialProfile::Constant { value: 0.0 }, 0.0);
        let sol = run_micro(&s, 0.5).unwrap();
        for (m, u) in sol.trajectory.fields.iter().enumerate() {
            let expect = 0.7 * sol.trajectory.times[m];
            assert!(u.iter().all(|v| (v - expect).abs() < 1e-12));
        }
    }

    #[test]
    fn uniform_linear_decay_recurrence() {
        let lambda = 2.0;
        let k = KineticsSpec { f: Reaction::Linear { rate: -lambda }, g: Reaction::Zero };
        let s = small(k, InitialProfile::Constant { value: 1.5 }, 0.0);
        let solver = MicroSolver::new(&s, s.build_cell().unwrap(), 0.5).unwrap();
        let sol = solver.run().unwrap();
        let tau = s.scheme.tau;
        let mut expect = 1.5;
        for u in &sol.trajectory.fields {
            assert!(u.iter().all(|v| (v - expect).abs() < 1e-12));
            expect *= 1.0 - tau * lambda;
        }
        let one = solver.step_micro(0, &sol.trajectory.fields[0]).unwrap();
        assert_eq!(one, sol.trajectory.fields[1]);
    }

    #[test]
    fn uptake_decreases_weighted_mass() {
        let k = KineticsSpec { f: Reaction::Zero, g: Reaction::Monod { rate: -1.0, half_saturation: 1.0 } };
        let s = small(k, InitialProfile::Constant { value: 1.0 }, 0.05);
        let sol = run_micro(&s, 0.25).unwrap();
        for w in sol.trajectory.norms.windows(2) {
            assert!(w[1].jmass < w[0].jmass);
        }
        assert!(sol.trajectory.balance.iter().all(|&b| b < 1e-12));
    }

    #[test]
    fn fixed_point_sweeps_converge() {
        let mut s = small(Scenario::default().kinetics, InitialProfile::default(), 0.05);
        s.scheme.fixed_point_sweeps = 3;
        let sol = run_micro(&s, 0.5).unwrap();
        assert!(sol.trajectory.balance.iter().all(|&b| b < 1e-12));
    }

    #[test]
    fn rejects_hole_mismatch() {
        let mut s = small(KineticsSpec::default(), InitialProfile::default(), 0.0);
        s.transform.hole_radius = 0.2;
        assert!(matches!(run_micro(&s, 0.5), Err(SimulationError::Invalid(_))));
    }
}
