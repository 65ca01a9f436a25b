//! Physical scenario and time-discretization settings shared by all solvers.

use std::sync::Arc;

use crate::fem::SolverOptions;
use crate::geometry::{build_reference_cell, CellMesh, CellSpec, GeometryError, Rect};
use crate::kinetics::{ExternalSource, InitialProfile, KineticsSpec};
use crate::transform::{Mat2, QField, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub tau: f64,
    pub t_final: f64,
    pub solver: SolverOptions,
    /// Extra fixed-point passes re-evaluating the reactions at the new iterate.
    pub fixed_point_sweeps: usize,
    pub fixed_point_tol: f64,
}

impl SchemeOptions {
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.tau).round() as usize
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.tau
    }
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            tau: 1.0 / 64.0,
            t_final: 0.5,
            solver: SolverOptions::default(),
            fixed_point_sweeps: 0,
            fixed_point_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub cell: CellSpec,
    pub domain: Rect,
    pub transform: TransformSpec,
    pub q: QField,
    pub diffusion: Mat2,
    pub kinetics: KineticsSpec,
    pub initial: InitialProfile,
    pub scheme: SchemeOptions,
    pub source: Option<Arc<dyn ExternalSource>>,
}

impl Scenario {
    pub fn build_cell(&self) -> Result<Arc<CellMesh>, GeometryError> {
        build_reference_cell(&self.cell).map(Arc::new)
    }
}

impl Default for Scenario {
    /// Monod bulk production, Monod surface uptake, modulated shrinking holes.
    fn default() -> Self {
        use crate::kinetics::Reaction;
        use crate::transform::{Amplitude, Cutoff, Modulation, IDENTITY};
        let cell = CellSpec::default();
        let scheme = SchemeOptions::default();
        Scenario {
            transform: TransformSpec {
                center: cell.hole_center,
                hole_radius: cell.hole_radius,
                cutoff: Cutoff::default(),
                amplitude: Amplitude::Linear { omega_max: 0.05, t_final: scheme.t_final },
                modulation: Modulation::Sine { amplitude: 0.5, wavenumber: 1.0 },
            },
            cell,
            domain: Rect::new([0.0, 0.0], [3.0, 3.0]),
            q: QField::Zero,
            diffusion: IDENTITY,
            kinetics: KineticsSpec {
                f: Reaction::Monod { rate: 1.0, half_saturation: 1.0 },
                g: Reaction::Monod { rate: -1.0, half_saturation: 1.0 },
            },
            initial: InitialProfile::default(),
            scheme,
            source: None,
        }
    }
}
