//! Manufactured solution `u* = (1 + t) cos(πx₁) cos(πx₂)` on a fixed perforated geometry.
//!
//! Linear growth in time is integrated exactly by implicit Euler, so the
//! measured error is the spatial discretization error alone.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::fem::quadrature::{map_bary, TRI7};
use crate::geometry::{CellSpec, Point, Rect, TriMesh};
use crate::kinetics::{ExternalSource, InitialProfile, KineticsSpec, Reaction};
use crate::micro::MicroSolver;
use crate::scenario::Scenario;
use crate::stepper::SimulationError;
use crate::transform::{Amplitude, Modulation};

pub fn exact(t: f64, x: Point) -> f64 {
    (1.0 + t) * (PI * x[0]).cos() * (PI * x[1]).cos()
}

fn gradient(t: f64, x: Point) -> Point {
    let (s1, c1) = (PI * x[0]).sin_cos();
    let (s2, c2) = (PI * x[1]).sin_cos();
    [-(1.0 + t) * PI * s1 * c2, -(1.0 + t) * PI * c1 * s2]
}

/// Sources that make [`exact`] solve the micro problem with `D = I`, no transport and no kinetics.
#[derive(Debug, Clone, Copy)]
pub struct ManufacturedSource {
    pub eps: f64,
}

impl ExternalSource for ManufacturedSource {
    fn bulk(&self, t: f64, x: Point) -> f64 {
        let phi = (PI * x[0]).cos() * (PI * x[1]).cos();
        phi + 2.0 * PI * PI * self.eps * self.eps * (1.0 + t) * phi
    }

    fn surface(&self, t: f64, x: Point, normal: Point) -> f64 {
        let g = gradient(t, x);
        self.eps * (g[0] * normal[0] + g[1] * normal[1])
    }
}

/// `‖u_h − u‖_{L²}` with a degree-5 rule.
pub fn l2_error(mesh: &TriMesh, uh: &[f64], u: impl Fn(Point) -> f64) -> f64 {
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let coords = mesh.triangle_coords(t);
        let area = mesh.signed_area(t);
        for (bary, w) in TRI7.iter() {
            let v: f64 = (0..3).map(|a| bary[a] * uh[tri[a]]).sum();
            let d = v - u(map_bary(&coords, bary));
            sum += w * area * d * d;
        }
    }
    sum.sqrt()
}

pub fn scenario(eps: f64, refine_level: usize) -> Scenario {
    let mut s = Scenario::default();
    s.cell = CellSpec { refine_level, ..s.cell };
    s.domain = Rect::unit();
    s.transform.amplitude = Amplitude::Zero;
    s.transform.modulation = Modulation::Uniform;
    s.kinetics = KineticsSpec { f: Reaction::Zero, g: Reaction::Zero };
    s.initial = InitialProfile::Cosine { value: 0.0, amplitude: 1.0 };
    s.scheme.t_final = 0.25;
    s.scheme.tau = 1.0 / 16.0;
    s.source = Some(Arc::new(ManufacturedSource { eps }));
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsRow {
    pub refine_level: usize,
    pub n_nodes: usize,
    pub error: f64,
}

/// Final-time `L²` errors for each template refinement level.
pub fn mms_study(eps: f64, levels: &[usize]) -> Result<Vec<MmsRow>, SimulationError> {
    levels
        .iter()
        .map(|&level| {
            let s = scenario(eps, level);
            let cell = s.build_cell()?;
            let sol = MicroSolver::new(&s, cell, eps)?.run()?;
            let t = *sol.trajectory.times.last().expect("non-empty");
            let u = sol.trajectory.fields.last().expect("non-empty");
            Ok(MmsRow { refine_level: level, n_nodes: sol.mesh.mesh.n_nodes(), error: l2_error(&sol.mesh.mesh, u, |x| exact(t, x)) })
        })
        .collect()
}

/// `log₂(e_l / e_{l+1})` for consecutive levels.
pub fn observed_orders(rows: &[MmsRow]) -> Vec<f64> {
    rows.windows(2).map(|w| (w[0].error / w[1].error).log2()).collect()
}
