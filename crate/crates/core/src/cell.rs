//! Homogenized cell problems: one evolving-coefficient periodic problem on
//! `Y*` per macroscopic sample point.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::fem::{periodic_dofmap, Assembler, Scaling};
use crate::geometry::{CellMesh, Point, Rect};
use crate::micro::check_consistency;
use crate::scenario::Scenario;
use crate::stepper::{SimulationError, Stepper, StepperSetup, Trajectory};
use crate::transform::{Level, TransformSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingKind {
    /// Cell anchors `ε(k + ½)` of a comparison `ε`.
    Anchors { eps: f64 },
    /// Centers of a uniform `n × n` grid.
    Grid { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSampling {
    pub kind: SamplingKind,
    pub points: Vec<Point>,
}

impl MacroSampling {
    /// Anchors in the order of the perforated mesh cells (`k₁` fastest).
    pub fn anchors(domain: Rect, eps: f64) -> Self {
        let n = [(domain.extent[0] / eps).round() as usize, (domain.extent[1] / eps).round() as usize];
        let k0 = [(domain.origin[0] / eps).round() as i64, (domain.origin[1] / eps).round() as i64];
        let mut points = Vec::with_capacity(n[0] * n[1]);
        for b in 0..n[1] {
            for a in 0..n[0] {
                let k = [k0[0] + a as i64, k0[1] + b as i64];
                points.push([eps * (k[0] as f64 + 0.5), eps * (k[1] as f64 + 0.5)]);
            }
        }
        MacroSampling { kind: SamplingKind::Anchors { eps }, points }
    }

    pub fn grid(domain: Rect, n: usize) -> Self {
        let mut points = Vec::with_capacity(n * n);
        for b in 0..n {
            for a in 0..n {
                points.push([
                    domain.origin[0] + domain.extent[0] * (a as f64 + 0.5) / n as f64,
                    domain.origin[1] + domain.extent[1] * (b as f64 + 0.5) / n as f64,
                ]);
            }
        }
        MacroSampling { kind: SamplingKind::Grid { n }, points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TwoScaleSolution {
    pub sampling: MacroSampling,
    pub cell: Arc<CellMesh>,
    /// One entry per sample point; points with identical data share storage.
    pub trajectories: Vec<Arc<Trajectory>>,
}

impl TwoScaleSolution {
    pub fn unique_trajectories(&self) -> usize {
        let mut ptrs: Vec<*const Trajectory> = self.trajectories.iter().map(Arc::as_ptr).collect();
        ptrs.sort();
        ptrs.dedup();
        ptrs.len()
    }
}

#[derive(Debug, Error)]
#[error("{} cell problem(s) failed; first at x = {:?}: {}", failures.len(), failures[0].1, failures[0].2)]
pub struct MacroError {
    pub failures: Vec<(usize, Point, SimulationError)>,
}

fn cell_stepper(scen: &Scenario, cell: &CellMesh, x: Point) -> Result<Stepper, SimulationError> {
    let asm = Assembler::new(&cell.mesh);
    let bulk = asm.quadrature_points().into_iter().map(|y| ([0i64, 0i64], y)).collect();
    let nodes = cell.mesh.nodes.iter().map(|&y| ([0i64, 0i64], y)).collect();
    let setup = StepperSetup {
        asm,
        scaling: Scaling::cell(),
        level: Level::Limit(x),
        bulk,
        surf_local: Box::new(|_, y| ([0, 0], y)),
        nodes,
        dofs: periodic_dofmap(cell)?,
        h1_factor: 1.0,
    };
    // the cell problem carries no prescribed external sources
    Stepper::new(setup, &scen.transform, scen.q, scen.diffusion, scen.kinetics, None, scen.scheme)
}

fn check_point(scen: &Scenario, x: Point) -> Result<(), SimulationError> {
    let d = scen.domain;
    let inside = (0..2).all(|i| x[i] > d.origin[i] && x[i] < d.origin[i] + d.extent[i]);
    if inside {
        Ok(())
    } else {
        Err(SimulationError::Invalid(format!("macro point {x:?} is not interior to the domain")))
    }
}

/// Cell trajectory at macro point `x` with constant initial value `U0(x)`.
pub fn run_cell(scen: &Scenario, cell: &CellMesh, x: Point) -> Result<Trajectory, SimulationError> {
    check_consistency(scen, cell)?;
    check_point(scen, x)?;
    let stepper = cell_stepper(scen, cell, x)?;
    stepper.run(vec![scen.initial.eval(x); cell.mesh.n_nodes()])
}

/// Bits of the data through which the cell problem depends on `x`.
fn data_key(spec: &TransformSpec, scen: &Scenario, x: Point) -> (u64, u64) {
    (spec.modulation.value(x).to_bits(), scen.initial.eval(x).to_bits())
}

/// Solves all cell problems of `sampling` in parallel.
pub fn run_macro(scen: &Scenario, cell: Arc<CellMesh>, sampling: &MacroSampling) -> Result<TwoScaleSolution, MacroError> {
    if sampling.is_empty() {
        return Err(MacroError {
            failures: vec![(0, [f64::NAN; 2], SimulationError::Invalid("empty macro sampling".into()))],
        });
    }
    let mut first_of_key: HashMap<(u64, u64), usize> = HashMap::new();
    let mut representative = Vec::with_capacity(sampling.len());
    for (i, &x) in sampling.points.iter().enumerate() {
        let r = *first_of_key.entry(data_key(&scen.transform, scen, x)).or_insert(i);
        representative.push(r);
    }
    let unique: Vec<usize> = (0..sampling.len()).filter(|&i| representative[i] == i).collect();
    let results: Vec<(usize, Result<Trajectory, SimulationError>)> =
        unique.par_iter().map(|&i| (i, run_cell(scen, &cell, sampling.points[i]))).collect();
    let mut solved: HashMap<usize, Arc<Trajectory>> = HashMap::new();
    let mut failures = Vec::new();
    for (i, r) in results {
        match r {
            Ok(t) => {
                solved.insert(i, Arc::new(t));
            }
            Err(e) => failures.push((i, sampling.points[i], e)),
        }
    }
    if !failures.is_empty() {
        return Err(MacroError { failures });
    }
    let trajectories = representative.iter().map(|r| solved[r].clone()).collect();
    Ok(TwoScaleSolution { sampling: sampling.clone(), cell, trajectories })
}

/// Cell mesh mapped by `S_0(t, x, ·)` with the nodal values carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedCell {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub values: Vec<f64>,
}

/// Pushes time level `m` of a cell trajectory forward to the evolving cell `Y(t, x)`.
pub fn push_forward(
    traj: &Trajectory,
    cell: &CellMesh,
    spec: &TransformSpec,
    x: Point,
    m: usize,
) -> Result<DeformedCell, SimulationError> {
    let t = traj.times[m];
    let nodes = cell
        .mesh
        .nodes
        .iter()
        .map(|&y| spec.eval(Level::Limit(x), t, y).map(|e| e.s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DeformedCell { nodes, triangles: cell.mesh.triangles.clone(), values: traj.fields[m].clone() })
}
