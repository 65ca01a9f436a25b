//! Versioned TOML run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{Method, SolverOptions};
use crate::geometry::{eps_inverse, CellSpec, Point, Rect};
use crate::kinetics::{InitialProfile, KineticsSpec, Reaction};
use crate::scenario::{Scenario, SchemeOptions};
use crate::transform::{Amplitude, Cutoff, Modulation, QField, TransformSpec, IDENTITY};
use crate::verify::SweepConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub hole_radius: f64,
    pub refine_level: usize,
    pub base_spacing: f64,
    pub min_angle_deg: f64,
    pub domain_origin: Point,
    pub domain_extent: Point,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let c = CellSpec::default();
        GeometryConfig {
            hole_radius: c.hole_radius,
            refine_level: c.refine_level,
            base_spacing: c.base_spacing,
            min_angle_deg: c.min_angle_deg,
            domain_origin: [0.0, 0.0],
            domain_extent: [3.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformConfig {
    /// Final amplitude of the linear ramp `a(t)`; 0 freezes the geometry.
    pub omega_max: f64,
    pub modulation: Modulation,
    pub cutoff: Cutoff,
    pub q: QField,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            omega_max: 0.05,
            modulation: Modulation::Sine { amplitude: 0.5, wavenumber: 1.0 },
            cutoff: Cutoff::default(),
            q: QField::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticsConfig {
    pub f: Reaction,
    pub g: Reaction,
    pub initial: InitialProfile,
}

impl Default for KineticsConfig {
    fn default() -> Self {
        let s = Scenario::default();
        KineticsConfig { f: s.kinetics.f, g: s.kinetics.g, initial: s.initial }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscretizationConfig {
    pub tau: f64,
    pub t_final: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub fixed_point_sweeps: usize,
    pub fixed_point_tol: f64,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        let s = SchemeOptions::default();
        DiscretizationConfig {
            tau: s.tau,
            t_final: s.t_final,
            solver_tol: s.solver.tol,
            solver_max_iter: s.solver.max_iter,
            fixed_point_sweeps: s.fixed_point_sweeps,
            fixed_point_tol: s.fixed_point_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub eps: Vec<f64>,
    pub shifts: Vec<[i64; 2]>,
    pub h: f64,
    pub timing: bool,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        SweepSection { eps: s.eps_list, shifts: s.shifts, h: s.h, timing: s.timing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// `ε` of single runs (run-micro, verify-operators, export).
    pub eps: f64,
    /// Macro sampling for run-macro: 0 uses the ε anchors, n > 0 an n × n grid.
    pub macro_grid: usize,
    /// Field snapshot interval in steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Per-side sample count of the transform validator.
    pub validation_samples: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { eps: 0.25, macro_grid: 0, snapshot_every: 8, validation_samples: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub run_id: String,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub geometry: GeometryConfig,
    pub transform: TransformConfig,
    pub kinetics: KineticsConfig,
    pub discretization: DiscretizationConfig,
    pub sweep: SweepSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            run_id: "default".into(),
            output_dir: PathBuf::from("out"),
            threads: 0,
            geometry: Default::default(),
            transform: Default::default(),
            kinetics: Default::default(),
            discretization: Default::default(),
            sweep: Default::default(),
            run: Default::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    /// Complete configuration with all defaults filled in.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn cell_spec(&self) -> CellSpec {
        let g = &self.geometry;
        CellSpec {
            hole_radius: g.hole_radius,
            refine_level: g.refine_level,
            base_spacing: g.base_spacing,
            min_angle_deg: g.min_angle_deg,
            ..CellSpec::default()
        }
    }

    pub fn domain(&self) -> Rect {
        Rect::new(self.geometry.domain_origin, self.geometry.domain_extent)
    }

    pub fn scheme(&self) -> SchemeOptions {
        let d = &self.discretization;
        SchemeOptions {
            tau: d.tau,
            t_final: d.t_final,
            solver: SolverOptions { tol: d.solver_tol, max_iter: d.solver_max_iter, method: Method::Auto },
            fixed_point_sweeps: d.fixed_point_sweeps,
            fixed_point_tol: d.fixed_point_tol,
        }
    }

    pub fn transform_spec(&self) -> TransformSpec {
        let cell = self.cell_spec();
        let t = &self.transform;
        TransformSpec {
            center: cell.hole_center,
            hole_radius: cell.hole_radius,
            cutoff: t.cutoff,
            amplitude: if t.omega_max == 0.0 {
                Amplitude::Zero
            } else {
                Amplitude::Linear { omega_max: t.omega_max, t_final: self.discretization.t_final }
            },
            modulation: t.modulation,
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            cell: self.cell_spec(),
            domain: self.domain(),
            transform: self.transform_spec(),
            q: self.transform.q,
            diffusion: IDENTITY,
            kinetics: KineticsSpec { f: self.kinetics.f, g: self.kinetics.g },
            initial: self.kinetics.initial,
            scheme: self.scheme(),
            source: None,
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            eps_list: self.sweep.eps.clone(),
            shifts: self.sweep.shifts.clone(),
            h: self.sweep.h,
            threads: self.threads,
            timing: self.sweep.timing,
        }
    }

    /// Collects every violation instead of stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            errs.push(format!("run_id {:?} must be a non-empty plain name", self.run_id));
        }
        if let Err(e) = self.cell_spec().validate() {
            errs.push(format!("geometry: {e}"));
        }
        let g = &self.geometry;
        if !(g.domain_extent[0] > 0.0 && g.domain_extent[1] > 0.0) {
            errs.push("geometry: domain_extent must be positive".into());
        }
        let check_eps = |what: &str, eps: f64, errs: &mut Vec<String>| {
            if let Err(e) = eps_inverse(eps) {
                errs.push(format!("{what}: {e}"));
                return;
            }
            for i in 0..2 {
                for (name, v) in [("domain_origin", g.domain_origin[i]), ("domain_extent", g.domain_extent[i])] {
                    let r = v / eps;
                    if (r - r.round()).abs() > 1e-9 {
                        errs.push(format!("{what}: geometry.{name} = {v} is not a multiple of eps = {eps}"));
                    }
                }
            }
        };
        if self.sweep.eps.is_empty() {
            errs.push("sweep: eps list is empty".into());
        }
        for &e in &self.sweep.eps {
            check_eps("sweep.eps", e, &mut errs);
        }
        check_eps("run.eps", self.run.eps, &mut errs);
        if !(self.sweep.h > 0.0) {
            errs.push(format!("sweep: h = {} must be positive", self.sweep.h));
        }
        if self.sweep.shifts.iter().any(|s| s == &[0, 0]) {
            errs.push("sweep: the zero shift is not allowed".into());
        }
        let d = &self.discretization;
        if !(d.tau > 0.0 && d.t_final > 0.0) {
            errs.push(format!("discretization: tau = {} and t_final = {} must be positive", d.tau, d.t_final));
        } else {
            let n = d.t_final / d.tau;
            if (n - n.round()).abs() > 1e-9 {
                errs.push(format!("discretization: t_final / tau = {n} is not an integer"));
            }
        }
        if !(d.solver_tol > 0.0) || d.solver_max_iter == 0 {
            errs.push("discretization: solver_tol and solver_max_iter must be positive".into());
        }
        for (name, r) in [("f", self.kinetics.f), ("g", self.kinetics.g)] {
            if let Err(e) = r.validate() {
                errs.push(format!("kinetics.{name}: {e}"));
            }
        }
        let lip = KineticsSpec { f: self.kinetics.f, g: self.kinetics.g }.lipschitz();
        if !(d.tau * lip < 1.0) {
            errs.push(format!("discretization: tau * Lip(f, g) = {} must be below 1", d.tau * lip));
        }
        if let Err(e) = self.transform_spec().validate() {
            errs.push(format!("transform: {e}"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn invalid(text: &str) -> Vec<String> {
        match RunConfig::from_toml(text) {
            Err(ConfigError::Invalid(v)) => v,
            other => panic!("expected violations, got {other:?}"),
        }
    }

    #[test]
    fn minimal_file_fills_defaults_and_round_trips() {
        let cfg = RunConfig::from_toml("schema_version = 1\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let echo = cfg.echo();
        assert_eq!(RunConfig::from_toml(&echo).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml(&echo).unwrap().echo(), echo);
    }

    #[test]
    fn default_scenario_matches_library_default() {
        let s = RunConfig::default().scenario();
        let d = Scenario::default();
        assert_eq!(format!("{s:?}"), format!("{d:?}"));
    }

    #[test]
    fn non_integer_inverse_eps_rejected() {
        let v = invalid("schema_version = 1\n[sweep]\neps = [0.5, 0.3]\n");
        assert!(v.iter().any(|e| e.contains("0.3")), "{v:?}");
    }

    #[test]
    fn large_step_against_lipschitz_rejected() {
        let text = "schema_version = 1\n[discretization]\ntau = 1.0\nt_final = 1.0\n[kinetics]\nf = { kind = \"linear\", rate = -2.0 }\n";
        let v = invalid(text);
        assert!(v.iter().any(|e| e.contains("Lip")), "{v:?}");
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(matches!(RunConfig::from_toml("schema_version = 1\nthreadz = 2\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml("[geometry]\nradius = 0.2\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn violations_are_aggregated() {
        let text = "schema_version = 2\n[sweep]\neps = [0.3]\nh = -1.0\n[discretization]\ntau = 0.3\nt_final = 1.0\n";
        let v = invalid(text);
        assert!(v.len() >= 4, "{v:?}");
    }

    #[test]
    fn frozen_geometry_uses_zero_amplitude() {
        let cfg = RunConfig::from_toml("schema_version = 1\n[transform]\nomega_max = 0.0\n").unwrap();
        assert_eq!(cfg.transform_spec().amplitude, Amplitude::Zero);
    }
}
