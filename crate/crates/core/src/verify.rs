//! Energy norms, shift differences and the ε-sweep convergence study.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::cell::{run_macro, MacroSampling};
use crate::geometry::{interior_subdomain, CellMesh, PerforatedMesh};
use crate::micro::{MicroSolution, MicroSolver};
use crate::scenario::Scenario;
use crate::unfolding::{scatter_template, two_scale_error, ErrorEntry, TemplateOperators};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("shift {shift:?} at eps = {eps}: {reason}")]
    ShiftPrecondition { shift: [i64; 2], eps: f64, reason: String },
    #[error("fit needs at least two distinct shift lengths")]
    DegenerateFit,
    #[error("{0}")]
    Run(String),
}

/// Energy norms of one micro trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub eps: f64,
    /// `max_m ‖u^m‖`.
    pub max_l2: f64,
    /// `(Σ_m τ ‖u^m‖²_{H_ε})^{1/2}` over `m ≥ 1`.
    pub heps_norm: f64,
    pub max_l2_weighted: f64,
    pub heps_norm_weighted: f64,
    /// Largest per-step mass-balance residual.
    pub jmass_drift: f64,
}

fn heps_sq(mass: &crate::fem::CsrMatrix, stiff: &crate::fem::CsrMatrix, eps: f64, v: &[f64]) -> (f64, f64) {
    let l2 = mass.bilinear(v, v);
    (l2, l2 + eps * eps * stiff.bilinear(v, v))
}

pub fn energy_norms(sol: &MicroSolution) -> EnergyRow {
    let traj = &sol.trajectory;
    let eps = sol.eps;
    let ops = TemplateOperators::new(&sol.cell);
    let mass = scatter_template(&sol.mesh, &ops.mass, eps * eps);
    let stiff = scatter_template(&sol.mesh, &ops.stiffness, 1.0);
    let (mut max_l2, mut max_w, mut h, mut hw) = (0.0f64, 0.0f64, 0.0, 0.0);
    for m in 0..traj.times.len() {
        let (l2u, hu) = heps_sq(&mass, &stiff, eps, &traj.fields[m]);
        let (l2w, hwm) = heps_sq(&mass, &stiff, eps, &traj.weighted(m));
        max_l2 = max_l2.max(l2u.sqrt());
        max_w = max_w.max(l2w.sqrt());
        if m > 0 {
            let tau = traj.times[m] - traj.times[m - 1];
            h += tau * hu;
            hw += tau * hwm;
        }
    }
    EnergyRow {
        eps,
        max_l2,
        heps_norm: h.sqrt(),
        max_l2_weighted: max_w,
        heps_norm_weighted: hw.sqrt(),
        jmass_drift: traj.balance.iter().copied().fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftRow {
    pub shift: [i64; 2],
    pub h: f64,
    /// `|ℓε|`.
    pub length: f64,
    /// `‖δ(Ju)‖` in `L²((0,T), H_ε)` over the `2h` mask.
    pub norm: f64,
    /// `√T ‖δ(J(0)u⁰)‖_{H_ε}` over the same mask: the initial shift frozen in time.
    pub initial: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftTable {
    pub eps: f64,
    pub h: f64,
    pub n_cells: usize,
    pub rows: Vec<ShiftRow>,
}

/// Pairs `(c, c + ℓ)` over the `2h` cells; errors if a shifted cell leaves `Ω_ε^h`.
pub fn shifted_cells(mesh: &PerforatedMesh, shift: [i64; 2], h: f64) -> Result<Vec<(usize, usize)>, VerifyError> {
    let err = |reason: String| VerifyError::ShiftPrecondition { shift, eps: mesh.eps, reason };
    let len = mesh.eps * ((shift[0] * shift[0] + shift[1] * shift[1]) as f64).sqrt();
    if len >= h {
        return Err(err(format!("|l eps| = {len} is not below h = {h}")));
    }
    let mask = interior_subdomain(mesh, h);
    if mask.cells_2h.is_empty() {
        return Err(err("the 2h mask is empty".into()));
    }
    let mut in_h = vec![false; mesh.n_cells()];
    for &c in &mask.cells_h {
        in_h[c] = true;
    }
    mask.cells_2h
        .iter()
        .map(|&c| {
            let k = mesh.cells[c];
            match mesh.cell_index([k[0] + shift[0], k[1] + shift[1]]) {
                Some(d) if in_h[d] => Ok((c, d)),
                _ => Err(err(format!("cell {k:?} leaves the h mask"))),
            }
        })
        .collect()
}

/// `Σ_c ε²(d_cᵀ M d_c + d_cᵀ K d_c)` for `d_c = v(c + ℓ) − v(c)`.
fn masked_shift_sq(mesh: &PerforatedMesh, ops: &TemplateOperators, pairs: &[(usize, usize)], v: &[f64], d: &mut [f64]) -> f64 {
    let e2 = mesh.eps * mesh.eps;
    pairs
        .iter()
        .map(|&(c, s)| {
            for (j, (&a, &b)) in mesh.cell_nodes(s).iter().zip(mesh.cell_nodes(c)).enumerate() {
                d[j] = v[a] - v[b];
            }
            // stiffness is dilation invariant, so ε²‖∇δ‖² carries ε² as well
            e2 * (ops.mass.bilinear(d, d) + ops.stiffness.bilinear(d, d))
        })
        .sum()
}

pub fn shift_differences(sol: &MicroSolution, shifts: &[[i64; 2]], h: f64) -> Result<ShiftTable, VerifyError> {
    let mesh = &sol.mesh;
    let traj = &sol.trajectory;
    let ops = TemplateOperators::new(&sol.cell);
    let t_final = traj.times.last().copied().unwrap_or(0.0);
    let weighted: Vec<Vec<f64>> = (0..traj.times.len()).map(|m| traj.weighted(m)).collect();
    let mut d = vec![0.0; mesh.n_template_nodes];
    let mut rows = Vec::with_capacity(shifts.len());
    let mut n_cells = 0;
    for &shift in shifts {
        let pairs = shifted_cells(mesh, shift, h)?;
        n_cells = pairs.len();
        let mut total = 0.0;
        for m in 1..traj.times.len() {
            total += (traj.times[m] - traj.times[m - 1]) * masked_shift_sq(mesh, &ops, &pairs, &weighted[m], &mut d);
        }
        let initial = (t_final * masked_shift_sq(mesh, &ops, &pairs, &weighted[0], &mut d)).sqrt();
        let length = mesh.eps * ((shift[0] * shift[0] + shift[1] * shift[1]) as f64).sqrt();
        rows.push(ShiftRow { shift, h, length, norm: total.sqrt(), initial });
    }
    Ok(ShiftTable { eps: mesh.eps, h, n_cells, rows })
}

/// Least-squares `(c₁, c₂)` in `norm − initial ≈ c₁|ℓε| + c₂√ε`.
pub fn fit_shift_constants(table: &ShiftTable) -> Result<(f64, f64), VerifyError> {
    let s = table.eps.sqrt();
    let (mut aa, mut ab, mut bb, mut ar, mut br) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for r in &table.rows {
        let res = r.norm - r.initial;
        aa += r.length * r.length;
        ab += r.length * s;
        bb += s * s;
        ar += r.length * res;
        br += s * res;
    }
    let det = aa * bb - ab * ab;
    if det.abs() <= 1e-12 * aa * bb {
        return Err(VerifyError::DegenerateFit);
    }
    Ok(((ar * bb - ab * br) / det, (aa * br - ab * ar) / det))
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub eps_list: Vec<f64>,
    pub shifts: Vec<[i64; 2]>,
    pub h: f64,
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    /// Record wall-clock time; disable for bitwise-reproducible CSVs.
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps_list: vec![0.5, 0.25, 0.125],
            shifts: vec![[1, 0], [0, 1], [1, 1], [2, 0]],
            h: 0.625,
            threads: 0,
            timing: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub eps: f64,
    pub energy: Option<EnergyRow>,
    pub errors: Option<ErrorEntry>,
    pub shifts: Option<ShiftTable>,
    pub fit: Option<(f64, f64)>,
    pub wall_ms: f64,
    /// Failures of this row's sub-runs, in order.
    pub issues: Vec<String>,
    pub micro: Option<MicroSolution>,
}

#[derive(Debug, Clone)]
pub struct ErrorReport {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_HEADER: &str = "eps,maxL2,HepsNorm,Jmass_drift,E_bulk,E_surf,E_Jweighted,shift_fit_c1,shift_fit_c2,wall_ms";

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:e}"),
        None => "NaN".into(),
    }
}

impl ErrorReport {
    pub fn row(&self, eps: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| (r.eps - eps).abs() < 1e-14)
    }

    pub fn sweep_csv(&self) -> String {
        let mut s = String::from(SWEEP_HEADER);
        s.push('\n');
        for r in &self.rows {
            let e = r.energy;
            let x = r.errors;
            let cols = [
                num(Some(r.eps)),
                num(e.map(|e| e.max_l2)),
                num(e.map(|e| e.heps_norm)),
                num(e.map(|e| e.jmass_drift)),
                num(x.map(|x| x.e_bulk)),
                num(x.map(|x| x.e_surf)),
                num(x.map(|x| x.e_jweighted)),
                num(r.fit.map(|f| f.0)),
                num(r.fit.map(|f| f.1)),
                num(Some(r.wall_ms)),
            ];
            s.push_str(&cols.join(","));
            s.push('\n');
        }
        s
    }

    pub fn errors_csv(&self) -> String {
        let mut s = String::from("eps,E_bulk,E_surf,E_Jweighted\n");
        for r in &self.rows {
            let x = r.errors;
            let cols = [num(Some(r.eps)), num(x.map(|x| x.e_bulk)), num(x.map(|x| x.e_surf)), num(x.map(|x| x.e_jweighted))];
            s.push_str(&cols.join(","));
            s.push('\n');
        }
        s
    }

    pub fn shifts_csv(&self) -> String {
        let mut s = String::from("eps,l1,l2,h,length,norm,initial\n");
        for t in self.rows.iter().filter_map(|r| r.shifts.as_ref()) {
            for r in &t.rows {
                let _ = writeln!(s, "{:e},{},{},{:e},{:e},{:e},{:e}", t.eps, r.shift[0], r.shift[1], r.h, r.length, r.norm, r.initial);
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = write!(s, "eps = {}:", r.eps);
            if let Some(e) = r.energy {
                let _ = write!(s, " maxL2 {:.6e} Heps {:.6e} drift {:.2e};", e.max_l2, e.heps_norm, e.jmass_drift);
            }
            if let Some(x) = r.errors {
                let _ = write!(s, " E_bulk {:.6e} E_surf {:.6e} E_J {:.6e};", x.e_bulk, x.e_surf, x.e_jweighted);
            }
            if let Some((c1, c2)) = r.fit {
                let _ = write!(s, " shift fit c1 {c1:.4e} c2 {c2:.4e};");
            }
            for i in &r.issues {
                let _ = write!(s, " [{i}]");
            }
            s.push('\n');
        }
        s
    }

    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.energy.is_some() && r.errors.is_some())
    }
}

/// Sweep-level checks: uniform bounds, shift-fit stability, convergence.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepChecks {
    /// `max/min − 1` of `maxL2` and `HepsNorm` over the rows.
    pub energy_spread: (f64, f64),
    /// Ratios `max/min` of `c₁` and `c₂` over the rows that carry a fit.
    pub fit_ratio: Option<(f64, f64)>,
    pub fit_positive: bool,
    /// Strictly decreasing in ε order for bulk, surface and J-weighted errors.
    pub monotone: [bool; 3],
    /// `E(ε_min)/E(ε_max)` per error kind.
    pub reduction: [f64; 3],
}

pub const ENERGY_SPREAD_TOL: f64 = 0.1;
pub const FIT_RATIO_TOL: f64 = 2.0;
pub const REDUCTION_TOL: f64 = 0.6;

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min - 1.0
}

fn ratio(a: f64, b: f64) -> f64 {
    a.abs().max(b.abs()) / a.abs().min(b.abs())
}

impl SweepChecks {
    pub fn new(report: &ErrorReport) -> Self {
        let mut rows: Vec<&SweepRow> = report.rows.iter().collect();
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        let energy: Vec<EnergyRow> = rows.iter().filter_map(|r| r.energy).collect();
        let l2: Vec<f64> = energy.iter().map(|e| e.max_l2).collect();
        let he: Vec<f64> = energy.iter().map(|e| e.heps_norm).collect();
        let fits: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.fit).collect();
        let fit_ratio = (fits.len() >= 2).then(|| {
            let c1: Vec<f64> = fits.iter().map(|f| f.0).collect();
            let c2: Vec<f64> = fits.iter().map(|f| f.1).collect();
            let r = |v: &[f64]| v.windows(2).map(|w| ratio(w[0], w[1])).fold(1.0, f64::max);
            (r(&c1), r(&c2))
        });
        let fit_positive = !fits.is_empty() && fits.iter().all(|f| f.0 > 0.0 && f.1 > 0.0 && f.0.is_finite() && f.1.is_finite());
        let errs: Vec<ErrorEntry> = rows.iter().filter_map(|r| r.errors).collect();
        let pick = |e: &ErrorEntry, i: usize| [e.e_bulk, e.e_surf, e.e_jweighted][i];
        let complete = errs.len() == rows.len() && errs.len() >= 2;
        let monotone = [0, 1, 2].map(|i| complete && errs.windows(2).all(|w| pick(&w[1], i) < pick(&w[0], i)));
        let reduction = [0, 1, 2].map(|i| match (errs.first(), errs.last()) {
            (Some(a), Some(b)) if complete => pick(b, i) / pick(a, i),
            _ => f64::NAN,
        });
        SweepChecks { energy_spread: (spread(&l2), spread(&he)), fit_ratio, fit_positive, monotone, reduction }
    }

    pub fn energy_ok(&self) -> bool {
        self.energy_spread.0 <= ENERGY_SPREAD_TOL && self.energy_spread.1 <= ENERGY_SPREAD_TOL
    }

    pub fn shift_ok(&self) -> bool {
        self.fit_positive && matches!(self.fit_ratio, Some((a, b)) if a <= FIT_RATIO_TOL && b <= FIT_RATIO_TOL)
    }

    pub fn convergence_ok(&self) -> bool {
        self.monotone.iter().all(|&m| m) && self.reduction.iter().all(|&r| r <= REDUCTION_TOL)
    }

    /// One line per check, `PASS`/`FAIL` first.
    pub fn lines(&self) -> Vec<(bool, String)> {
        vec![
            (
                self.energy_ok(),
                format!("energy norms uniform in eps: spread maxL2 {:.3e}, HepsNorm {:.3e} (tol {ENERGY_SPREAD_TOL})", self.energy_spread.0, self.energy_spread.1),
            ),
            (
                self.shift_ok(),
                format!("shift fit stable: positive {}, ratios c1/c2 {:?} (tol {FIT_RATIO_TOL})", self.fit_positive, self.fit_ratio),
            ),
            (
                self.convergence_ok(),
                format!("two-scale errors decrease: monotone {:?}, E(eps_min)/E(eps_max) {:?} (tol {REDUCTION_TOL})", self.monotone, self.reduction),
            ),
        ]
    }
}

fn sweep_row(scen: &Scenario, cell: &std::sync::Arc<CellMesh>, eps: f64, cfg: &SweepConfig) -> SweepRow {
    let start = Instant::now();
    let mut row = SweepRow { eps, energy: None, errors: None, shifts: None, fit: None, wall_ms: 0.0, issues: Vec::new(), micro: None };
    let micro = match MicroSolver::new(scen, cell.clone(), eps).and_then(|s| s.run()) {
        Ok(m) => m,
        Err(e) => {
            row.issues.push(format!("micro: {e}"));
            return row;
        }
    };
    row.energy = Some(energy_norms(&micro));
    match run_macro(scen, cell.clone(), &MacroSampling::anchors(scen.domain, micro.eps)) {
        Ok(mac) => match two_scale_error(&micro, &mac) {
            Ok(e) => row.errors = Some(e),
            Err(e) => row.issues.push(format!("two-scale error: {e}")),
        },
        Err(e) => row.issues.push(format!("macro: {e}")),
    }
    match shift_differences(&micro, &cfg.shifts, cfg.h) {
        Ok(t) => {
            match fit_shift_constants(&t) {
                Ok(f) => row.fit = Some(f),
                Err(e) => row.issues.push(format!("shift fit: {e}")),
            }
            row.shifts = Some(t);
        }
        Err(e) => row.issues.push(format!("shifts: {e}")),
    }
    if cfg.timing {
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    }
    row.micro = Some(micro);
    row
}

/// Runs every ε row; a failing row records its issues and the others proceed.
pub fn convergence_sweep(scen: &Scenario, cfg: &SweepConfig) -> Result<ErrorReport, VerifyError> {
    let cell = scen.build_cell().map_err(|e| VerifyError::Run(e.to_string()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| VerifyError::Run(e.to_string()))?;
    let rows = pool.install(|| cfg.eps_list.par_iter().map(|&eps| sweep_row(scen, &cell, eps, cfg)).collect());
    Ok(ErrorReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use crate::kinetics::{InitialProfile, KineticsSpec, Reaction};
    use crate::transform::{Amplitude, Modulation};

    fn scenario(initial: InitialProfile, omega: f64, modulation: Modulation) -> Scenario {
        let mut s = Scenario::default();
        s.domain = Rect::new([0.0, 0.0], [2.0, 2.0]);
        s.scheme.t_final = 0.125;
        s.scheme.tau = 1.0 / 32.0;
        s.transform.amplitude = if omega == 0.0 { Amplitude::Zero } else { Amplitude::Linear { omega_max: omega, t_final: 0.125 } };
        s.transform.modulation = modulation;
        s.kinetics = KineticsSpec { f: Reaction::Zero, g: Reaction::Zero };
        s.initial = initial;
        s
    }

    fn micro(s: &Scenario, eps: f64) -> MicroSolution {
        MicroSolver::new(s, s.build_cell().unwrap(), eps).unwrap().run().unwrap()
    }

    #[test]
    fn constant_field_norms() {
        let s = scenario(InitialProfile::Constant { value: 2.0 }, 0.0, Modulation::Uniform);
        let sol = micro(&s, 0.5);
        let e = energy_norms(&sol);
        let area = sol.mesh.mesh.area();
        assert!((e.max_l2 - 2.0 * area.sqrt()).abs() < 1e-11);
        assert!((e.heps_norm - 2.0 * (0.125 * area).sqrt()).abs() < 1e-11);
        assert!((e.heps_norm_weighted - e.heps_norm).abs() < 1e-11);
    }

    #[test]
    fn decay_norms_follow_geometric_series() {
        let mut s = scenario(InitialProfile::Constant { value: 1.0 }, 0.0, Modulation::Uniform);
        let lambda = 2.0;
        s.kinetics.f = Reaction::Linear { rate: -lambda };
        let sol = micro(&s, 0.5);
        let e = energy_norms(&sol);
        let area = sol.mesh.mesh.area();
        let tau = s.scheme.tau;
        let sum: f64 = (1..=4).map(|m| tau * (1.0 - tau * lambda).powi(2 * m)).sum();
        assert!((e.max_l2 - area.sqrt()).abs() < 1e-12);
        assert!((e.heps_norm - (area * sum).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn periodic_data_gives_zero_shift() {
        let s = scenario(InitialProfile::Constant { value: 1.0 }, 0.05, Modulation::Uniform);
        let sol = micro(&s, 0.25);
        let t = shift_differences(&sol, &[[1, 0], [0, 1], [1, 1]], 0.375).unwrap();
        assert!(t.n_cells > 0);
        for r in &t.rows {
            assert!(r.norm < 1e-12 && r.initial < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn affine_initial_shift_is_exact() {
        let s = scenario(InitialProfile::Affine { value: 0.0, gradient: [1.0, 0.0] }, 0.0, Modulation::Uniform);
        let sol = micro(&s, 0.25);
        let t = shift_differences(&sol, &[[1, 0], [1, 1], [0, 1]], 0.375).unwrap();
        let masked = t.n_cells as f64 * 0.0625 * sol.cell.area();
        for r in &t.rows {
            let expect = r.shift[0] as f64 * 0.25 * (0.125 * masked).sqrt();
            assert!((r.initial - expect).abs() < 1e-12, "{r:?} {expect}");
        }
    }

    #[test]
    fn relabeling_matches_coordinate_lookup() {
        let s = scenario(InitialProfile::Constant { value: 1.0 }, 0.0, Modulation::Uniform);
        let sol = micro(&s, 0.25);
        let mesh = &sol.mesh;
        for (c, d) in shifted_cells(mesh, [1, 1], 0.375).unwrap() {
            for (&a, &b) in mesh.cell_nodes(d).iter().zip(mesh.cell_nodes(c)) {
                let (p, q) = (mesh.mesh.nodes[a], mesh.mesh.nodes[b]);
                assert!((p[0] - q[0] - 0.25).abs() < 1e-12 && (p[1] - q[1] - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_preconditions() {
        let s = scenario(InitialProfile::Constant { value: 1.0 }, 0.0, Modulation::Uniform);
        let sol = micro(&s, 0.25);
        assert!(matches!(shift_differences(&sol, &[[2, 0]], 0.5), Err(VerifyError::ShiftPrecondition { .. })));
        assert!(matches!(shift_differences(&sol, &[[1, 0]], 0.9), Err(VerifyError::ShiftPrecondition { .. })));
    }

    #[test]
    fn fit_recovers_linear_model() {
        let eps: f64 = 0.25;
        let rows = [[1, 0], [1, 1], [2, 0]]
            .iter()
            .map(|&shift: &[i64; 2]| {
                let length = eps * ((shift[0] * shift[0] + shift[1] * shift[1]) as f64).sqrt();
                ShiftRow { shift, h: 1.0, length, norm: 0.3 + 2.0 * length + 0.5 * eps.sqrt(), initial: 0.3 }
            })
            .collect();
        let (c1, c2) = fit_shift_constants(&ShiftTable { eps, h: 1.0, n_cells: 1, rows }).unwrap();
        assert!((c1 - 2.0).abs() < 1e-12 && (c2 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn trivial_sweep_has_zero_error() {
        let mut s = scenario(InitialProfile::Constant { value: 1.0 }, 0.0, Modulation::Uniform);
        s.kinetics.f = Reaction::Constant { value: 0.5 };
        let cfg = SweepConfig { eps_list: vec![0.5, 0.25], shifts: vec![[1, 0]], h: 0.3, threads: 2, timing: false };
        let rep = convergence_sweep(&s, &cfg).unwrap();
        assert!(rep.all_ok());
        for r in &rep.rows {
            let e = r.errors.unwrap();
            assert!(e.e_bulk < 1e-12 && e.e_surf < 1e-12 && e.e_jweighted < 1e-12, "{e:?}");
        }
        let csv = rep.sweep_csv();
        assert!(csv.starts_with(SWEEP_HEADER));
        assert_eq!(csv.lines().count(), 3);
    }
}
