//! Command-line front end: argument parsing, dispatch and exit codes.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::cell::{push_forward, run_macro, MacroSampling};
use crate::config::RunConfig;
use crate::geometry::build_perforated_mesh;
use crate::io::{self, OutputLayout};
use crate::micro::MicroSolver;
use crate::transform::{deformed_cell_area, validate_transform, Level, ValidationSampling};
use crate::unfolding::verify_operators;
use crate::verify::{convergence_sweep, SweepChecks};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

/// Operator identities must hold to this residual.
pub const OPERATOR_TOL: f64 = 1e-12;
/// Mass balance per step when there are no reactions.
pub const BALANCE_TOL: f64 = 1e-10;
pub const AREA_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "perfhom", version, about = "Multiscale reaction-diffusion-advection in evolving perforated domains")]
pub struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Exit with status 1 when any acceptance check fails.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub run_id: Option<String>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the micro problem on the perforated domain.
    RunMicro {
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Solve the cell problems at macro sample points.
    RunMacro {
        #[arg(long)]
        eps: Option<f64>,
        /// Uniform n × n grid instead of the ε anchors.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Convergence sweep over the configured ε list.
    Sweep,
    /// Sample the transformation and report the structural assumptions.
    VerifyTransform,
    /// Check the discrete unfolding identities on random fields.
    VerifyOperators {
        /// ε values; defaults to the sweep list.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write template, perforated and deformed meshes.
    Export {
        #[arg(long)]
        eps: Option<f64>,
    },
}

type Failures = Vec<String>;

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn write(path: PathBuf, text: &str) -> Result<(), String> {
    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn tag(eps: f64) -> String {
    format!("eps{}", (1.0 / eps).round() as u64)
}

/// Parses `args` and runs; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(f) if f.is_empty() => EXIT_OK,
        Ok(f) => {
            for line in &f {
                eprintln!("check failed: {line}");
            }
            if cli.strict {
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn load_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(err)?,
        None => RunConfig::default(),
    };
    if let Some(id) = &cli.run_id {
        cfg.run_id = id.clone();
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Failures, String> {
    let cfg = load_config(cli)?;
    let out = OutputLayout::create(&cfg.output_dir, &cfg.run_id, &cfg.echo()).map_err(err)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().map_err(err)?;
    pool.install(|| match &cli.command {
        Command::RunMicro { eps } => run_micro_cmd(&cfg, &out, eps.unwrap_or(cfg.run.eps)),
        Command::RunMacro { eps, grid } => run_macro_cmd(&cfg, &out, eps.unwrap_or(cfg.run.eps), grid.unwrap_or(cfg.run.macro_grid)),
        Command::Sweep => sweep_cmd(&cfg, &out),
        Command::VerifyTransform => verify_transform_cmd(&cfg, &out),
        Command::VerifyOperators { eps, seed } => {
            let list = if eps.is_empty() { cfg.sweep.eps.clone() } else { eps.clone() };
            verify_operators_cmd(&cfg, &out, &list, *seed)
        }
        Command::Export { eps } => export_cmd(&cfg, &out, eps.unwrap_or(cfg.run.eps)),
    })
}

fn no_reactions(cfg: &RunConfig) -> bool {
    use crate::kinetics::Reaction;
    cfg.kinetics.f == Reaction::Zero && cfg.kinetics.g == Reaction::Zero
}

fn run_micro_cmd(cfg: &RunConfig, out: &OutputLayout, eps: f64) -> Result<Failures, String> {
    crate::geometry::eps_inverse(eps).map_err(err)?;
    let scen = cfg.scenario();
    let cell = scen.build_cell().map_err(err)?;
    let sol = MicroSolver::new(&scen, cell, eps).and_then(|s| s.run()).map_err(err)?;
    let t = tag(eps);
    let mesh = &sol.mesh.mesh;
    write(out.meshes().join(format!("perforated_{t}.txt")), &io::mesh_text(mesh))?;
    let traj = &sol.trajectory;
    let every = cfg.run.snapshot_every;
    let last = traj.times.len() - 1;
    for m in 0..=last {
        if (every > 0 && m % every == 0) || m == last {
            let w = traj.weighted(m);
            let fields = [("u", traj.fields[m].as_slice()), ("J", traj.jacobians[m].as_slice()), ("Ju", w.as_slice())];
            io::write_vtk(&out.fields().join(format!("micro_{t}_{m:04}.vtk")), mesh, &fields).map_err(err)?;
        }
    }
    write(out.reports().join(format!("norms_micro_{t}.csv")), &io::norm_trace_csv(&traj.norms))?;
    let drift = traj.balance.iter().copied().fold(0.0, f64::max);
    let fin = traj.norms[last];
    println!(
        "run-micro eps = {eps}: {} nodes, {} steps, final L2 {:.6e}, Jmass {:.12e}, max balance residual {:.3e}",
        mesh.n_nodes(),
        last,
        fin.l2,
        fin.jmass,
        drift
    );
    let mut failures = Vec::new();
    if no_reactions(cfg) && drift > BALANCE_TOL {
        failures.push(format!("J-weighted mass drift {drift:e} exceeds {BALANCE_TOL:e}"));
    }
    Ok(failures)
}

fn run_macro_cmd(cfg: &RunConfig, out: &OutputLayout, eps: f64, grid: usize) -> Result<Failures, String> {
    let scen = cfg.scenario();
    let cell = scen.build_cell().map_err(err)?;
    let sampling = if grid > 0 {
        MacroSampling::grid(scen.domain, grid)
    } else {
        crate::geometry::eps_inverse(eps).map_err(err)?;
        MacroSampling::anchors(scen.domain, eps)
    };
    let sol = run_macro(&scen, cell.clone(), &sampling).map_err(err)?;
    let dir = out.reports().join("cells");
    std::fs::create_dir_all(&dir).map_err(err)?;
    let mut index = String::from("point,x1,x2\n");
    for (i, (x, traj)) in sampling.points.iter().zip(&sol.trajectories).enumerate() {
        index.push_str(&format!("{i},{:e},{:e}\n", x[0], x[1]));
        write(dir.join(format!("point_{i:04}.csv")), &io::norm_trace_csv(&traj.norms))?;
    }
    write(out.reports().join("cells_index.csv"), &index)?;
    let n = sampling.len();
    let mut picks = vec![0, n / 2, n - 1];
    picks.dedup();
    let mut worst = 0.0f64;
    for &i in &picks {
        let traj = &sol.trajectories[i];
        let last = traj.times.len() - 1;
        let w = traj.weighted(last);
        let fields = [("u", traj.fields[last].as_slice()), ("J", traj.jacobians[last].as_slice()), ("Ju", w.as_slice())];
        io::write_vtk(&out.fields().join(format!("cell_{i:04}_reference.vtk")), &cell.mesh, &fields).map_err(err)?;
        let d = push_forward(traj, &cell, &scen.transform, sampling.points[i], last).map_err(err)?;
        let vtk = io::vtk_string("deformed cell", &d.nodes, &d.triangles, &[("u", d.values.as_slice())]);
        write(out.fields().join(format!("cell_{i:04}_deformed.vtk")), &vtk)?;
    }
    for traj in sol.trajectories.iter() {
        worst = worst.max(traj.balance.iter().copied().fold(0.0, f64::max));
    }
    println!("run-macro: {n} sample points, {} distinct cell problems, max balance residual {worst:.3e}", sol.unique_trajectories());
    let mut failures = Vec::new();
    if no_reactions(cfg) && worst > BALANCE_TOL {
        failures.push(format!("cell mass drift {worst:e} exceeds {BALANCE_TOL:e}"));
    }
    Ok(failures)
}

fn sweep_cmd(cfg: &RunConfig, out: &OutputLayout) -> Result<Failures, String> {
    let report = convergence_sweep(&cfg.scenario(), &cfg.sweep_config()).map_err(err)?;
    write(out.reports().join("sweep.csv"), &report.sweep_csv())?;
    write(out.reports().join("errors.csv"), &report.errors_csv())?;
    write(out.reports().join("shifts.csv"), &report.shifts_csv())?;
    for r in &report.rows {
        if let Some(m) = &r.micro {
            write(out.reports().join(format!("norms_micro_{}.csv", tag(r.eps))), &io::norm_trace_csv(&m.trajectory.norms))?;
        }
    }
    let checks = SweepChecks::new(&report);
    let mut summary = report.summary();
    let mut failures = Vec::new();
    for (ok, line) in checks.lines() {
        summary.push_str(&format!("{} {line}\n", if ok { "PASS" } else { "FAIL" }));
        if !ok {
            failures.push(line);
        }
    }
    for r in &report.rows {
        if r.energy.is_none() || r.errors.is_none() {
            failures.push(format!("eps = {} row incomplete: {}", r.eps, r.issues.join("; ")));
        }
    }
    write(out.reports().join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(failures)
}

fn verify_transform_cmd(cfg: &RunConfig, out: &OutputLayout) -> Result<Failures, String> {
    let spec = cfg.transform_spec();
    let sampling = ValidationSampling {
        domain: cfg.domain(),
        t_final: cfg.discretization.t_final,
        h: cfg.sweep.h,
        per_side: cfg.run.validation_samples,
        time_samples: 5,
        q: cfg.transform.q,
    };
    let report = validate_transform(&spec, &cfg.sweep.eps, &sampling);
    write(out.reports().join("assumptions.csv"), &io::assumption_csv(&report))?;
    let mut failures: Failures = report
        .rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("eps = {} {}: {:e} vs bound {:?}", r.eps, r.check, r.value, r.bound))
        .collect();
    for r in &report.rows {
        println!("{:>6} {:<26} {:>13.6e} {}", r.eps, r.check, r.value, if r.pass { "ok" } else { "FAIL" });
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    let (lo, hi) = spec.omega_range();
    let mut area_lines = String::from("omega,area,exact,error\n");
    for omega in [lo, 0.5 * (lo + hi), hi] {
        let area = deformed_cell_area(&spec, omega);
        let r = spec.hole_radius - omega;
        let exact = 1.0 - std::f64::consts::PI * r * r;
        let e = (area - exact).abs();
        area_lines.push_str(&format!("{omega:e},{area:e},{exact:e},{e:e}\n"));
        println!("deformed cell area at omega = {omega:.4}: {area:.12} (exact {exact:.12}, error {e:.2e})");
        if e > AREA_TOL {
            failures.push(format!("deformed cell area error {e:e} at omega = {omega}"));
        }
    }
    write(out.reports().join("cell_area.csv"), &area_lines)?;
    Ok(failures)
}

fn verify_operators_cmd(cfg: &RunConfig, out: &OutputLayout, eps_list: &[f64], seed: u64) -> Result<Failures, String> {
    let cell = cfg.scenario().build_cell().map_err(err)?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &eps in eps_list {
        let mesh = build_perforated_mesh(eps, &cell, cfg.domain()).map_err(err)?;
        let r = verify_operators(&mesh, &cell, seed).map_err(err)?;
        println!(
            "eps = {eps}: adjointness {:.2e} isometry {:.2e} boundary isometry {:.2e} gradient {:.2e} left inverse {:.2e} time difference {:.2e}",
            r.adjointness, r.isometry, r.boundary_isometry, r.gradient, r.left_inverse, r.time_difference
        );
        if r.max() > OPERATOR_TOL {
            failures.push(format!("eps = {eps}: operator residual {:e} exceeds {OPERATOR_TOL:e}", r.max()));
        }
        rows.push(r);
    }
    write(out.reports().join("operators.csv"), &io::operator_csv(&rows))?;
    Ok(failures)
}

fn export_cmd(cfg: &RunConfig, out: &OutputLayout, eps: f64) -> Result<Failures, String> {
    let scen = cfg.scenario();
    let cell = scen.build_cell().map_err(err)?;
    write(out.meshes().join("cell.txt"), &io::mesh_text(&cell.mesh))?;
    io::write_vtk(&out.meshes().join("cell.vtk"), &cell.mesh, &[]).map_err(err)?;
    let mesh = Arc::new(build_perforated_mesh(eps, &cell, scen.domain).map_err(err)?);
    let t = tag(eps);
    write(out.meshes().join(format!("perforated_{t}.txt")), &io::mesh_text(&mesh.mesh))?;
    io::write_vtk(&out.meshes().join(format!("perforated_{t}.vtk")), &mesh.mesh, &[]).map_err(err)?;
    let x = [scen.domain.origin[0] + 0.5 * scen.domain.extent[0], scen.domain.origin[1] + 0.5 * scen.domain.extent[1]];
    let n = 4;
    for i in 0..=n {
        let time = scen.scheme.t_final * i as f64 / n as f64;
        let mut nodes = Vec::with_capacity(cell.mesh.n_nodes());
        let mut jac = Vec::with_capacity(cell.mesh.n_nodes());
        for &y in &cell.mesh.nodes {
            let e = scen.transform.eval(Level::Limit(x), time, y).map_err(err)?;
            nodes.push(e.s);
            jac.push(e.jac);
        }
        let vtk = io::vtk_string("deformed cell", &nodes, &cell.mesh.triangles, &[("J", jac.as_slice())]);
        write(out.meshes().join(format!("cell_deformed_{i}.vtk")), &vtk)?;
    }
    println!(
        "export: template {} nodes / {} triangles, perforated {t} {} nodes / {} triangles, {} deformed snapshots",
        cell.mesh.n_nodes(),
        cell.mesh.n_triangles(),
        mesh.mesh.n_nodes(),
        mesh.mesh.n_triangles(),
        n + 1
    );
    Ok(Vec::new())
}
