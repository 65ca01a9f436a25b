//! End-to-end runs of the command-line front end, in process.

use std::path::Path;

use perfhom::cli::{run, EXIT_CHECK_FAILED, EXIT_ERROR, EXIT_OK};

const SMALL: &str = r#"
schema_version = 1
run_id = "small"

[geometry]
domain_extent = [1.0, 1.0]

[discretization]
tau = 0.125
t_final = 0.25

[sweep]
eps = [0.5, 0.25]
shifts = [[1, 0]]
h = 0.375
timing = false
"#;

fn cli(dir: &Path, config: &str, args: &[&str]) -> i32 {
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    let mut argv = vec!["perfhom".to_string(), "-c".into(), path.display().to_string()];
    argv.extend(["--output-dir".to_string(), dir.join("out").display().to_string()]);
    argv.extend(args.iter().map(|s| s.to_string()));
    run(argv)
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn verify_operators_passes_at_quarter() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), SMALL, &["--strict", "verify-operators", "--eps", "0.25"]), EXIT_OK);
    let rows = read_csv(&dir.path().join("out/small/reports/operators.csv"));
    assert_eq!(rows.len(), 2);
    for v in &rows[1][1..] {
        let r: f64 = v.parse().unwrap();
        assert!(r <= 1e-12, "{:?}", rows);
    }
}

#[test]
fn verify_transform_identity_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}\n[transform]\nomega_max = 0.0\n");
    assert_eq!(cli(dir.path(), &cfg, &["--strict", "verify-transform"]), EXIT_OK);
    let reports = dir.path().join("out/small/reports");
    let rows = read_csv(&reports.join("assumptions.csv"));
    assert_eq!(rows[0].join(","), "eps,check,value,bound,pass");
    assert!(rows.len() > 1);
    for r in &rows[1..] {
        assert_eq!(r[4], "true", "{r:?}");
    }
    assert!(reports.join("cell_area.csv").exists());
    assert!(dir.path().join("out/small/config-echo.toml").exists());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replace("eps = [0.5, 0.25]", "eps = [0.3]");
    assert_eq!(cli(dir.path(), &bad, &["sweep"]), EXIT_ERROR);
    let unknown = format!("{SMALL}\n[run]\nbogus = 1\n");
    assert_eq!(cli(dir.path(), &unknown, &["sweep"]), EXIT_ERROR);
    assert!(!dir.path().join("out/small").exists());
}

#[test]
fn unknown_subcommand_exits_2() {
    assert_eq!(run(["perfhom", "frobnicate"]), EXIT_ERROR);
    assert_eq!(run(["perfhom", "--help"]), EXIT_OK);
}

#[test]
fn small_sweep_writes_reports_and_honours_strict() {
    // ε = 1/2 has no shift table, so the stability check cannot pass here
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), SMALL, &["--threads", "2", "sweep"]), EXIT_OK);
    let reports = dir.path().join("out/small/reports");
    let sweep = read_csv(&reports.join("sweep.csv"));
    assert_eq!(
        sweep[0].join(","),
        "eps,maxL2,HepsNorm,Jmass_drift,E_bulk,E_surf,E_Jweighted,shift_fit_c1,shift_fit_c2,wall_ms"
    );
    assert_eq!(sweep.len(), 3);
    assert_eq!(sweep[1][9].parse::<f64>().unwrap(), 0.0);
    for name in ["errors.csv", "shifts.csv", "norms_micro_eps2.csv", "norms_micro_eps4.csv", "summary.txt"] {
        assert!(reports.join(name).exists(), "{name}");
    }
    let summary = std::fs::read_to_string(reports.join("summary.txt")).unwrap();
    assert!(summary.contains("FAIL shift fit stable"), "{summary}");

    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), SMALL, &["--strict", "sweep"]), EXIT_CHECK_FAILED);
}

#[test]
fn run_micro_and_export_write_layout() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cli(dir.path(), SMALL, &["--run-id", "m", "run-micro", "--eps", "0.5"]), EXIT_OK);
    let root = dir.path().join("out/m");
    assert!(root.join("meshes/perforated_eps2.txt").exists());
    assert!(root.join("fields/micro_eps2_0000.vtk").exists());
    let norms = read_csv(&root.join("reports/norms_micro_eps2.csv"));
    assert_eq!(norms[0].join(","), "t,L2,epsH1,Jmass");
    assert_eq!(norms.len(), 4);

    assert_eq!(cli(dir.path(), SMALL, &["--run-id", "x", "export", "--eps", "0.5"]), EXIT_OK);
    let vtk = std::fs::read_to_string(dir.path().join("out/x/meshes/cell.vtk")).unwrap();
    assert!(vtk.starts_with("# vtk DataFile Version"));
    assert!(dir.path().join("out/x/meshes/cell_deformed_4.vtk").exists());
}
