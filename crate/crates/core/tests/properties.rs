use std::sync::OnceLock;

use proptest::prelude::*;

use perfhom::config::RunConfig;
use perfhom::fem::{periodic_dofmap, solve_linear, CsrMatrix, SolverOptions};
use perfhom::geometry::{build_perforated_mesh, build_reference_cell, CellMesh, CellSpec, PerforatedMesh, Rect};
use perfhom::transform::{det, Amplitude, Cutoff, Level, Modulation, TransformSpec};
use perfhom::unfolding::verify_operators;

fn cell() -> &'static CellMesh {
    static C: OnceLock<CellMesh> = OnceLock::new();
    C.get_or_init(|| build_reference_cell(&CellSpec::default()).unwrap())
}

fn mesh() -> &'static PerforatedMesh {
    static M: OnceLock<PerforatedMesh> = OnceLock::new();
    M.get_or_init(|| build_perforated_mesh(0.25, cell(), Rect::unit()).unwrap())
}

fn spec(omega_max: f64, amplitude: f64) -> TransformSpec {
    TransformSpec {
        center: [0.5, 0.5],
        hole_radius: 0.25,
        cutoff: Cutoff::default(),
        amplitude: Amplitude::Linear { omega_max, t_final: 1.0 },
        modulation: Modulation::Sine { amplitude, wavenumber: 1.0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn triplet_matrix_matches_dense(entries in prop::collection::vec((0usize..6, 0usize..6, -2.0f64..2.0), 1..40), x in prop::collection::vec(-1.0f64..1.0, 6)) {
        let mut dense = [[0.0f64; 6]; 6];
        for &(i, j, v) in &entries {
            dense[i][j] += v;
        }
        let a = CsrMatrix::from_triplets(6, 6, entries);
        let y = a.mul_vec(&x);
        for i in 0..6 {
            let d: f64 = (0..6).map(|j| dense[i][j] * x[j]).sum();
            prop_assert!((y[i] - d).abs() < 1e-12);
        }
        prop_assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn spd_tridiagonal_solves(diag in prop::collection::vec(2.5f64..5.0, 3..30), off in -1.0f64..1.0) {
        let n = diag.len();
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, diag[i]));
            if i + 1 < n {
                t.push((i, i + 1, off));
                t.push((i + 1, i, off));
            }
        }
        let mut a = CsrMatrix::from_triplets(n, n, t);
        a.update_symmetry();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, stats) = solve_linear(&a, &b, None, &SolverOptions::default()).unwrap();
        let r: f64 = a.mul_vec(&x).iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(r <= 1e-11 * nb, "{:?}", stats);
    }

    #[test]
    fn jacobian_within_bounds(omega in 0.0f64..0.08, amp in 0.0f64..0.9, t in 0.0f64..1.0, x1 in 0.05f64..0.95, x2 in 0.05f64..0.95, r in 0.26f64..0.7, th in 0.0f64..6.283) {
        let s = spec(omega, amp);
        let (c0, c1) = s.jacobian_bounds();
        let y = [0.5 + r * th.cos(), 0.5 + r * th.sin()];
        prop_assume!(y[0] > 0.0 && y[0] < 1.0 && y[1] > 0.0 && y[1] < 1.0);
        let e = s.eval(Level::Limit([x1, x2]), t, y).unwrap();
        prop_assert!(e.jac >= c0 - 1e-12 && e.jac <= c1 + 1e-12);
        prop_assert!((det(&e.grad_s) - e.jac).abs() < 1e-12);
    }

    #[test]
    fn hole_boundary_moves_by_omega(omega in 0.0f64..0.08, amp in 0.0f64..0.9, x1 in 0.05f64..0.95, x2 in 0.05f64..0.95, th in 0.0f64..6.283) {
        let s = spec(omega, amp);
        let y = [0.5 + 0.25 * th.cos(), 0.5 + 0.25 * th.sin()];
        let e = s.eval(Level::Limit([x1, x2]), 1.0, y).unwrap();
        let (w, _) = s.omega_limit(1.0, [x1, x2]);
        let rho = ((e.s[0] - 0.5).powi(2) + (e.s[1] - 0.5).powi(2)).sqrt();
        prop_assert!((rho - (0.25 - w)).abs() < 1e-12);
    }

    #[test]
    fn cutoff_is_a_partition_value(rho in 0.0f64..1.0) {
        let (chi, _, _) = Cutoff::default().eval(rho);
        prop_assert!((0.0..=1.0).contains(&chi));
    }

    #[test]
    fn periodic_projection_is_idempotent(mut u in prop::collection::vec(-1.0f64..1.0, 1000)) {
        let c = cell();
        u.truncate(c.mesh.n_nodes());
        let map = periodic_dofmap(c).unwrap();
        let p = map.project(&u);
        prop_assert_eq!(map.project(&p), p.clone());
        for &(a, b) in c.left_right.iter().chain(&c.bottom_top) {
            prop_assert_eq!(p[a], p[b]);
        }
    }

    #[test]
    fn config_echo_round_trips(omega in 0.0f64..0.08, rate in 0.0f64..3.0, inv in 1u32..9, threads in 0usize..8) {
        let mut cfg = RunConfig::default();
        cfg.transform.omega_max = omega;
        cfg.kinetics.f = perfhom::kinetics::Reaction::Monod { rate, half_saturation: 1.0 };
        cfg.run.eps = 1.0 / inv as f64;
        cfg.threads = threads;
        prop_assume!(cfg.validate().is_ok());
        let back = RunConfig::from_toml(&cfg.echo()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn unfolding_identities_hold_for_any_seed(seed in any::<u64>()) {
        let r = verify_operators(mesh(), cell(), seed).unwrap();
        prop_assert!(r.max() <= 1e-12, "{:?}", r);
    }
}
