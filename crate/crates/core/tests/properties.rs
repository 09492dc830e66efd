//! Property tests for the spectral operators, the energy functional, the
//! integrators, the file formats and the configuration layer.

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vesicle_core::config::ConfigLoader;
use vesicle_core::energy::{EnergyModel, ModelParams};
use vesicle_core::integrators::{step, IntegratorConfig, Scheme};
use vesicle_core::io::{read_raw, write_raw, SnapshotMeta};
use vesicle_core::oracles::fd_directional_derivative;
use vesicle_core::verification::random_smooth_field;
use vesicle_core::{GridSpec, ScalarField3D, Spectral};

fn grid16() -> GridSpec {
    GridSpec::new(16, 16, 16, 1.0, 1.0, 1.0).unwrap()
}

fn smooth(grid: GridSpec, seed: u64, amp: f64, mean: f64) -> ScalarField3D {
    random_smooth_field(grid, &mut ChaCha8Rng::seed_from_u64(seed), amp, mean)
}

fn params() -> ModelParams {
    ModelParams::new(0.1, 1.0, 2.0, 0.5, 1e3, 1e3, 0.2, 1.5, 0.1)
}

fn shifted(f: &ScalarField3D, s: [usize; 3]) -> ScalarField3D {
    let g = *f.grid();
    let mut out = ScalarField3D::zeros(g);
    for k in 0..g.nz {
        for j in 0..g.ny {
            for i in 0..g.nx {
                let v = f.at((i + s[0]) % g.nx, (j + s[1]) % g.ny, (k + s[2]) % g.nz);
                out.values_mut()[g.index(i, j, k)] = v;
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn laplacian_of_a_resolved_mode_is_exact(m in (0i32..5, -4i32..5, 0i32..5), phase in 0.0..(2.0 * PI)) {
        let g = GridSpec::new(16, 12, 20, 1.0, 0.75, 1.25).unwrap();
        let sp = Spectral::new(g).unwrap();
        let kv = [2.0 * PI * m.0 as f64 / g.lx, 2.0 * PI * m.1 as f64 / g.ly, 2.0 * PI * m.2 as f64 / g.lz];
        let f = ScalarField3D::from_fn(g, |x, y, z| (kv[0] * x + kv[1] * y + kv[2] * z + phase).sin());
        let k2 = kv.iter().map(|k| k * k).sum::<f64>();
        let err = sp.laplacian(&f).add_scaled(k2, &f).max_abs();
        prop_assert!(err <= 1e-10 * (1.0 + k2), "err {err}");
    }

    #[test]
    fn forward_inverse_round_trips(seed in any::<u64>()) {
        let f = smooth(grid16(), seed, 1.0, 0.2);
        let sp = Spectral::new(grid16()).unwrap();
        let back = sp.inverse(sp.forward(f.values()));
        let err = back.iter().zip(f.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-13, "err {err}");
    }

    #[test]
    fn laplacian_is_self_adjoint_and_negative(s1 in any::<u64>(), s2 in any::<u64>()) {
        let sp = Spectral::new(grid16()).unwrap();
        let f = smooth(grid16(), s1, 1.0, 0.0);
        let h = smooth(grid16(), s2, 1.0, 0.0);
        let a = f.dot(&sp.laplacian(&h));
        let b = h.dot(&sp.laplacian(&f));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        prop_assert!(f.dot(&sp.laplacian(&f)) <= 1e-12);
        // ∫|∇f|² = −∫ f Δf
        let gs = sp.grad_sq(&f).integrate();
        prop_assert!((gs + f.dot(&sp.laplacian(&f))).abs() <= 1e-9 * (1.0 + gs));
    }

    #[test]
    fn implicit_solve_inverts_the_operator(seed in any::<u64>(), a in 0.1..10.0, b in -1e-3..1e-3, c in 1e-6..1e-3) {
        let sp = Spectral::new(grid16()).unwrap();
        prop_assume!(sp.min_operator_symbol(a, b, c) > 0.0);
        let u = smooth(grid16(), seed, 1.0, 0.3);
        let v = sp.implicit_solve(&sp.apply_operator(&u, a, b, c), a, b, c).unwrap();
        prop_assert!(v.max_abs_diff(&u) < 1e-10);
    }

    #[test]
    fn energy_parts_are_nonnegative(seed in any::<u64>(), amp in 0.1..2.0, mean in -0.5..0.5) {
        let model = EnergyModel::new(grid16(), params()).unwrap();
        let e = model.total_energy(&smooth(grid16(), seed, amp, mean));
        for v in [e.w, e.g, e.t1, e.t2, e.e_m] {
            prop_assert!(v.is_finite() && v >= 0.0, "{e:?}");
        }
        let sum = e.w + e.g + e.t1 + e.t2;
        prop_assert!((e.e_m - sum).abs() <= 1e-12 * sum.max(1.0));
    }

    #[test]
    fn energy_is_invariant_under_periodic_shifts(seed in any::<u64>(), s in (0usize..16, 0usize..16, 0usize..16)) {
        let model = EnergyModel::new(grid16(), params()).unwrap();
        let phi = smooth(grid16(), seed, 1.5, 0.1);
        let a = model.total_energy(&phi);
        let b = model.total_energy(&shifted(&phi, [s.0, s.1, s.2]));
        prop_assert!((a.e_m - b.e_m).abs() <= 1e-10 * a.e_m.max(1.0));
        prop_assert!((a.v - b.v).abs() <= 1e-12);
        prop_assert!((a.d_a - b.d_a).abs() <= 1e-10 * (1.0 + a.d_a.abs()));
    }

    #[test]
    fn variational_derivative_matches_directional_difference(s1 in any::<u64>(), s2 in any::<u64>()) {
        let model = EnergyModel::new(grid16(), params()).unwrap();
        let phi = smooth(grid16(), s1, 1.2, 0.0);
        let psi = smooth(grid16(), s2, 1.0, 0.0);
        let analytic = model.variational_derivative(&phi).dot(&psi);
        let numeric = fd_directional_derivative(&model, &phi, &psi, 1e-4);
        let scale = analytic.abs().max(numeric.abs()).max(1.0);
        prop_assert!((analytic - numeric).abs() <= 1e-5 * scale, "{analytic} vs {numeric}");
    }

    #[test]
    fn measures_respect_phase_inversion(seed in any::<u64>(), amp in 0.1..2.0, mean in -0.5..0.5) {
        let model = EnergyModel::new(grid16(), params()).unwrap();
        let phi = smooth(grid16(), seed, amp, mean);
        let a = model.measures(&phi);
        let b = model.measures(&phi.scale(-1.0));
        prop_assert!((a.volume + b.volume - 1.0).abs() < 1e-12);
        prop_assert!((a.area - b.area).abs() <= 1e-12 * a.area.max(1.0));
        prop_assert!((a.area_difference + b.area_difference).abs() <= 1e-10 * a.area_difference.abs().max(1.0));
    }

    #[test]
    fn pure_phases_have_no_interface(sign in prop::bool::ANY) {
        let model = EnergyModel::new(grid16(), params()).unwrap();
        let c = if sign { 1.0 } else { -1.0 };
        let m = model.measures(&ScalarField3D::constant(grid16(), c));
        prop_assert!((m.volume - (1.0 + c) / 2.0).abs() < 1e-12);
        prop_assert_eq!(m.area, 0.0);
        prop_assert_eq!(m.area_difference, 0.0);
    }

    #[test]
    fn steps_are_deterministic_and_finite(seed in any::<u64>(), scheme in prop::sample::select(vec![Scheme::SemiImplicit, Scheme::BackwardEuler])) {
        let model = EnergyModel::new(grid16(), params()).unwrap();
        let phi = smooth(grid16(), seed, 1.0, 0.0);
        let cfg = IntegratorConfig::new(scheme, 1e-7);
        let a = step(&model, &phi, &cfg).unwrap();
        let b = step(&model, &phi, &cfg).unwrap();
        prop_assert!(a.is_finite());
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn raw_snapshots_round_trip_bit_exactly(seed in any::<u64>(), step_no in 0usize..1_000_000, time in 0.0..1.0f64) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("phi.raw");
        let g = GridSpec::new(8, 6, 4, 1.0, 0.5, 0.25).unwrap();
        let f = smooth(g, seed, 3.0, -0.4);
        let meta = SnapshotMeta::new(g, step_no, time);
        write_raw(&path, &f, &meta).unwrap();
        let (back, meta_back) = read_raw(&path).unwrap();
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!(meta_back, meta);
        prop_assert_eq!(std::fs::metadata(&path).unwrap().len(), 8 * 8 * 6 * 4);
    }

    #[test]
    fn numeric_overrides_are_applied_verbatim(m1 in 1.0..1e6f64, steps in 1usize..1_000_000) {
        let (cfg, prov) = ConfigLoader::new()
            .preset("discocyte")
            .set(&format!("params.M1={m1:e}")).unwrap()
            .set(&format!("stopping.max_steps={steps}")).unwrap()
            .load()
            .unwrap();
        prop_assert_eq!(cfg.model_params().m1, m1);
        prop_assert_eq!(cfg.stopping.max_steps, steps);
        prop_assert_eq!(prov.overrides.len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected(key in "[a-z]{3,8}") {
        prop_assume!(!["epsilon", "kappa", "alpha", "beta"].contains(&key.as_str()));
        let r = ConfigLoader::new().preset("discocyte").set(&format!("params.{key}=1.0")).and_then(|l| l.load());
        prop_assert!(r.is_err());
    }
}
