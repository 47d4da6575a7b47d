use proptest::prelude::*;

use slreset::config::{initial_velocity, InitialData, SimConfig};
use slreset::diagnostics::{energy, enstrophy};
use slreset::ensemble::{check_reset, reset_statistic, run, EnsembleState};
use slreset::flow::{
    em_step, forward_residual, init_flow, invert_map, reverse_residual, FlowMap, InversionOptions,
};
use slreset::reference::{ns_energy_decay, NsSolver};
use slreset::torus::{
    curl2d, divergence, leray_project, ScalarField, ScalarInterpolant, TorusGrid, VectorField,
    VectorInterpolant,
};
use slreset::weber::{ensemble_mean, vorticity_velocity, weber_velocity};

fn smooth_map(g: &TorusGrid, a: f64, p: [f64; 4]) -> FlowMap {
    FlowMap::from_displacement(VectorField::from_fn(g, |x, y| {
        [a * (y + p[0]).sin() + p[2], a * (x + p[1]).sin() + p[3]]
    }))
    .unwrap()
}

fn random(seed: u64, energy: f64) -> InitialData {
    InitialData::Random {
        k_min: 1.0,
        k_max: 4.0,
        slope: -1.0,
        energy,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn inversion_consistency(a in 0.0..0.1f64, p in prop::array::uniform4(-3.0..3.0f64)) {
        let g = TorusGrid::new(64).unwrap();
        let m = smooth_map(&g, a, p);
        let inv = invert_map(&m, InversionOptions::default(), None).unwrap();
        prop_assert!(forward_residual(&m, &inv) <= 1e-9);
        prop_assert!(reverse_residual(&m, &inv) <= 1e-7);
    }

    #[test]
    fn reconstructions_divergence_free(a in 0.0..0.1f64, p in prop::array::uniform4(-3.0..3.0f64), seed in 0u64..100) {
        let g = TorusGrid::new(32).unwrap();
        let u0 = leray_project(&initial_velocity(&g, &random(seed, 5.0)));
        let inv = invert_map(&smooth_map(&g, a, p), InversionOptions::default(), None).unwrap();
        let w = weber_velocity(&inv, &VectorInterpolant::new(&u0));
        let v = vorticity_velocity(&inv, &ScalarInterpolant::new(&curl2d(&u0)));
        prop_assert!(divergence(&w).max_abs() <= 1e-10);
        prop_assert!(divergence(&v).max_abs() <= 1e-10);
    }

    #[test]
    fn energy_triangle_inequality(seeds in prop::collection::vec(0u64..1000, 1..6)) {
        let g = TorusGrid::new(16).unwrap();
        let us: Vec<VectorField> = seeds.iter().map(|&s| initial_velocity(&g, &random(s, 1.0 + s as f64))).collect();
        let mean = ensemble_mean(&us).unwrap();
        let n = us.len() as f64;
        let bound = (us.iter().map(|u| energy(u).sqrt()).sum::<f64>() / n).powi(2);
        prop_assert!(energy(&mean) >= 0.0);
        prop_assert!(energy(&mean) <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn reset_restores_full_correlation(copies in 2usize..6, seed in 0u64..1000, steps in 1u64..4) {
        let cfg = SimConfig {
            n: 16,
            copies,
            nu: 0.2,
            dt: 0.05,
            seed,
            initial: random(seed, 3.0),
            ..Default::default()
        };
        let mut st = EnsembleState::new(&cfg).unwrap();
        for _ in 0..steps {
            st.step().unwrap();
        }
        let s = st.mean_statistic();
        st.perform_reset(s);
        let n = copies as f64;
        for r in &st.replicas {
            let ratio = reset_statistic(&r.gram) / (n * (n - 1.0) * r.e_reset);
            prop_assert!((ratio - 1.0).abs() <= 1e-10);
            prop_assert!(!check_reset(reset_statistic(&r.gram), r.e_reset, 0.999, copies));
        }
    }

    #[test]
    fn reference_enstrophy_non_increasing(seed in 0u64..1000, nu in 0.01..0.2f64) {
        let g = TorusGrid::new(32).unwrap();
        let w0 = curl2d(&leray_project(&initial_velocity(&g, &random(seed, 10.0))));
        let traj = NsSolver::new(&g, nu, 0.01).unwrap().trajectory(&w0, 30, 1).unwrap();
        let pts = ns_energy_decay(&traj, nu);
        for w in pts.windows(2) {
            prop_assert!(w[1].enstrophy <= w[0].enstrophy * (1.0 + 1e-12));
            prop_assert!(w[1].energy <= w[0].energy * (1.0 + 1e-12));
        }
    }
}

#[test]
fn inviscid_flow_preserves_mean_volume() {
    let g = TorusGrid::new(32).unwrap();
    let u = VectorField::from_fn(&g, |x, y| [x.sin() * y.cos(), -x.cos() * y.sin()]);
    let drift = VectorInterpolant::new(&u);
    let dt = 0.01;
    let mut m = init_flow(&g);
    for _ in 0..100 {
        m = em_step(&m, &drift, dt, [0.0, 0.0], 0.0).unwrap();
    }
    let det = m.jacobian_det();
    assert!((det.mean() - 1.0).abs() <= dt, "{}", det.mean());
}

#[test]
fn reference_taylor_green_is_exact_at_every_resolution() {
    for n in [16, 32, 64] {
        let g = TorusGrid::new(n).unwrap();
        let w0 = ScalarField::from_fn(&g, |x, y| 2.0 * x.sin() * y.sin());
        let s = NsSolver::new(&g, 0.1, 0.01).unwrap();
        let (t, w) = s.trajectory(&w0, 50, 50).unwrap().pop().unwrap();
        let err = w.sub(&w0.scale((-0.2 * t).exp())).max_abs();
        assert!(err < 1e-12, "n = {n}: {err}");
    }
}

#[test]
fn final_energy_decreases_with_copies() {
    let mean_final = |copies| {
        let cfg = SimConfig {
            n: 16,
            copies,
            replicas: 4,
            nu: 0.2,
            dt: 0.02,
            t_final: 0.5,
            record_every: 25,
            ..Default::default()
        };
        let out = run(&cfg).unwrap();
        out.state
            .replicas
            .iter()
            .map(|r| energy(&r.u_mean))
            .sum::<f64>()
            / 4.0
    };
    let e: Vec<f64> = [4, 16, 64].into_iter().map(mean_final).collect();
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}

#[test]
fn copy_enstrophy_matches_gram_diagonal() {
    let cfg = SimConfig {
        n: 16,
        copies: 3,
        dt: 0.05,
        t_final: 0.2,
        initial: random(1, 4.0),
        ..Default::default()
    };
    let out = run(&cfg).unwrap();
    let r = &out.state.replicas[0];
    for (i, c) in r.copies.iter().enumerate() {
        let z = enstrophy(&c.velocity);
        assert!((z - r.gram.get(i, i)).abs() <= 1e-12 * z);
    }
}

#[test]
fn taylor_green_ensemble_loses_energy() {
    let cfg = SimConfig {
        n: 64,
        copies: 16,
        nu: 0.05,
        dt: 0.01,
        t_final: 2.0,
        record_every: 50,
        initial: InitialData::TaylorGreen { amplitude: 1.0 },
        ..Default::default()
    };
    let out = run(&cfg).unwrap();
    let first = out.records.first().unwrap().energy;
    let last = out.records.last().unwrap().energy;
    assert!(last < first, "{first} -> {last}");
}
