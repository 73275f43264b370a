use lazylab::datagen::{make_dataset, sample_sphere, TargetFunction};
use lazylab::experiment::{BetaSpec, ExperimentConfig, ExperimentKind};
use lazylab::kernel::{kernel_a_closed, kernel_b_closed};
use lazylab::model::{self, init_params, InitConfig};
use lazylab::{linalg, rng, theory};
use proptest::prelude::*;
use rand::Rng;

fn cfg() -> ProptestConfig {
    ProptestConfig { cases: 48, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cfg())]

    #[test]
    fn sphere_samples_have_unit_norm(n in 1usize..20, d in 1usize..30, seed in any::<u64>()) {
        let x = sample_sphere(n, d, seed).unwrap();
        for r in x.rows() {
            prop_assert!((r.dot(&r).sqrt() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn streams_replay(seed in any::<u64>(), tag in any::<u64>()) {
        let a: u64 = rng::stream(seed, &[tag]).random();
        let b: u64 = rng::stream(seed, &[tag]).random();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn kernels_are_symmetric_and_bounded(d in 2usize..40, seed in any::<u64>()) {
        let x = sample_sphere(2, d, seed).unwrap();
        let (p, q) = (x.row(0), x.row(1));
        let (ka, kb) = (kernel_a_closed(p, q), kernel_b_closed(p, q));
        prop_assert_eq!(ka, kernel_a_closed(q, p));
        prop_assert_eq!(kb, kernel_b_closed(q, p));
        prop_assert!(ka >= 0.0 && ka <= 1.0 / (2.0 * d as f64) + 1e-15);
        prop_assert!(kb.abs() <= 0.5 + 1e-15);
        prop_assert_eq!(kernel_a_closed(p, p), 1.0 / (2.0 * d as f64));
        prop_assert_eq!(kernel_b_closed(p, p), 0.5);
    }

    #[test]
    fn gram_is_symmetric_psd_and_satisfies_the_gradient_identity(
        n in 2usize..8, d in 2usize..6, m in 1usize..30, beta in 0.0f64..3.0, seed in any::<u64>()
    ) {
        let data = make_dataset(&TargetFunction::RandomLabels, n, d, seed, 1).unwrap();
        let p = init_params(&InitConfig { m, d, beta, seed }).unwrap();
        let g = theory::gram_matrices(&p, data.inputs()).unwrap();
        prop_assert!(linalg::asymmetry(g.g.view()) == 0.0);
        let lo = linalg::min_eigenvalue(g.g.view(), linalg::default_tol(g.g.view())).unwrap();
        prop_assert!(lo >= -1e-12);
        let (lhs, rhs) = theory::gradient_norm_identity_check(&p, &data).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.max(1.0));
    }

    #[test]
    fn empirical_risk_is_half_mean_square(n in 1usize..20, d in 1usize..5, m in 1usize..10, seed in any::<u64>()) {
        let data = make_dataset(&TargetFunction::RandomLabels, n, d, seed, 1).unwrap();
        let p = init_params(&InitConfig { m, d, beta: 0.7, seed }).unwrap();
        let r = model::empirical_risk(&p, &data).unwrap();
        let mut direct = 0.0;
        for (x, y) in data.inputs().rows().into_iter().zip(data.labels()) {
            let f = model::forward(&p, x).unwrap();
            direct += (f - y) * (f - y);
        }
        direct /= 2.0 * n as f64;
        prop_assert!((r - direct).abs() <= 1e-13 * direct.max(1.0));
    }

    #[test]
    fn envelope_is_decreasing_in_time(r0 in 0.01f64..10.0, m in 1usize..10_000, la in 1e-4f64..1.0, lb in 1e-4f64..1.0, beta in 0.0f64..10.0, t in 0.0f64..1.0, dt in 1e-6f64..1.0) {
        let e0 = theory::decay_envelope(r0, m, la, lb, beta, t);
        let e1 = theory::decay_envelope(r0, m, la, lb, beta, t + dt);
        prop_assert!(e1 <= e0 && e0 <= r0);
    }

    #[test]
    fn deviation_radii_are_consistent(r0 in 0.0f64..10.0, m in 1usize..10_000, la in 1e-4f64..1.0, lb in 1e-4f64..1.0, beta in 0.0f64..10.0) {
        let (p, q) = theory::pq_bounds(r0, m, la, lb, beta).unwrap();
        prop_assert!(p >= 0.0);
        prop_assert!((q - p * p - beta * p).abs() <= 1e-12 * q.max(1.0));
    }

    #[test]
    fn init_risk_bound_grows_with_beta_and_shrinks_with_delta(m in 1usize..10_000, beta in 0.0f64..1.0, delta in 0.01f64..0.99) {
        let b = theory::init_risk_bound(m, beta, delta).unwrap();
        prop_assert!(b >= 0.5);
        prop_assert!(theory::init_risk_bound(m, beta * 2.0 + 1e-3, delta).unwrap() > b);
        prop_assert!(theory::init_risk_bound(m, beta, (delta / 2.0).max(1e-3)).unwrap() >= b);
    }

    #[test]
    fn rad_bound_is_monotone_above_unit_norm(a in 1.0f64..100.0, m in 1usize..1000, n in 1usize..1000, delta in 0.01f64..0.99) {
        let lo = theory::rad_gen_bound(a, m, n, delta).unwrap();
        let hi = theory::rad_gen_bound(2.0 * a, m, n, delta).unwrap();
        prop_assert!(hi >= lo);
    }

    #[test]
    fn frequency_tolerance_exceeds_delta(delta in 0.001f64..0.999, trials in 1usize..1000) {
        let tol = theory::frequency_tolerance(delta, trials);
        prop_assert!(tol > delta);
        prop_assert!(theory::frequency_tolerance(delta, trials * 4) < tol);
    }

    #[test]
    fn configs_round_trip_through_json(kind in 0usize..5, seeds in prop::collection::vec(any::<u64>(), 1..4), beta in 0.0f64..100.0) {
        let mut c = ExperimentConfig::preset(ExperimentKind::ALL[kind]);
        c.seeds = seeds;
        c.betas.push(BetaSpec::Fixed(beta));
        let back = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        prop_assert_eq!(back.hash(), c.hash());
        prop_assert_eq!(back, c);
    }
}
