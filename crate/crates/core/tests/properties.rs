use std::collections::HashSet;
use std::sync::Arc;

use proptest::prelude::*;
use tempered_zigzag::estimators::{is_weight, segment_moment, segment_moments, ModeFilter};
use tempered_zigzag::event_times::DEFAULT_TOL;
use tempered_zigzag::models::{gaussian_model, mixture_model, GaussianSpec, MixtureSpec};
use tempered_zigzag::poly;
use tempered_zigzag::rng::replicate_seed;
use tempered_zigzag::sticky::{run_sticky_tempered, SpikeSlabSpec};
use tempered_zigzag::{
    discretize, first_event_poly, flow, geometric_beta_bound, geometric_x_bound,
    run_tempered_zigzag, run_zigzag, tempered_rates, EventKind, ExtendedState, GeometricPath,
    Horizon, LogKappa, Mode, RateBound, TargetModel, TemperingConfig,
};

fn mixture_path() -> GeometricPath {
    let base: Arc<dyn TargetModel> = Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![5.0, 5.0], 2.0)).unwrap());
    let target: Arc<dyn TargetModel> = Arc::new(
        mixture_model(&MixtureSpec {
            means: vec![vec![2.66, 3.72], vec![5.73, 9.08], vec![9.45, 6.61]],
            sigma2: 0.2,
        })
        .unwrap(),
    );
    GeometricPath::new(base, target).unwrap()
}

fn sign() -> impl Strategy<Value = i8> {
    prop_oneof![Just(1i8), Just(-1i8)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn flow_composes(x in prop::collection::vec(-5.0..5.0f64, 3), v in prop::collection::vec(sign(), 3),
                     beta in 0.0..1.0f64, vb in sign(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let s = ExtendedState::tempering(x, v, beta, vb);
        let room = s.time_to_beta_boundary();
        let (a, b) = (a * room * 0.5, b * room * 0.5);
        let twice = flow(&flow(&s, a).unwrap(), b).unwrap();
        let once = flow(&s, a + b).unwrap();
        for i in 0..3 {
            prop_assert!((twice.x[i] - once.x[i]).abs() < 1e-12);
        }
        prop_assert!((twice.beta - once.beta).abs() < 1e-12);
    }

    #[test]
    fn inversion_hits_the_exponential_level(c0 in -3.0..3.0f64, c1 in -3.0..3.0f64, c2 in 0.01..3.0f64,
                                           u in 1e-9..1.0f64) {
        let coeffs = vec![c0, c1, c2];
        let t = first_event_poly(&RateBound::unbounded(coeffs.clone()), u, DEFAULT_TOL).unwrap().unwrap();
        // integrate max(0, p) numerically on a fine grid
        let n = 20_000;
        let h = t / n as f64;
        let integral: f64 = (0..n)
            .map(|k| {
                let (s0, s1) = (k as f64 * h, (k + 1) as f64 * h);
                let mid = 0.5 * (s0 + s1);
                poly::eval(&coeffs, mid).max(0.0) * h
            })
            .sum();
        prop_assert!((integral - (-u.ln())).abs() < 1e-5 * (1.0 + (-u.ln())), "{integral} vs {}", -u.ln());
    }

    #[test]
    fn inversion_is_monotone_in_u(c0 in -3.0..3.0f64, c1 in 0.01..3.0f64, u1 in 1e-9..1.0f64, u2 in 1e-9..1.0f64) {
        let bound = RateBound::unbounded(vec![c0, c1]);
        let t1 = first_event_poly(&bound, u1, DEFAULT_TOL).unwrap().unwrap();
        let t2 = first_event_poly(&bound, u2, DEFAULT_TOL).unwrap().unwrap();
        if u1 < u2 {
            prop_assert!(t1 >= t2);
        } else {
            prop_assert!(t2 >= t1);
        }
    }

    #[test]
    fn geometric_bounds_dominate(x in prop::collection::vec(-3.0..12.0f64, 2), v in prop::collection::vec(sign(), 2),
                                 beta in 0.0..1.0f64, vb in sign(), frac in 0.0..1.0f64,
                                 psi in prop::collection::vec(-2.0..2.0f64, 0..5)) {
        let path = mixture_path();
        let kappa = LogKappa::new(psi);
        let config = TemperingConfig::new(0.5, kappa.clone(), path.clone()).unwrap();
        let s0 = ExtendedState::tempering(x, v, beta, vb);
        let s = frac * s0.time_to_beta_boundary();
        let rates = tempered_rates(&flow(&s0, s).unwrap(), &config).unwrap();
        for j in 0..2 {
            let b = geometric_x_bound(&path, &s0, j).unwrap();
            prop_assert!(rates[j] <= b.eval(s) * (1.0 + 1e-9) + 1e-9);
        }
        let b = geometric_beta_bound(&path, &kappa, &s0).unwrap();
        prop_assert!(rates[2] <= b.eval(s) * (1.0 + 1e-9) + 1e-9);
    }

    #[test]
    fn mixture_gradient_matches_differences(x in prop::collection::vec(-20.0..20.0f64, 2)) {
        let path = mixture_path();
        let model = path.target();
        let g = model.grad_log_density(&x);
        for i in 0..2 {
            let h = 1e-6;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (model.log_density(&xp) - model.log_density(&xm)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0));
        }
    }

    #[test]
    fn is_weight_identity(delta in 1e-8..30.0f64, negative in any::<bool>()) {
        let d = if negative { -delta } else { delta };
        let w = is_weight(d).unwrap();
        prop_assert!((w * d.exp_m1() - d).abs() <= 1e-12 * d.abs());
    }
}

#[test]
fn mixture_is_overflow_free_far_out() {
    let path = mixture_path();
    for x in [[1e3, -1e3], [-1e3, -1e3], [1e3, 1e3]] {
        assert!(path.target().log_density(&x).is_finite());
        assert!(path.target().grad_log_density(&x).iter().all(|g| g.is_finite()));
    }
}

#[test]
fn replicate_seeds_do_not_collide() {
    let seeds: HashSet<u64> = (0..10_000).map(|i| replicate_seed(42, i)).collect();
    assert_eq!(seeds.len(), 10_000);
}

#[test]
fn discretized_mean_converges_to_segment_integral() {
    let model = gaussian_model(&GaussianSpec::isotropic(vec![0.7], 1.0)).unwrap();
    let init = ExtendedState::untempered(vec![0.0], vec![1]);
    let sk = run_zigzag(&model, &init, Horizon::PathTime(2000.0), 5).unwrap();
    let exact = segment_moment(&sk, 0, 1, ModeFilter::Any, 0.0).unwrap();
    let err = |dt: f64| {
        let s = discretize(&sk, dt, 0.0).unwrap();
        (s.iter().map(|p| p.x[0]).sum::<f64>() / s.len() as f64 - exact).abs()
    };
    let (coarse, fine) = (err(0.1), err(0.01));
    assert!(fine < coarse / 3.0, "coarse {coarse}, fine {fine}");
}

#[test]
fn tempered_and_untempered_agree_on_a_gaussian() {
    let q: Arc<dyn TargetModel> = Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![1.0, -0.5], 0.8)).unwrap());
    let q0: Arc<dyn TargetModel> = Arc::new(gaussian_model(&GaussianSpec::isotropic(vec![0.0, 0.0], 2.0)).unwrap());
    let plain = run_zigzag(q.as_ref(), &ExtendedState::untempered(vec![0.0; 2], vec![1; 2]), Horizon::PathTime(4e4), 1).unwrap();
    let config = TemperingConfig::new(0.5, LogKappa::flat(), GeometricPath::new(q0, q.clone()).unwrap()).unwrap();
    let tempered = run_tempered_zigzag(&config, &ExtendedState::tempering(vec![0.0; 2], vec![1; 2], 0.0, 1), Horizon::PathTime(8e4), 2).unwrap();
    let a = segment_moments(&plain, ModeFilter::Any, 0.0).unwrap();
    let b = segment_moments(&tempered, ModeFilter::Target, 0.0).unwrap();
    let exact = q.exact_moments().unwrap();
    for i in 0..2 {
        assert!((a.mean[i] - b.mean[i]).abs() < 0.06, "{a:?} vs {b:?}");
        assert!((b.mean[i] - exact.mean[i]).abs() < 0.05);
        assert!((b.second[i] - exact.second[i]).abs() < 0.08);
    }
}

#[test]
fn sticking_is_exact_and_stuck_coordinates_stay_at_zero() {
    let spec = SpikeSlabSpec {
        d: 2,
        w: 0.5,
        m: 1.0,
        sigma2: 0.5,
    };
    let init = ExtendedState::tempering(vec![0.3, -0.2], vec![1, 1], 0.0, 1);
    let sk = run_sticky_tempered(&spec, 0.5, &init, Horizon::Events(20_000), 4).unwrap();
    let mut stuck = [false; 2];
    let mut sticks = 0;
    for pair in sk.events.windows(2) {
        let (prev, e) = (&pair[0], &pair[1]);
        if let EventKind::Stick(i) = e.kind {
            sticks += 1;
            // the flowed coordinate reaches zero at the recorded time, up to
            // the rounding of the absolute clock
            let reached = prev.state.x[i] + (e.t - prev.t) * prev.state.effective_velocity(i);
            assert!(reached.abs() < 1e-12 * (1.0 + e.t), "{reached} at t = {}", e.t);
            stuck[i] = true;
        }
        if let EventKind::Unstick(i) = e.kind {
            stuck[i] = false;
        }
        for i in 0..2 {
            if stuck[i] {
                assert_eq!(e.state.x[i], 0.0);
            }
        }
    }
    assert!(sticks > 100);
}

#[test]
fn zero_slab_mean_leaves_beta_without_flips() {
    let spec = SpikeSlabSpec {
        d: 2,
        w: 0.5,
        m: 0.0,
        sigma2: 0.5,
    };
    let init = ExtendedState::tempering(vec![0.3, -0.2], vec![1, 1], 0.0, 1);
    let sk = run_sticky_tempered(&spec, 0.5, &init, Horizon::Events(10_000), 6).unwrap();
    assert!(sk.events.iter().all(|e| e.kind != EventKind::FlipBeta));
    assert!(sk.events.iter().any(|e| e.state.mode == Mode::Target));
}
