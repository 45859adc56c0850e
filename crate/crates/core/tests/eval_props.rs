use sipsolve_core::eval::{directional_derivative_check, empirical_risk, gradient_oracle};
use sipsolve_core::grid::l2_norm;
use sipsolve_core::rng::SipRng;
use sipsolve_core::synthgen::{gen_flr, gen_flr_classification, FlrGenConfig, FlrStream};
use sipsolve_core::{DiscreteFn, Grid, LossKind, Problem, Sample};

fn random_fn(grid: Grid, rng: &mut SipRng) -> DiscreteFn {
    let c: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
    DiscreteFn::from_fn(grid, |w| {
        c[0] + c[1] * (3.0 * w).sin() + c[2] * (7.0 * w).cos() + c[3] * w * w
    })
}

fn flr_data(loss: LossKind, n: usize) -> (Problem, Vec<Sample>) {
    let cfg = FlrGenConfig {
        n_samples: n,
        fine_n: 200,
        obs_n: 100,
        amplitude: if loss == LossKind::Logistic { 5.0 } else { 1.0 },
        seed: 11,
        ..Default::default()
    };
    let d = match loss {
        LossKind::Squared => gen_flr(&cfg).unwrap(),
        LossKind::Logistic => gen_flr_classification(&cfg).unwrap(),
    };
    (
        Problem::flr(cfg.fine_grid().unwrap(), loss).unwrap(),
        d.samples,
    )
}

#[test]
fn directional_derivatives_match_finite_differences() {
    for loss in [LossKind::Squared, LossKind::Logistic] {
        let (p, samples) = flr_data(loss, 1000);
        let mut rng = SipRng::seed_from_u64(3);
        for _ in 0..5 {
            let f = random_fn(*p.w_grid(), &mut rng);
            let g = random_fn(*p.w_grid(), &mut rng);
            let (a, n) = directional_derivative_check(&p, &f, &g, &samples, 1e-4).unwrap();
            assert!(
                (a - n).abs() <= 1e-5 * a.abs().max(1e-3),
                "{loss}: {a} vs {n}"
            );
        }
        let zero = DiscreteFn::zeros(*p.w_grid());
        let (a, n) = directional_derivative_check(&p, &zero, &zero, &samples, 1e-4).unwrap();
        assert_eq!((a, n), (0.0, 0.0));
    }
}

#[test]
fn risk_is_convex_along_segments() {
    for loss in [LossKind::Squared, LossKind::Logistic] {
        let (p, samples) = flr_data(loss, 300);
        let mut rng = SipRng::seed_from_u64(4);
        for _ in 0..5 {
            let f = random_fn(*p.w_grid(), &mut rng);
            let g = random_fn(*p.w_grid(), &mut rng);
            let rf = empirical_risk(&p, &f, &samples).unwrap();
            let rg = empirical_risk(&p, &g, &samples).unwrap();
            for k in 0..=10 {
                let l = k as f64 / 10.0;
                let mut mix = f.clone();
                mix.scale(l);
                mix.add_scaled(1.0 - l, &g).unwrap();
                let r = empirical_risk(&p, &mix, &samples).unwrap();
                assert!(r <= l * rf + (1.0 - l) * rg + 1e-10);
            }
        }
    }
}

#[test]
fn mean_gradient_error_shrinks_like_inverse_root() {
    let cfg = FlrGenConfig {
        fine_n: 200,
        obs_n: 100,
        seed: 8,
        ..Default::default()
    };
    let sigma = gen_flr(&cfg).unwrap().sigma_eps;
    let p = Problem::flr(cfg.fine_grid().unwrap(), LossKind::Squared).unwrap();
    let f = DiscreteFn::zeros(*p.w_grid());

    let oracle_cfg = FlrGenConfig {
        seed: 9,
        ..cfg.clone()
    };
    let mut stream = FlrStream::new(&oracle_cfg, sigma).unwrap();
    let big: Vec<Sample> = (0..100_000).map(|_| stream.next_sample()).collect();
    let oracle = gradient_oracle(&p, &f, &big).unwrap();
    let scale = l2_norm(&oracle);

    let mut errs = Vec::new();
    for m in [1_000usize, 10_000] {
        let mut e = 0.0;
        for r in 0..4 {
            let mut s = FlrStream::new(
                &FlrGenConfig {
                    seed: 100 + r,
                    ..cfg.clone()
                },
                sigma,
            )
            .unwrap();
            let batch: Vec<Sample> = (0..m).map(|_| s.next_sample()).collect();
            let mut d = gradient_oracle(&p, &f, &batch).unwrap();
            d.add_scaled(-1.0, &oracle).unwrap();
            e += l2_norm(&d) / scale / 4.0;
        }
        errs.push(e);
    }
    let slope = (errs[1] / errs[0]).log10();
    assert!(slope < -0.3, "errors {errs:?}, slope {slope}");
}
