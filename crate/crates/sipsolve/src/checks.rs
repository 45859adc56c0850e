//! Oracle checks: discrete adjoint identity, gradient unbiasedness,
//! directional derivatives and dominance of the excess-risk bound.

use std::fmt;

use rayon::prelude::*;

use sipsolve_core::eval::{
    adjoint_identity_gap, directional_derivative_check, estimate_constants, excess_risk,
    gradient_oracle, theorem_bound,
};
use sipsolve_core::grid::l2_norm;
use sipsolve_core::rng::{derive_seed, SipRng};
use sipsolve_core::solvers::sgd_sip;
use sipsolve_core::synthgen::{
    gen_flr, gen_flr_classification, simulate_brownian, FlrGenConfig, FlrStream, DECONV_DOMAIN,
};
use sipsolve_core::{Covariate, DiscreteFn, Grid, LossKind, Problem, ProblemKind, Sample};

use crate::config::ExperimentConfig;
use crate::error::AppError;
use crate::output::{csv_string, real};

/// `Phi(x, w)` as seen by the adjoint check; swapped out by mutation tests.
pub type KernelFn = dyn Fn(&Problem, &Covariate, f64) -> sipsolve_core::Result<f64> + Sync;

pub fn true_kernel(problem: &Problem, x: &Covariate, w: f64) -> sipsolve_core::Result<f64> {
    problem.adjoint_kernel(x, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: measured {:.3e}, tolerance {:.3e} ({})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.tolerance,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CheckReport {
    pub results: Vec<CheckResult>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        csv_string(
            &["check", "passed", "measured", "tolerance", "detail"],
            self.results.iter().map(|r| {
                vec![
                    r.name.clone(),
                    r.passed.to_string(),
                    real(r.measured),
                    real(r.tolerance),
                    r.detail.clone(),
                ]
            }),
        )
    }
}

fn core_err(what: &str) -> impl FnOnce(sipsolve_core::Error) -> AppError + '_ {
    move |e| AppError::Core {
        context: format!("{what} check"),
        source: e,
    }
}

/// Smooth random function with standard normal coefficients.
pub fn random_fn(grid: Grid, rng: &mut SipRng) -> DiscreteFn {
    let c: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
    let (lo, hi) = (grid.lo(), grid.hi());
    DiscreteFn::from_fn(grid, |w| {
        let t = (w - lo) / (hi - lo);
        c[0] + c[1] * (3.0 * t).sin()
            + c[2] * (7.0 * t).cos()
            + c[3] * t * t
            + c[4] * (-8.0 * (t - 0.5).powi(2)).exp()
    })
}

fn flr_gen(config: &ExperimentConfig, n_samples: usize, seed: u64) -> FlrGenConfig {
    FlrGenConfig {
        n_samples,
        ..config.flr.gen_config(seed)
    }
}

/// Worst relative gap `|<A f, h>_m - <f, A*_m h>| / ((1/m) sum |A f(x_i) h_i|)`
/// over random `(f, h, sample set)` triples.
pub fn adjoint_identity(
    config: &ExperimentConfig,
    kind: ProblemKind,
    kernel: &KernelFn,
) -> Result<CheckResult, AppError> {
    let c = &config.checks;
    let what = "adjoint identity";
    let mut rng = SipRng::seed_from_u64(derive_seed(config.seed, 11));
    let (problem, obs) = match kind {
        ProblemKind::Flr => {
            let gen = config.flr.gen_config(config.seed);
            (
                Problem::flr(gen.fine_grid().map_err(core_err(what))?, LossKind::Squared)
                    .map_err(core_err(what))?,
                Some(gen.obs_grid().map_err(core_err(what))?),
            )
        }
        ProblemKind::Deconv => {
            let grid = config
                .deconv
                .gen_config(config.seed)
                .fine_grid()
                .map_err(core_err(what))?;
            (Problem::deconv(grid, LossKind::Squared), None)
        }
    };
    let mut worst: f64 = 0.0;
    for _ in 0..c.adjoint_trials {
        let f = random_fn(*problem.w_grid(), &mut rng);
        let xs: Vec<Covariate> = (0..c.adjoint_samples)
            .map(|_| match obs {
                Some(g) => Covariate::Path(simulate_brownian(&g, &mut rng)),
                None => {
                    let (lo, hi) = DECONV_DOMAIN;
                    Covariate::Point(lo + (hi - lo) * rng.uniform())
                }
            })
            .collect();
        let h: Vec<f64> = xs.iter().map(|_| rng.normal()).collect();
        let (lhs, rhs) = adjoint_identity_gap(&problem, &f, &xs, &h, |x, w| kernel(&problem, x, w))
            .map_err(core_err(what))?;
        let mut scale = 0.0;
        for (x, hi) in xs.iter().zip(&h) {
            scale += (problem.forward(&f, x).map_err(core_err(what))? * hi).abs();
        }
        scale = (scale / xs.len() as f64).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    let label = match kind {
        ProblemKind::Flr => "flr",
        ProblemKind::Deconv => "deconv",
    };
    Ok(CheckResult {
        name: format!("adjoint-identity-{label}"),
        passed: worst < c.adjoint_tol,
        measured: worst,
        tolerance: c.adjoint_tol,
        detail: format!(
            "worst of {} triples, {} samples each",
            c.adjoint_trials, c.adjoint_samples
        ),
    })
}

/// Sum of stochastic gradients at `f` over `m` streamed samples, in chunks.
fn streamed_gradient_sums(
    problem: &Problem,
    f: &DiscreteFn,
    stream: &mut FlrStream,
    checkpoints: &[usize],
) -> sipsolve_core::Result<Vec<DiscreteFn>> {
    const CHUNK: usize = 10_000;
    let mut sum = DiscreteFn::zeros(*problem.w_grid());
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut done = 0;
    for &target in checkpoints {
        while done < target {
            let take = CHUNK.min(target - done);
            let chunk: Vec<Sample> = (0..take).map(|_| stream.next_sample()).collect();
            sum.add_scaled(take as f64, &gradient_oracle(problem, f, &chunk)?)?;
            done += take;
        }
        out.push(sum.clone());
    }
    Ok(out)
}

/// Relative L2 error of the mean stochastic gradient at `f = 0` against a
/// large Monte Carlo oracle, at two sample sizes.
pub fn unbiasedness(config: &ExperimentConfig) -> Result<CheckResult, AppError> {
    let c = &config.checks;
    let what = "unbiasedness";
    if c.unbiased_m == 0 || c.oracle_m == 0 || c.unbiased_small_m == 0 {
        return Err(AppError::Config(
            "unbiasedness needs at least one sample".into(),
        ));
    }
    let reference = gen_flr(&flr_gen(
        config,
        config.flr.n_samples,
        derive_seed(config.seed, 20),
    ))
    .map_err(core_err(what))?;
    let grid = reference.f_true.grid();
    let problem = Problem::flr(*grid, LossKind::Squared).map_err(core_err(what))?;
    let f = DiscreteFn::zeros(*grid);

    let mut oracle_stream = FlrStream::new(
        &flr_gen(config, 1, derive_seed(config.seed, 21)),
        reference.sigma_eps,
    )
    .map_err(core_err(what))?;
    let mut oracle = streamed_gradient_sums(&problem, &f, &mut oracle_stream, &[c.oracle_m])
        .map_err(core_err(what))?
        .remove(0);
    oracle.scale(1.0 / c.oracle_m as f64);
    let scale = l2_norm(&oracle);

    let mut stream = FlrStream::new(
        &flr_gen(config, 1, derive_seed(config.seed, 22)),
        reference.sigma_eps,
    )
    .map_err(core_err(what))?;
    let sums = streamed_gradient_sums(
        &problem,
        &f,
        &mut stream,
        &[c.unbiased_small_m, c.unbiased_m],
    )
    .map_err(core_err(what))?;
    let errors: Vec<f64> = sums
        .into_iter()
        .zip([c.unbiased_small_m, c.unbiased_m])
        .map(|(mut s, m)| {
            s.scale(1.0 / m as f64);
            s.add_scaled(-1.0, &oracle).expect("same grid");
            l2_norm(&s) / scale
        })
        .collect();
    let (small, large) = (errors[0], errors[1]);
    Ok(CheckResult {
        name: "gradient-unbiasedness".into(),
        passed: large < c.unbiased_tol && large < small,
        measured: large,
        tolerance: c.unbiased_tol,
        detail: format!(
            "relative L2 error {large:.3e} at m={}, {small:.3e} at m={}, oracle m={}",
            c.unbiased_m, c.unbiased_small_m, c.oracle_m
        ),
    })
}

/// Analytic directional derivative of the empirical risk against a central
/// difference, worst relative error over random directions.
pub fn directional(config: &ExperimentConfig, loss: LossKind) -> Result<CheckResult, AppError> {
    let c = &config.checks;
    let what = "directional derivative";
    let gen = flr_gen(config, c.directional_samples, derive_seed(config.seed, 30));
    let data = match loss {
        LossKind::Squared => gen_flr(&gen),
        LossKind::Logistic => gen_flr_classification(&gen),
    }
    .map_err(core_err(what))?;
    let problem = Problem::flr(*data.f_true.grid(), loss).map_err(core_err(what))?;
    let mut rng = SipRng::seed_from_u64(derive_seed(config.seed, 31));
    let mut worst: f64 = 0.0;
    for _ in 0..c.directions {
        let f = random_fn(*problem.w_grid(), &mut rng);
        let g = random_fn(*problem.w_grid(), &mut rng);
        let (a, n) = directional_derivative_check(&problem, &f, &g, &data.samples, c.delta)
            .map_err(core_err(what))?;
        worst = worst.max((a - n).abs() / a.abs().max(f64::MIN_POSITIVE));
    }
    Ok(CheckResult {
        name: format!("directional-derivative-{loss}"),
        passed: worst < c.directional_tol,
        measured: worst,
        tolerance: c.directional_tol,
        detail: format!(
            "worst of {} directions, {} samples, delta {}",
            c.directions, c.directional_samples, c.delta
        ),
    })
}

/// Held-out evaluation samples with a fixed noise level.
fn eval_set(config: &ExperimentConfig, seed: u64) -> sipsolve_core::Result<(Vec<Sample>, f64)> {
    let reference = gen_flr(&flr_gen(config, config.flr.n_samples, derive_seed(seed, 1)))?;
    let mut stream = FlrStream::new(
        &flr_gen(config, 1, derive_seed(seed, 2)),
        reference.sigma_eps,
    )?;
    Ok((
        (0..config.eval_n).map(|_| stream.next_sample()).collect(),
        reference.sigma_eps,
    ))
}

/// One SGD-SIP replicate at sample size `n`: `(excess risk, bound)`.
fn sgd_replicate(
    config: &ExperimentConfig,
    n: usize,
    seed: u64,
    eval: &[Sample],
    with_bound: bool,
) -> sipsolve_core::Result<(f64, f64)> {
    let data = gen_flr(&flr_gen(config, n, seed))?;
    let problem = Problem::flr(*data.f_true.grid(), LossKind::Squared)?;
    let solver = config.solver.sgd.solver_config(n);
    let out = sgd_sip(
        &problem,
        &data.samples,
        &DiscreteFn::zeros(*problem.w_grid()),
        &solver,
    )?;
    let excess = excess_risk(&problem, &out.f_hat, &data.f_true, eval)?;
    let bound = if with_bound {
        let diameter = config
            .bound
            .diameter
            .unwrap_or(2.0 * data.f_true.sup_norm());
        theorem_bound(&estimate_constants(
            &problem,
            &data.samples,
            diameter,
            n,
            solver.schedule,
        )?)?
    } else {
        f64::NAN
    };
    Ok((excess, bound))
}

fn replicate_runs(
    config: &ExperimentConfig,
    n: usize,
    reps: usize,
    eval: &[Sample],
    with_bound: bool,
) -> Result<Vec<(f64, f64)>, AppError> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(derive_seed(config.seed, n as u64), r as u64);
            sgd_replicate(config, n, seed, eval, with_bound).map_err(|source| AppError::Solver {
                replicate: r,
                method: "sgd".into(),
                source,
            })
        })
        .collect()
}

/// Mean excess risk over replicates against the smallest bound value among
/// them.
pub fn bound_dominance(config: &ExperimentConfig) -> Result<CheckResult, AppError> {
    let c = &config.checks;
    let (eval, _) = eval_set(config, derive_seed(config.seed, 40)).map_err(core_err("bound"))?;
    let runs = replicate_runs(config, c.bound_n, c.bound_replicates, &eval, true)?;
    let mean_excess = runs.iter().map(|r| r.0).sum::<f64>() / runs.len() as f64;
    let bound = runs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(CheckResult {
        name: "bound-dominance".into(),
        passed: mean_excess <= bound,
        measured: mean_excess,
        tolerance: bound,
        detail: format!(
            "mean excess risk over {} replicates at n={} against the smallest bound",
            c.bound_replicates, c.bound_n
        ),
    })
}

/// Mean SGD-SIP excess risk over `reps` replicates at each sample size.
pub fn excess_risk_curve(
    config: &ExperimentConfig,
    ns: &[usize],
    reps: usize,
) -> Result<Vec<(usize, f64)>, AppError> {
    let (eval, _) = eval_set(config, derive_seed(config.seed, 50)).map_err(core_err("rate"))?;
    ns.iter()
        .map(|&n| {
            let runs = replicate_runs(config, n, reps, &eval, false)?;
            Ok((n, runs.iter().map(|r| r.0).sum::<f64>() / reps as f64))
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, e)| ((n as f64).ln(), e.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Every check at the configured sizes, with `kernel` standing in for the
/// adjoint kernel.
pub fn run_checks_with(
    config: &ExperimentConfig,
    kernel: &KernelFn,
) -> Result<CheckReport, AppError> {
    config.validate()?;
    let results = vec![
        adjoint_identity(config, ProblemKind::Flr, kernel)?,
        adjoint_identity(config, ProblemKind::Deconv, kernel)?,
        unbiasedness(config)?,
        directional(config, LossKind::Squared)?,
        directional(config, LossKind::Logistic)?,
        bound_dominance(config)?,
    ];
    Ok(CheckReport { results })
}

pub fn run_checks(config: &ExperimentConfig) -> Result<CheckReport, AppError> {
    run_checks_with(config, &true_kernel)
}
