//! Replicated experiment runs and their output files.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use sipsolve_core::eval::{
    estimate_constants, excess_risk, kfold_cv, mse_function, replicate_stats, theorem_bound,
};
use sipsolve_core::rng::derive_seed;
use sipsolve_core::solvers::{landweber, ml_sgd, sgd_sip};
use sipsolve_core::synthgen::{
    gen_deconv, gen_flr, gen_flr_classification, gen_flr_classification_from, FlrStream,
};
use sipsolve_core::{
    Covariate, DiscreteFn, Grid, LossKind, Problem, Sample, SampleMode, SolverOutput,
};

use crate::config::{ExperimentConfig, ExperimentKind, Method};
use crate::error::AppError;
use crate::output::{csv_string, opt_real, real, write_file};

/// Mixed into a replicate seed to draw its held-out evaluation set.
pub const EVAL_SALT: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicateSeeds {
    pub replicate: usize,
    pub seed: u64,
    pub eval_seed: u64,
}

impl ReplicateSeeds {
    pub fn new(master: u64, replicate: usize) -> Self {
        let seed = derive_seed(master, replicate as u64);
        ReplicateSeeds {
            replicate,
            seed,
            eval_seed: seed ^ EVAL_SALT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub method: Method,
    pub replicate: usize,
    pub n: usize,
    pub mse: f64,
    pub excess_risk: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub method: Method,
    pub replicate: usize,
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub seeds: ReplicateSeeds,
    pub metrics: Vec<MetricRow>,
    pub folds: Vec<FoldRow>,
    /// Truth and every estimate on the output grid.
    pub f_true: DiscreteFn,
    pub fits: Vec<(Method, DiscreteFn)>,
    pub data_csv: Option<String>,
    pub timings_ms: Vec<(Method, f64)>,
}

/// Mean and, with two or more replicates, the sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub sd: Option<f64>,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        match replicate_stats(values) {
            Ok(s) => Spread {
                mean: s.mean,
                sd: Some(s.sd),
            },
            Err(_) => Spread {
                mean: values.iter().sum::<f64>() / values.len() as f64,
                sd: None,
            },
        }
    }

    fn cells(&self) -> [String; 2] {
        [real(self.mean), opt_real(self.sd.map(|s| 2.0 * s))]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub n_reps: usize,
    pub mse: Spread,
    pub excess_risk: Spread,
    /// Mean cross-validated accuracy and kappa, classification only.
    pub accuracy: Option<Spread>,
    pub kappa: Option<Spread>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config: ExperimentConfig,
    pub jobs: usize,
    pub replicates: Vec<ReplicateResult>,
    pub summary: Vec<SummaryRow>,
    pub total_ms: f64,
}

impl RunOutcome {
    pub fn metrics(&self) -> impl Iterator<Item = &MetricRow> {
        self.replicates.iter().flat_map(|r| r.metrics.iter())
    }

    pub fn summary_for(&self, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method)
    }
}

fn solver_error(replicate: usize, method: Method) -> impl FnOnce(sipsolve_core::Error) -> AppError {
    move |source| AppError::Solver {
        replicate,
        method: method.to_string(),
        source,
    }
}

fn fit(
    config: &ExperimentConfig,
    method: Method,
    problem: &Problem,
    samples: &[Sample],
) -> sipsolve_core::Result<SolverOutput> {
    let n = samples.len();
    let f0 = DiscreteFn::zeros(*problem.w_grid());
    match method {
        Method::Sgd => sgd_sip(problem, samples, &f0, &config.solver.sgd.solver_config(n)),
        Method::Mlsgd => ml_sgd(problem, samples, &f0, &config.solver.mlsgd.solver_config(n)),
        Method::Landweber => {
            let lw = &config.solver.landweber;
            landweber(
                problem,
                samples,
                &f0,
                lw.iterations,
                lw.schedule.build(lw.eta, n),
                false,
            )
        }
    }
}

/// Bound value for plain streaming SGD with the squared loss; `None`
/// elsewhere.
fn bound_for(
    config: &ExperimentConfig,
    method: Method,
    problem: &Problem,
    samples: &[Sample],
    f_true: &DiscreteFn,
) -> sipsolve_core::Result<Option<f64>> {
    let s = &config.solver.sgd;
    let cfg = s.solver_config(samples.len());
    if method != Method::Sgd
        || problem.loss() != LossKind::Squared
        || cfg.mode != SampleMode::Streaming
    {
        return Ok(None);
    }
    let diameter = config.bound.diameter.unwrap_or(2.0 * f_true.sup_norm());
    let inputs = estimate_constants(problem, samples, diameter, samples.len(), cfg.schedule)?;
    theorem_bound(&inputs).map(Some)
}

struct Prepared {
    problem: Problem,
    samples: Vec<Sample>,
    eval: Vec<Sample>,
    /// Truth on the output grid.
    f_true: DiscreteFn,
    out_grid: Grid,
}

fn prepare(config: &ExperimentConfig, seeds: ReplicateSeeds) -> sipsolve_core::Result<Prepared> {
    match config.experiment {
        ExperimentKind::Deconv => {
            let gen = config.deconv.gen_config(seeds.seed);
            let data = gen_deconv(&gen)?;
            let eval_gen = sipsolve_core::synthgen::DeconvGenConfig {
                n_samples: Some(config.eval_n),
                seed: seeds.eval_seed,
                ..gen.clone()
            };
            let eval = gen_deconv(&eval_gen)?.samples;
            Ok(Prepared {
                problem: Problem::deconv(gen.obs_grid()?, LossKind::Squared),
                samples: data.samples,
                eval,
                out_grid: gen.fine_grid()?,
                f_true: data.f_true,
            })
        }
        ExperimentKind::FlrClassify => {
            let gen = config.flr.gen_config(seeds.seed);
            let data = gen_flr_classification(&gen)?;
            let eval_gen = sipsolve_core::synthgen::FlrGenConfig {
                n_samples: config.eval_n,
                seed: seeds.eval_seed,
                ..gen.clone()
            };
            let eval = gen_flr_classification_from(&eval_gen, data.f_true.clone())?.samples;
            let grid = gen.fine_grid()?;
            Ok(Prepared {
                problem: Problem::flr(grid, LossKind::Logistic)?,
                samples: data.samples,
                eval,
                out_grid: grid,
                f_true: data.f_true,
            })
        }
        _ => {
            let gen = config.flr.gen_config(seeds.seed);
            let data = gen_flr(&gen)?;
            let eval_gen = sipsolve_core::synthgen::FlrGenConfig {
                n_samples: config.eval_n,
                seed: seeds.eval_seed,
                ..gen.clone()
            };
            let mut stream = FlrStream::new(&eval_gen, data.sigma_eps)?;
            let eval = (0..config.eval_n).map(|_| stream.next_sample()).collect();
            let grid = gen.fine_grid()?;
            Ok(Prepared {
                problem: Problem::flr(grid, LossKind::Squared)?,
                samples: data.samples,
                eval,
                out_grid: grid,
                f_true: data.f_true,
            })
        }
    }
}

fn data_csv(samples: &[Sample]) -> String {
    match samples.first().map(|s| &s.x) {
        Some(Covariate::Path(p)) => {
            let m = p.values().len();
            let names: Vec<String> = (0..m).map(|j| format!("x_{j}")).collect();
            let mut header = vec!["id", "y"];
            header.extend(names.iter().map(String::as_str));
            csv_string(
                &header,
                samples.iter().enumerate().map(|(i, s)| {
                    let mut row = vec![i.to_string(), real(s.y)];
                    if let Covariate::Path(p) = &s.x {
                        row.extend(p.values().iter().map(|&v| real(v)));
                    }
                    row
                }),
            )
        }
        _ => csv_string(
            &["x", "y"],
            samples.iter().map(|s| match s.x {
                Covariate::Point(x) => vec![real(x), real(s.y)],
                Covariate::Path(_) => unreachable!("mixed covariates"),
            }),
        ),
    }
}

pub fn run_replicate(
    config: &ExperimentConfig,
    replicate: usize,
) -> Result<ReplicateResult, AppError> {
    let seeds = ReplicateSeeds::new(config.seed, replicate);
    let prep = prepare(config, seeds).map_err(AppError::core(format!(
        "replicate {replicate}: data generation"
    )))?;
    let n = prep.samples.len();
    let mut result = ReplicateResult {
        seeds,
        metrics: Vec::new(),
        folds: Vec::new(),
        f_true: prep.f_true.clone(),
        fits: Vec::new(),
        data_csv: config.export_data.then(|| data_csv(&prep.samples)),
        timings_ms: Vec::new(),
    };
    for &method in &config.methods {
        let err = |m| solver_error(replicate, m);
        let started = Instant::now();
        let out = fit(config, method, &prep.problem, &prep.samples).map_err(err(method))?;
        if config.is_classification() {
            let solver = match method {
                Method::Sgd => &config.solver.sgd,
                _ => &config.solver.mlsgd,
            };
            let cv = kfold_cv(
                &prep.problem,
                &prep.samples,
                config.cv.folds,
                seeds.seed,
                |m| solver.solver_config(m),
            )
            .map_err(err(method))?;
            result.folds.extend(cv.folds.iter().map(|f| FoldRow {
                method,
                replicate,
                fold: f.fold,
                train_size: f.train_size,
                test_size: f.test_size,
                accuracy: f.accuracy,
                kappa: f.kappa,
            }));
        }
        result
            .timings_ms
            .push((method, started.elapsed().as_secs_f64() * 1e3));

        let on_out = out.f_hat.restrict(&prep.out_grid).map_err(err(method))?;
        let mse = mse_function(&on_out, &prep.f_true).map_err(err(method))?;
        let excess = excess_risk(&prep.problem, &out.f_hat, &prep.f_true, &prep.eval)
            .map_err(err(method))?;
        let bound = bound_for(config, method, &prep.problem, &prep.samples, &prep.f_true)
            .map_err(err(method))?;
        result.metrics.push(MetricRow {
            method,
            replicate,
            n,
            mse,
            excess_risk: excess,
            bound,
        });
        result.fits.push((method, on_out));
    }
    Ok(result)
}

fn summarize(config: &ExperimentConfig, replicates: &[ReplicateResult]) -> Vec<SummaryRow> {
    config
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&MetricRow> = replicates
                .iter()
                .flat_map(|r| r.metrics.iter())
                .filter(|m| m.method == method)
                .collect();
            let mse: Vec<f64> = rows.iter().map(|r| r.mse).collect();
            let excess: Vec<f64> = rows.iter().map(|r| r.excess_risk).collect();
            let cv_mean = |pick: fn(&FoldRow) -> f64| {
                let per_rep: Vec<f64> = replicates
                    .iter()
                    .map(|r| {
                        let folds: Vec<f64> = r
                            .folds
                            .iter()
                            .filter(|f| f.method == method)
                            .map(pick)
                            .collect();
                        folds.iter().sum::<f64>() / folds.len() as f64
                    })
                    .collect();
                Spread::of(&per_rep)
            };
            let classify = config.is_classification();
            SummaryRow {
                method,
                n_reps: rows.len(),
                mse: Spread::of(&mse),
                excess_risk: Spread::of(&excess),
                accuracy: classify.then(|| cv_mean(|f| f.accuracy)),
                kappa: classify.then(|| cv_mean(|f| f.kappa)),
            }
        })
        .collect()
}

/// Runs every replicate, at most `jobs` at a time (0 lets the pool decide).
pub fn run_experiment(config: &ExperimentConfig, jobs: usize) -> Result<RunOutcome, AppError> {
    if config.experiment == ExperimentKind::Check {
        return Err(AppError::Config(
            "check is not an estimation experiment".into(),
        ));
    }
    config.validate()?;
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| AppError::Config(format!("cannot start {jobs} workers: {e}")))?;
    let replicates = pool.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| run_replicate(config, r))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let summary = summarize(config, &replicates);
    Ok(RunOutcome {
        config: config.clone(),
        jobs: pool.current_num_threads(),
        replicates,
        summary,
        total_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

pub fn fitted_csv(r: &ReplicateResult) -> String {
    let names: Vec<String> = r.fits.iter().map(|(m, _)| format!("f_hat_{m}")).collect();
    let mut header = vec!["w", "f_true"];
    header.extend(names.iter().map(String::as_str));
    let grid = r.f_true.grid();
    csv_string(
        &header,
        grid.points().enumerate().map(|(j, w)| {
            let mut row = vec![real(w), real(r.f_true.values()[j])];
            row.extend(r.fits.iter().map(|(_, f)| real(f.values()[j])));
            row
        }),
    )
}

pub fn metrics_csv(outcome: &RunOutcome) -> String {
    let exp = outcome.config.experiment.as_str();
    csv_string(
        &[
            "experiment",
            "method",
            "replicate",
            "n",
            "mse",
            "excess_risk",
            "bound",
        ],
        outcome.metrics().map(|m| {
            vec![
                exp.to_string(),
                m.method.to_string(),
                m.replicate.to_string(),
                m.n.to_string(),
                real(m.mse),
                real(m.excess_risk),
                opt_real(m.bound),
            ]
        }),
    )
}

pub fn summary_csv(outcome: &RunOutcome) -> String {
    let exp = outcome.config.experiment.as_str();
    let mut header = vec![
        "experiment",
        "method",
        "n_reps",
        "mse_mean",
        "mse_2sd",
        "excess_risk_mean",
        "excess_risk_2sd",
    ];
    let classify = outcome.config.is_classification();
    if classify {
        header.extend(["accuracy_mean", "accuracy_2sd", "kappa_mean", "kappa_2sd"]);
    }
    csv_string(
        &header,
        outcome.summary.iter().map(|s| {
            let mut row = vec![exp.to_string(), s.method.to_string(), s.n_reps.to_string()];
            row.extend(s.mse.cells());
            row.extend(s.excess_risk.cells());
            for extra in [s.accuracy, s.kappa].into_iter().flatten() {
                row.extend(extra.cells());
            }
            row
        }),
    )
}

pub fn folds_csv(outcome: &RunOutcome) -> String {
    csv_string(
        &[
            "method",
            "replicate",
            "fold",
            "train_size",
            "test_size",
            "accuracy",
            "kappa",
        ],
        outcome
            .replicates
            .iter()
            .flat_map(|r| r.folds.iter())
            .map(|f| {
                vec![
                    f.method.to_string(),
                    f.replicate.to_string(),
                    f.fold.to_string(),
                    f.train_size.to_string(),
                    f.test_size.to_string(),
                    real(f.accuracy),
                    real(f.kappa),
                ]
            }),
    )
}

pub fn manifest_json(outcome: &RunOutcome) -> String {
    let seeds: Vec<ReplicateSeeds> = outcome.replicates.iter().map(|r| r.seeds).collect();
    let timings: Vec<_> = outcome
        .replicates
        .iter()
        .map(|r| {
            let mut t = serde_json::Map::new();
            t.insert("replicate".into(), json!(r.seeds.replicate));
            for (m, ms) in &r.timings_ms {
                t.insert(m.to_string(), json!(ms));
            }
            serde_json::Value::Object(t)
        })
        .collect();
    let doc = json!({
        "version": concat!("sipsolve ", env!("CARGO_PKG_VERSION")),
        "config": outcome.config,
        "seeds": seeds,
        "jobs": outcome.jobs,
        "timings_ms": { "total": outcome.total_ms, "replicates": timings },
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    s.push('\n');
    s
}

/// Writes every output file of a run into `dir`, creating it if needed.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(AppError::io(dir))?;
    for r in &outcome.replicates {
        let i = r.seeds.replicate;
        write_file(dir, &format!("fitted_r{i}.csv"), &fitted_csv(r))?;
        if let Some(data) = &r.data_csv {
            write_file(dir, &format!("data_r{i}.csv"), data)?;
        }
    }
    write_file(dir, "metrics.csv", &metrics_csv(outcome))?;
    write_file(dir, "summary.csv", &summary_csv(outcome))?;
    if outcome.config.is_classification() {
        write_file(dir, "folds.csv", &folds_csv(outcome))?;
    }
    write_file(dir, "manifest.json", &manifest_json(outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Override;

    fn small(kind: ExperimentKind, sets: &[&str]) -> ExperimentConfig {
        let ovs: Vec<Override> = sets.iter().map(|s| s.parse().unwrap()).collect();
        crate::config::resolve(kind, None, &ovs).unwrap()
    }

    #[test]
    fn seeds_follow_the_documented_rule() {
        let s = ReplicateSeeds::new(7, 2);
        assert_eq!(s.seed, 7 ^ 3u64.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        assert_eq!(s.eval_seed, s.seed ^ EVAL_SALT);
    }

    #[test]
    fn small_flr_run_produces_rows_for_every_method() {
        let c = small(
            ExperimentKind::Flr,
            &[
                "replicates=2",
                "flr.n_samples=200",
                "flr.fine_n=200",
                "flr.obs_n=50",
                "eval_n=500",
            ],
        );
        let out = run_experiment(&c, 1).unwrap();
        assert_eq!(out.metrics().count(), 6);
        assert_eq!(out.summary.len(), 3);
        let sgd: Vec<&MetricRow> = out.metrics().filter(|m| m.method == Method::Sgd).collect();
        assert!(sgd.iter().all(|m| m.bound.is_some()));
        assert!(out
            .metrics()
            .filter(|m| m.method != Method::Sgd)
            .all(|m| m.bound.is_none()));
        let mean = sgd.iter().map(|m| m.mse).sum::<f64>() / 2.0;
        assert!((out.summary_for(Method::Sgd).unwrap().mse.mean - mean).abs() <= 1e-12);
        let fitted = fitted_csv(&out.replicates[0]);
        assert_eq!(fitted.lines().count(), 201);
        assert!(fitted.starts_with("w,f_true,f_hat_sgd,f_hat_mlsgd,f_hat_landweber\n"));
    }

    #[test]
    fn single_replicate_has_no_spread() {
        let c = small(
            ExperimentKind::FlrStep,
            &[
                "replicates=1",
                "methods=[\"sgd\"]",
                "flr.n_samples=100",
                "flr.fine_n=100",
                "flr.obs_n=20",
                "eval_n=100",
            ],
        );
        let out = run_experiment(&c, 1).unwrap();
        assert_eq!(out.summary[0].mse.sd, None);
        let summary = summary_csv(&out);
        assert!(summary.lines().nth(1).unwrap().contains(",,"), "{summary}");
    }

    #[test]
    fn classification_writes_folds() {
        let c = small(
            ExperimentKind::FlrClassify,
            &[
                "flr.n_samples=300",
                "flr.fine_n=100",
                "flr.obs_n=50",
                "eval_n=200",
            ],
        );
        let out = run_experiment(&c, 1).unwrap();
        assert_eq!(out.replicates[0].folds.len(), 3);
        assert!(out.summary[0].accuracy.is_some());
        assert_eq!(folds_csv(&out).lines().count(), 4);
    }

    #[test]
    fn exported_data_has_one_row_per_sample() {
        let c = small(
            ExperimentKind::Deconv,
            &[
                "replicates=1",
                "export_data=true",
                "eval_n=50",
                "methods=[\"sgd\"]",
            ],
        );
        let out = run_experiment(&c, 1).unwrap();
        let data = out.replicates[0].data_csv.as_ref().unwrap();
        assert_eq!(data.lines().count(), 202);
        assert_eq!(fitted_csv(&out.replicates[0]).lines().count(), 2002);
    }
}
