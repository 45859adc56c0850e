use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::checks::run_checks;
use crate::config::{resolve, ExperimentKind, Override};
use crate::error::AppError;
use crate::experiments::{run_experiment, write_outputs};
use crate::output::write_file;

#[derive(Parser, Debug)]
#[command(
    name = "sipsolve",
    version,
    about = "Stochastic-gradient solvers for statistical inverse problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Functional linear regression with the sine target
    Flr(RunArgs),
    /// Functional linear regression with the step target
    FlrStep(RunArgs),
    /// Logistic functional classification with cross-validation
    FlrClassify(RunArgs),
    /// Deconvolution with the Heaviside kernel
    Deconv(RunArgs),
    /// Oracle checks; exit status 1 if any fails
    Check(RunArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// JSON config or a previous run's manifest.json
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Concurrent replicates; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Override a config field, e.g. --set solver.sgd.eta=0.5
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<Override>,
}

impl Command {
    fn parts(&self) -> (ExperimentKind, &RunArgs) {
        match self {
            Command::Flr(a) => (ExperimentKind::Flr, a),
            Command::FlrStep(a) => (ExperimentKind::FlrStep, a),
            Command::FlrClassify(a) => (ExperimentKind::FlrClassify, a),
            Command::Deconv(a) => (ExperimentKind::Deconv, a),
            Command::Check(a) => (ExperimentKind::Check, a),
        }
    }
}

/// Runs a parsed command; `Ok(false)` means a check failed.
pub fn execute(command: &Command) -> Result<bool, AppError> {
    let (kind, args) = command.parts();
    let mut overrides = args.sets.clone();
    if let Some(seed) = args.seed {
        overrides.push(Override {
            path: vec!["seed".into()],
            value: seed.into(),
        });
    }
    if let Some(r) = args.replicates {
        overrides.push(Override {
            path: vec!["replicates".into()],
            value: r.into(),
        });
    }
    let config = resolve(kind, args.config.as_deref(), &overrides)?;

    if kind == ExperimentKind::Check {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| AppError::Config(format!("cannot start {} workers: {e}", args.jobs)))?;
        let report = pool.install(|| run_checks(&config))?;
        for r in &report.results {
            println!("{r}");
        }
        if let Some(dir) = &args.out {
            std::fs::create_dir_all(dir).map_err(AppError::io(dir))?;
            write_file(dir, "checks.csv", &report.to_csv())?;
        }
        return Ok(report.all_passed());
    }

    let outcome = run_experiment(&config, args.jobs)?;
    let dir = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(kind.as_str()));
    write_outputs(&outcome, &dir)?;
    for s in &outcome.summary {
        let sd = |x: Option<f64>| x.map(|v| format!(" ± {:.3e}", 2.0 * v)).unwrap_or_default();
        print!(
            "{kind} {:<9} mse {:.4e}{}  excess {:.4e}{}",
            s.method.as_str(),
            s.mse.mean,
            sd(s.mse.sd),
            s.excess_risk.mean,
            sd(s.excess_risk.sd)
        );
        if let (Some(a), Some(k)) = (s.accuracy, s.kappa) {
            print!("  accuracy {:.3}  kappa {:.3}", a.mean, k.mean);
        }
        println!();
    }
    println!("wrote {}", dir.display());
    Ok(true)
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("sipsolve: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
