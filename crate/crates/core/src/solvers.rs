//! Averaged stochastic gradient descent, its learner-smoothed variant and
//! Landweber iteration.
//!
//! Streaming runs take exactly one step per sample, reading sample `i` only
//! at step `i`, and return the mean of the post-update iterates
//! `g_1, ..., g_n`. Full-batch runs replace the single-sample gradient by the
//! sample mean over all data for a configured number of steps.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::DiscreteFn;
use crate::learners::{LearnerSpec, PreparedLearner};
use crate::loss::LossKind;
use crate::operators::{KernelRows, Problem, SampleAccess};

/// Step size sequence `alpha_i`, `i >= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    /// `eta / sqrt(i)`
    InverseSqrt { eta: f64 },
    /// `eta / sqrt(n)` at every step.
    FixedInvSqrtN { eta: f64, n: usize },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let (eta, n) = match *self {
            StepSchedule::InverseSqrt { eta } => (eta, 1),
            StepSchedule::FixedInvSqrtN { eta, n } => (eta, n),
        };
        if !(eta > 0.0 && eta.is_finite()) || n == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "step schedule needs eta > 0 and n >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn step(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        match *self {
            StepSchedule::InverseSqrt { eta } => eta / (i as f64).sqrt(),
            StepSchedule::FixedInvSqrtN { eta, n } => eta / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// One sample per step, `n` steps for `n` samples.
    Streaming,
    /// Mean gradient over every sample at each step.
    FullBatch { iterations: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub schedule: StepSchedule,
    pub mode: SampleMode,
    pub learner: Option<LearnerSpec>,
    pub record_trajectory: bool,
}

impl SolverConfig {
    pub fn streaming(schedule: StepSchedule) -> Self {
        Self {
            schedule,
            mode: SampleMode::Streaming,
            learner: None,
            record_trajectory: false,
        }
    }

    pub fn with_learner(mut self, learner: LearnerSpec) -> Self {
        self.learner = Some(learner);
        self
    }

    pub fn full_batch(mut self, iterations: usize) -> Self {
        self.mode = SampleMode::FullBatch { iterations };
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_trajectory = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    /// Averaged estimate (final iterate for Landweber).
    pub f_hat: DiscreteFn,
    pub final_iterate: DiscreteFn,
    pub steps_used: Vec<f64>,
    /// Post-update iterates `g_1..g_n` when recording was requested.
    pub trajectory: Option<Vec<DiscreteFn>>,
}

/// Plain averaged SGD; `config.learner` must be `None`.
pub fn sgd_sip<S>(
    problem: &Problem,
    samples: &S,
    f0: &DiscreteFn,
    config: &SolverConfig,
) -> Result<SolverOutput>
where
    S: SampleAccess + ?Sized,
{
    if config.learner.is_some() {
        return Err(Error::InvalidConfig("sgd_sip takes no base learner".into()));
    }
    run(problem, samples, f0, config, None)
}

/// Averaged SGD whose steps are base-learner fits to the gridded gradient.
pub fn ml_sgd<S>(
    problem: &Problem,
    samples: &S,
    f0: &DiscreteFn,
    config: &SolverConfig,
) -> Result<SolverOutput>
where
    S: SampleAccess + ?Sized,
{
    let spec = config
        .learner
        .ok_or_else(|| Error::InvalidConfig("ml_sgd needs a base learner".into()))?;
    let nodes: Vec<f64> = problem.w_grid().points().collect();
    let prepared = PreparedLearner::new(spec, &nodes).map_err(|e| Error::LearnerFit {
        iteration: 0,
        source: alloc::boxed::Box::new(e),
    })?;
    run(problem, samples, f0, config, Some(&prepared))
}

fn run<S>(
    problem: &Problem,
    samples: &S,
    f0: &DiscreteFn,
    config: &SolverConfig,
    learner: Option<&PreparedLearner>,
) -> Result<SolverOutput>
where
    S: SampleAccess + ?Sized,
{
    config.schedule.validate()?;
    if f0.grid() != problem.w_grid() {
        return Err(Error::GridMismatch);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let iterations = match config.mode {
        SampleMode::Streaming => samples.len(),
        SampleMode::FullBatch { iterations: 0 } => {
            return Err(Error::InvalidConfig(
                "full-batch mode needs iterations >= 1".into(),
            ))
        }
        SampleMode::FullBatch { iterations } => iterations,
    };

    let grid = *problem.w_grid();
    let mut g = f0.clone();
    let mut sum = DiscreteFn::zeros(grid);
    let mut steps = Vec::with_capacity(iterations);
    let mut trajectory = config
        .record_trajectory
        .then(|| Vec::with_capacity(iterations));
    let batch = match config.mode {
        SampleMode::Streaming => None,
        SampleMode::FullBatch { .. } => Some(KernelRows::new(problem, samples)?),
    };

    for i in 1..=iterations {
        let grad = match config.mode {
            SampleMode::Streaming => {
                let mut u = DiscreteFn::zeros(grid);
                problem.accumulate_gradient(&g, samples.sample(i - 1), 1.0, &mut u)?;
                u
            }
            SampleMode::FullBatch { .. } => match &batch {
                Some(b) => b.mean_gradient(problem, &g)?,
                None => unreachable!(),
            },
        };
        let direction = match learner {
            None => grad,
            Some(l) => {
                let fitted = l.fit_values(grad.values()).map_err(|e| Error::LearnerFit {
                    iteration: i,
                    source: alloc::boxed::Box::new(e),
                })?;
                DiscreteFn::new(grid, fitted)?
            }
        };
        let alpha = config.schedule.step(i);
        g.add_scaled(-alpha, &direction)?;
        sum.add_scaled(1.0, &g)?;
        steps.push(alpha);
        if let Some(t) = trajectory.as_mut() {
            t.push(g.clone());
        }
    }
    sum.scale(1.0 / iterations as f64);
    Ok(SolverOutput {
        f_hat: sum,
        final_iterate: g,
        steps_used: steps,
        trajectory,
    })
}

/// Landweber iteration `f_{k+1} = f_k - alpha_k A*_m (A f_k - y)`.
///
/// Returns the final iterate as `f_hat`; no averaging.
pub fn landweber<S>(
    problem: &Problem,
    samples: &S,
    f0: &DiscreteFn,
    n_iters: usize,
    schedule: StepSchedule,
    record_trajectory: bool,
) -> Result<SolverOutput>
where
    S: SampleAccess + ?Sized,
{
    if problem.loss() != LossKind::Squared {
        return Err(Error::WrongLoss);
    }
    schedule.validate()?;
    if f0.grid() != problem.w_grid() {
        return Err(Error::GridMismatch);
    }
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_iters == 0 {
        return Err(Error::InvalidConfig("Landweber needs n_iters >= 1".into()));
    }
    let mut f = f0.clone();
    let mut steps = Vec::with_capacity(n_iters);
    let mut trajectory = record_trajectory.then(|| Vec::with_capacity(n_iters));
    let batch = KernelRows::new(problem, samples)?;
    for k in 1..=n_iters {
        let grad = batch.mean_gradient(problem, &f)?;
        let alpha = schedule.step(k);
        f.add_scaled(-alpha, &grad)?;
        steps.push(alpha);
        if let Some(t) = trajectory.as_mut() {
            t.push(f.clone());
        }
    }
    Ok(SolverOutput {
        f_hat: f.clone(),
        final_iterate: f,
        steps_used: steps,
        trajectory,
    })
}
