//! Metrics, Monte Carlo oracles and the finite-sample excess-risk bound.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{inner_product, DiscreteFn};
use crate::operators::{Covariate, KernelRows, Problem, Sample, SampleAccess};
use crate::rng::SipRng;
use crate::solvers::{ml_sgd, sgd_sip, SolverConfig, StepSchedule};

/// Unweighted mean of squared differences at the grid points.
pub fn mse_function(f_hat: &DiscreteFn, f_true: &DiscreteFn) -> Result<f64> {
    if f_hat.grid() != f_true.grid() {
        return Err(Error::GridMismatch);
    }
    let n = f_hat.values().len() as f64;
    Ok(f_hat
        .values()
        .iter()
        .zip(f_true.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Sample mean of `l(y_i, A[f](x_i))`.
pub fn empirical_risk<S>(problem: &Problem, f: &DiscreteFn, samples: &S) -> Result<f64>
where
    S: SampleAccess + ?Sized,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for i in 0..samples.len() {
        let s = samples.sample(i);
        total += problem.loss().value(s.y, problem.forward(f, &s.x)?)?;
    }
    Ok(total / samples.len() as f64)
}

/// `R(f_hat) - R(f_true)` on held-out samples; `f_true` is resampled onto the
/// estimation grid when needed.
pub fn excess_risk<S>(
    problem: &Problem,
    f_hat: &DiscreteFn,
    f_true: &DiscreteFn,
    eval: &S,
) -> Result<f64>
where
    S: SampleAccess + ?Sized,
{
    let truth = f_true.restrict(problem.w_grid())?;
    Ok(empirical_risk(problem, f_hat, eval)? - empirical_risk(problem, &truth, eval)?)
}

/// Mean of single-sample gradients: the Monte Carlo risk gradient.
pub fn gradient_oracle<S>(problem: &Problem, f: &DiscreteFn, samples: &S) -> Result<DiscreteFn>
where
    S: SampleAccess + ?Sized,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = DiscreteFn::zeros(*problem.w_grid());
    for i in 0..samples.len() {
        sum.add_scaled(1.0, &problem.stochastic_gradient(f, samples.sample(i))?)?;
    }
    sum.scale(1.0 / samples.len() as f64);
    Ok(sum)
}

/// `(<grad R(f), g>, central difference of R along g)` on one sample set.
pub fn directional_derivative_check<S>(
    problem: &Problem,
    f: &DiscreteFn,
    g: &DiscreteFn,
    samples: &S,
    delta: f64,
) -> Result<(f64, f64)>
where
    S: SampleAccess + ?Sized,
{
    if !(delta > 0.0) {
        return Err(Error::InvalidConfig("delta must be positive".into()));
    }
    let analytic = inner_product(&gradient_oracle(problem, f, samples)?, g)?;
    let mut plus = f.clone();
    plus.add_scaled(delta, g)?;
    let mut minus = f.clone();
    minus.add_scaled(-delta, g)?;
    let numeric = (empirical_risk(problem, &plus, samples)?
        - empirical_risk(problem, &minus, samples)?)
        / (2.0 * delta);
    Ok((analytic, numeric))
}

/// `|mean_i A[f](x_i) h_i - <f, A*_m h>|` with the adjoint assembled from
/// `kernel(x, w)`; pass [`Problem::adjoint_kernel`] for the library kernel.
pub fn adjoint_identity_gap<K>(
    problem: &Problem,
    f: &DiscreteFn,
    xs: &[Covariate],
    h: &[f64],
    kernel: K,
) -> Result<(f64, f64)>
where
    K: Fn(&Covariate, f64) -> Result<f64>,
{
    if xs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if xs.len() != h.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            got: h.len(),
        });
    }
    let m = xs.len() as f64;
    let mut lhs = 0.0;
    for (x, hi) in xs.iter().zip(h) {
        lhs += problem.forward(f, x)? * hi;
    }
    lhs /= m;
    let grid = *problem.w_grid();
    let mut adj = alloc::vec![0.0; grid.len()];
    for (x, hi) in xs.iter().zip(h) {
        for (a, w) in adj.iter_mut().zip(grid.points()) {
            *a += kernel(x, w)? * hi;
        }
    }
    adj.iter_mut().for_each(|a| *a /= m);
    let rhs = inner_product(f, &DiscreteFn::new(grid, adj)?)?;
    Ok((lhs, rhs))
}

/// Constants of the excess-risk bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Diameter of the search set.
    pub diameter: f64,
    /// `sup_x ||Phi(x, .)||^2`
    pub kernel_sup: f64,
    /// `E[Y^2]`
    pub second_moment_y: f64,
    /// `||A||^2`
    pub opnorm2: f64,
    pub n: usize,
    pub schedule: StepSchedule,
}

impl BoundInputs {
    /// `M = C (E[Y^2] + ||A||^2 D^2)`.
    pub fn lipschitz_term(&self) -> f64 {
        self.kernel_sup * (self.second_moment_y + self.opnorm2 * self.diameter * self.diameter)
    }
}

/// `D^2 / (2 n alpha_n) + (M / n) sum_{i <= n} alpha_i`, summed exactly.
pub fn theorem_bound(inputs: &BoundInputs) -> Result<f64> {
    let b = inputs;
    if b.n == 0 {
        return Err(Error::InvalidConfig("bound needs n >= 1".into()));
    }
    b.schedule.validate()?;
    if [b.diameter, b.kernel_sup, b.second_moment_y, b.opnorm2]
        .iter()
        .any(|v| !(*v >= 0.0))
    {
        return Err(Error::InvalidConfig(
            "bound constants must be nonnegative".into(),
        ));
    }
    let n = b.n as f64;
    let step_sum: f64 = (1..=b.n).map(|i| b.schedule.step(i)).sum();
    let alpha_n = b.schedule.step(b.n);
    Ok(b.diameter * b.diameter / (2.0 * n * alpha_n) + b.lipschitz_term() / n * step_sum)
}

/// Largest eigenvalue of a self-adjoint PSD map by power iteration,
/// returned as the final Rayleigh quotient.
pub fn power_iteration<A, I>(
    mut apply: A,
    inner: I,
    start: Vec<f64>,
    iterations: usize,
) -> Result<f64>
where
    A: FnMut(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let mut v = start;
    let mut rayleigh = 0.0;
    for _ in 0..iterations.max(1) {
        let norm = inner(&v, &v).sqrt();
        if !(norm > 0.0) {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let av = apply(&v)?;
        rayleigh = inner(&v, &av);
        v = av;
    }
    Ok(rayleigh)
}

/// Empirical bound constants. `C` is the largest quadrature norm of
/// `Phi(x_i, .)`, `E[Y^2]` the sample mean, `||A||^2` 20 power iterations on
/// `f -> A*_m A f`.
pub fn estimate_constants<S>(
    problem: &Problem,
    samples: &S,
    diameter: f64,
    n: usize,
    schedule: StepSchedule,
) -> Result<BoundInputs>
where
    S: SampleAccess + ?Sized,
{
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let grid = *problem.w_grid();
    let rows = KernelRows::new(problem, samples)?;
    let kernel_sup = rows.kernel_sup(&grid);
    let y2 = rows.responses().iter().map(|y| y * y).sum::<f64>();
    let normal = |v: &[f64]| rows.adjoint_of(&grid, v, |_, pred| Ok(pred));
    let spacing = grid.spacing();
    let inner = |a: &[f64], b: &[f64]| crate::grid::riemann_dot(spacing, a, b);
    let opnorm2 = power_iteration(normal, inner, alloc::vec![1.0; grid.len()], 20)?;
    Ok(BoundInputs {
        diameter,
        kernel_sup,
        second_moment_y: y2 / samples.len() as f64,
        opnorm2,
        n,
        schedule,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateStats {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub sd: f64,
    pub n_reps: usize,
}

pub fn replicate_stats(values: &[f64]) -> Result<ReplicateStats> {
    if values.len() < 2 {
        return Err(Error::TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(ReplicateStats {
        mean,
        sd: var.sqrt(),
        n_reps: values.len(),
    })
}

/// Accuracy and Cohen's kappa for `±1` labels.
pub fn classification_metrics(predictions: &[f64], labels: &[f64]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            got: predictions.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &v in predictions.iter().chain(labels) {
        if v != 1.0 && v != -1.0 {
            return Err(Error::InvalidLabel(v));
        }
    }
    let n = labels.len() as f64;
    let agree = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count() as f64;
    let p_o = agree / n;
    let pred_pos = predictions.iter().filter(|&&p| p == 1.0).count() as f64 / n;
    let label_pos = labels.iter().filter(|&&l| l == 1.0).count() as f64 / n;
    let p_e = pred_pos * label_pos + (1.0 - pred_pos) * (1.0 - label_pos);
    let kappa = if p_e == 1.0 {
        0.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok((p_o, kappa))
}

/// `sign(A[f](x))` per sample, with 0 mapped to `+1`.
pub fn predict_labels<S>(problem: &Problem, f: &DiscreteFn, samples: &S) -> Result<Vec<f64>>
where
    S: SampleAccess + ?Sized,
{
    (0..samples.len())
        .map(|i| {
            let eta = problem.forward(f, &samples.sample(i).x)?;
            Ok(if eta >= 0.0 { 1.0 } else { -1.0 })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldMetrics>,
    pub mean_accuracy: f64,
    pub mean_kappa: f64,
}

/// Fold id per sample: contiguous blocks of a seeded shuffle.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::InvalidFolds { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    SipRng::seed_from_u64(seed).shuffle(&mut order);
    let mut fold = alloc::vec![0; n];
    for (pos, &idx) in order.iter().enumerate() {
        fold[idx] = pos * k / n;
    }
    Ok(fold)
}

/// k-fold cross-validated classification accuracy and kappa.
///
/// `make_config(train_size)` builds the solver configuration for each fold,
/// so step schedules can depend on the training-set size. A config with a
/// learner runs [`ml_sgd`], otherwise [`sgd_sip`]; both start from zero.
pub fn kfold_cv<C>(
    problem: &Problem,
    samples: &[Sample],
    k: usize,
    seed: u64,
    make_config: C,
) -> Result<CvReport>
where
    C: Fn(usize) -> SolverConfig,
{
    let folds = fold_assignment(samples.len(), k, seed)?;
    let f0 = DiscreteFn::zeros(*problem.w_grid());
    let mut out = Vec::with_capacity(k);
    for fold in 0..k {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (s, &f) in samples.iter().zip(&folds) {
            if f == fold {
                test.push(s.clone());
            } else {
                train.push(s.clone());
            }
        }
        let config = make_config(train.len());
        let fit = if config.learner.is_some() {
            ml_sgd(problem, &train, &f0, &config)?
        } else {
            sgd_sip(problem, &train, &f0, &config)?
        };
        let labels: Vec<f64> = test.iter().map(|s| s.y).collect();
        let preds = predict_labels(problem, &fit.f_hat, &test)?;
        let (accuracy, kappa) = classification_metrics(&preds, &labels)?;
        out.push(FoldMetrics {
            fold,
            train_size: train.len(),
            test_size: test.len(),
            accuracy,
            kappa,
        });
    }
    let kf = k as f64;
    Ok(CvReport {
        mean_accuracy: out.iter().map(|f| f.accuracy).sum::<f64>() / kf,
        mean_kappa: out.iter().map(|f| f.kappa).sum::<f64>() / kf,
        folds: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::loss::LossKind;
    use alloc::vec;
    use core::f64::consts::PI;

    fn unit(n: usize) -> Grid {
        Grid::new(0.0, 1.0, n).unwrap()
    }

    #[test]
    fn mse_examples() {
        let g = unit(1000);
        let s = DiscreteFn::from_fn(g, |w| (4.0 * PI * w).sin());
        assert_eq!(mse_function(&s, &s).unwrap(), 0.0);
        let shifted = s.map(|v| v + 1.0);
        assert!((mse_function(&shifted, &s).unwrap() - 1.0).abs() < 1e-12);
        assert!((mse_function(&DiscreteFn::zeros(g), &s).unwrap() - 0.5).abs() < 1e-3);
        assert_eq!(
            mse_function(&s, &DiscreteFn::zeros(unit(10))),
            Err(Error::GridMismatch)
        );
    }

    fn constant_path_problem(n: usize) -> (Problem, Covariate) {
        let g = unit(n);
        (
            Problem::flr(g, LossKind::Squared).unwrap(),
            Covariate::Path(DiscreteFn::constant(g, 1.0)),
        )
    }

    #[test]
    fn risk_examples() {
        let (p, one) = constant_path_problem(100);
        let g = *p.w_grid();
        let truth = DiscreteFn::from_fn(g, |s| s * s);
        let y = p.forward(&truth, &one).unwrap();
        let samples = vec![Sample::new(one.clone(), y)];
        assert_eq!(empirical_risk(&p, &truth, &samples).unwrap(), 0.0);

        let ys = [1.0, -2.0, 0.5];
        let samples: Vec<_> = ys.iter().map(|&y| Sample::new(one.clone(), y)).collect();
        let expect = ys.iter().map(|y| 0.5 * y * y).sum::<f64>() / 3.0;
        assert!(
            (empirical_risk(&p, &DiscreteFn::zeros(g), &samples).unwrap() - expect).abs() < 1e-15
        );

        let lp = p.with_loss(LossKind::Logistic);
        let labels: Vec<_> = [1.0, -1.0, 1.0]
            .iter()
            .map(|&y| Sample::new(one.clone(), y))
            .collect();
        let r = empirical_risk(&lp, &DiscreteFn::zeros(g), &labels).unwrap();
        assert!((r - core::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(
            empirical_risk(&p, &truth, &Vec::new()),
            Err(Error::EmptyInput)
        );
    }

    #[test]
    fn excess_risk_constant_offset() {
        let (p, one) = constant_path_problem(1000);
        let g = *p.w_grid();
        let truth = DiscreteFn::from_fn(g, |s| (3.0 * s).sin());
        let y = p.forward(&truth, &one).unwrap();
        let samples = vec![Sample::new(one, y); 4];
        assert_eq!(excess_risk(&p, &truth, &truth, &samples).unwrap(), 0.0);
        let c = 0.7;
        let er = excess_risk(&p, &truth.map(|v| v + c), &truth, &samples).unwrap();
        // A[c] = c * (quadrature weight of the constant path)
        let w = g.spacing() * (g.len() - 1) as f64;
        assert!((er - 0.5 * c * c * w * w).abs() < 1e-12);
    }

    #[test]
    fn oracle_on_deterministic_inputs() {
        let (p, one) = constant_path_problem(50);
        let samples = vec![Sample::new(one, 2.0); 10];
        let grad = gradient_oracle(&p, &DiscreteFn::zeros(*p.w_grid()), &samples).unwrap();
        assert!(grad.values().iter().all(|&v| (v + 2.0).abs() < 1e-15));
    }

    #[test]
    fn directional_derivative_zero_direction() {
        let (p, one) = constant_path_problem(50);
        let g = *p.w_grid();
        let samples = vec![Sample::new(one, 1.5)];
        let (a, n) = directional_derivative_check(
            &p,
            &DiscreteFn::constant(g, 0.2),
            &DiscreteFn::zeros(g),
            &samples,
            1e-4,
        )
        .unwrap();
        assert_eq!(a, 0.0);
        assert_eq!(n, 0.0);
    }

    #[test]
    fn bound_examples() {
        let sched = StepSchedule::InverseSqrt { eta: 1.0 };
        let base = BoundInputs {
            diameter: 0.0,
            kernel_sup: 3.0,
            second_moment_y: 0.0,
            opnorm2: 2.0,
            n: 10,
            schedule: sched,
        };
        assert_eq!(theorem_bound(&base).unwrap(), 0.0);
        let one = BoundInputs {
            diameter: 1.0,
            kernel_sup: 1.0,
            opnorm2: 1.0,
            n: 1,
            ..base
        };
        assert_eq!(one.lipschitz_term(), 1.0);
        assert_eq!(theorem_bound(&one).unwrap(), 1.5);
    }

    #[test]
    fn bound_scales_as_inverse_sqrt_n_for_fixed_schedule() {
        let mk = |n| BoundInputs {
            diameter: 2.0,
            kernel_sup: 1.0,
            second_moment_y: 0.3,
            opnorm2: 0.4,
            n,
            schedule: StepSchedule::FixedInvSqrtN { eta: 0.5, n },
        };
        let (a, b) = (
            theorem_bound(&mk(400)).unwrap(),
            theorem_bound(&mk(1600)).unwrap(),
        );
        assert!((a / b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_small_matrix() {
        // symmetric 3x3 with eigenvalues 4, 2, 1
        let q = [
            [2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0],
            [-2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0],
            [1.0 / 3.0, -2.0 / 3.0, 2.0 / 3.0],
        ];
        let eig = [4.0, 2.0, 1.0];
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = (0..3).map(|k| q[k][i] * eig[k] * q[k][j]).sum();
            }
        }
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            Ok((0..3)
                .map(|i| (0..3).map(|j| a[i][j] * v[j]).sum())
                .collect())
        };
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        let lam = power_iteration(apply, dot, vec![1.0, 0.3, -0.2], 20).unwrap();
        assert!((lam - 4.0).abs() / 4.0 < 0.01);
    }

    #[test]
    fn kernel_sup_examples() {
        let d = Problem::deconv(Grid::new(-10.0, 10.0, 2001).unwrap(), LossKind::Squared);
        let s = vec![
            Sample::new(Covariate::Point(10.0), 0.0),
            Sample::new(Covariate::Point(-3.0), 2.0),
        ];
        let sched = StepSchedule::InverseSqrt { eta: 0.1 };
        let b = estimate_constants(&d, &s, 1.0, 2, sched).unwrap();
        assert!((b.kernel_sup - 20.0).abs() < 1e-9);
        assert_eq!(b.second_moment_y, 2.0);

        let (p, one) = constant_path_problem(1000);
        let b = estimate_constants(&p, &vec![Sample::new(one, 1.0)], 1.0, 1, sched).unwrap();
        assert!((b.kernel_sup - 1.0).abs() < 2e-3);
        // rank-one normal operator: ||A||^2 = ||1||^2
        assert!((b.opnorm2 - b.kernel_sup).abs() < 1e-12);
    }

    #[test]
    fn replicate_stats_examples() {
        let s = replicate_stats(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.mean, s.sd, s.n_reps), (1.0, 0.0, 3));
        let s = replicate_stats(&[0.0, 2.0]).unwrap();
        assert_eq!(s.mean, 1.0);
        assert!((s.sd - 2f64.sqrt()).abs() < 1e-15);
        let a = replicate_stats(&[3.0, 1.0, 7.5, -2.0]).unwrap();
        let b = replicate_stats(&[-2.0, 7.5, 3.0, 1.0]).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-15 && (a.sd - b.sd).abs() < 1e-15);
        assert_eq!(replicate_stats(&[1.0]), Err(Error::TooFewValues(1)));
    }

    #[test]
    fn classification_examples() {
        let labels = [1.0, -1.0, 1.0, -1.0];
        assert_eq!(
            classification_metrics(&labels, &labels).unwrap(),
            (1.0, 1.0)
        );
        assert_eq!(
            classification_metrics(&[1.0; 4], &labels).unwrap(),
            (0.5, 0.0)
        );
        let inverted: Vec<f64> = labels.iter().map(|l| -l).collect();
        assert_eq!(
            classification_metrics(&inverted, &labels).unwrap(),
            (0.0, -1.0)
        );
        // degenerate chance agreement
        assert_eq!(
            classification_metrics(&[1.0; 3], &[1.0; 3]).unwrap(),
            (1.0, 0.0)
        );
        assert!(classification_metrics(&[1.0], &labels).is_err());
    }

    #[test]
    fn folds() {
        let f = fold_assignment(3000, 3, 11).unwrap();
        for k in 0..3 {
            assert_eq!(f.iter().filter(|&&x| x == k).count(), 1000);
        }
        assert_eq!(f, fold_assignment(3000, 3, 11).unwrap());
        assert!(fold_assignment(10, 1, 0).is_err());
        assert!(fold_assignment(2, 3, 0).is_err());
    }

    #[test]
    fn cv_on_constant_labels() {
        let p = Problem::deconv(Grid::new(-10.0, 10.0, 201).unwrap(), LossKind::Logistic);
        let samples: Vec<Sample> = (0..60)
            .map(|i| Sample::new(Covariate::Point(-10.0 + i as f64 / 3.0), 1.0))
            .collect();
        let report = kfold_cv(&p, &samples, 3, 5, |_| {
            SolverConfig::streaming(StepSchedule::InverseSqrt { eta: 0.1 })
        })
        .unwrap();
        for f in &report.folds {
            assert_eq!(f.accuracy, 1.0);
        }
    }
}
