//! Forward operators, adjoint kernels and single-sample risk gradients.
//!
//! Two operators are supported, both discretized on the estimation grid
//! `w_grid` with the left Riemann rule:
//!
//! - functional linear regression, `A[f](x) = int_0^T x(s) f(s) ds`, with
//!   kernel `Phi(x, s) = x(s)`;
//! - deconvolution with the Heaviside kernel `k(z) = 1{z >= 0}`,
//!   `A[f](x) = int k(x - w) f(w) dw`, with kernel `Phi(x, w) = k(x - w)`.
//!
//! For either operator the discrete adjoint satisfies
//! `mean_i A[f](x_i) h_i = <f, mean_i Phi(x_i, .) h_i>` exactly, so the
//! single-sample field `Phi(x, .) * dl(y, A[f](x))` is an unbiased estimate of
//! the risk gradient.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{riemann_dot, DiscreteFn, Grid};
use crate::loss::LossKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Functional linear regression on `[0, T]`.
    Flr,
    /// Heaviside-kernel deconvolution.
    Deconv,
}

/// Observed input: a sampled path (FLR) or a scalar location (deconvolution).
#[derive(Debug, Clone, PartialEq)]
pub enum Covariate {
    Path(DiscreteFn),
    Point(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Covariate,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Covariate, y: f64) -> Self {
        Self { x, y }
    }
}

/// Indexed read access to an ordered sample list.
///
/// Solvers read samples only through this trait, which lets tests observe
/// the access pattern.
pub trait SampleAccess {
    fn len(&self) -> usize;
    fn sample(&self, i: usize) -> &Sample;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleAccess for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }

    fn sample(&self, i: usize) -> &Sample {
        &self[i]
    }
}

impl SampleAccess for Vec<Sample> {
    fn len(&self) -> usize {
        Vec::len(self)
    }

    fn sample(&self, i: usize) -> &Sample {
        &self[i]
    }
}

/// A bound operator instance: forward map, adjoint kernel and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    kind: ProblemKind,
    loss: LossKind,
    w_grid: Grid,
}

impl Problem {
    /// FLR on `[0, T]` where `T = w_grid.hi()`.
    pub fn flr(w_grid: Grid, loss: LossKind) -> Result<Self> {
        if w_grid.lo() != 0.0 {
            return Err(Error::DomainMismatch(alloc::format!(
                "FLR estimation grid must start at 0, starts at {}",
                w_grid.lo()
            )));
        }
        Ok(Self {
            kind: ProblemKind::Flr,
            loss,
            w_grid,
        })
    }

    /// Heaviside deconvolution; observation locations share the domain of `w_grid`.
    pub fn deconv(w_grid: Grid, loss: LossKind) -> Self {
        Self {
            kind: ProblemKind::Deconv,
            loss,
            w_grid,
        }
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn w_grid(&self) -> &Grid {
        &self.w_grid
    }

    /// FLR horizon `T`; `None` for deconvolution.
    pub fn horizon(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::Flr => Some(self.w_grid.hi()),
            ProblemKind::Deconv => None,
        }
    }

    pub fn with_loss(&self, loss: LossKind) -> Self {
        Self {
            loss,
            ..self.clone()
        }
    }

    fn check_fn(&self, f: &DiscreteFn) -> Result<()> {
        if f.grid() != &self.w_grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `Phi(x, .)` on the estimation grid.
    pub(crate) fn kernel_row<'a>(&self, x: &'a Covariate) -> Result<KernelRow<'a>> {
        let g = &self.w_grid;
        match (self.kind, x) {
            (ProblemKind::Flr, Covariate::Path(path)) => {
                let pg = path.grid();
                if pg == g {
                    return Ok(KernelRow::Dense(Cow::Borrowed(path.values())));
                }
                if pg.lo() > g.lo() || pg.hi() < g.hi() {
                    return Err(Error::DomainMismatch(alloc::format!(
                        "path observed on [{}, {}] does not cover [{}, {}]",
                        pg.lo(),
                        pg.hi(),
                        g.lo(),
                        g.hi()
                    )));
                }
                Ok(KernelRow::Dense(Cow::Owned(
                    g.points().map(|w| path.evaluate_unchecked(w)).collect(),
                )))
            }
            (ProblemKind::Deconv, &Covariate::Point(x)) => {
                if !g.contains(x) {
                    return Err(Error::OutOfDomain {
                        w: x,
                        lo: g.lo(),
                        hi: g.hi(),
                    });
                }
                Ok(KernelRow::Indicator(heaviside_count(g, x)))
            }
            _ => Err(Error::KindMismatch),
        }
    }

    /// `A[f](x)` by left Riemann quadrature on the estimation grid.
    pub fn forward(&self, f: &DiscreteFn, x: &Covariate) -> Result<f64> {
        self.check_fn(f)?;
        Ok(self.kernel_row(x)?.dot(self.w_grid.spacing(), f.values()))
    }

    /// `Phi(x, w)` at an arbitrary `w` in the estimation domain.
    pub fn adjoint_kernel(&self, x: &Covariate, w: f64) -> Result<f64> {
        let g = &self.w_grid;
        if !g.contains(w) {
            return Err(Error::OutOfDomain {
                w,
                lo: g.lo(),
                hi: g.hi(),
            });
        }
        match (self.kind, x) {
            (ProblemKind::Flr, Covariate::Path(path)) => path.evaluate(w),
            (ProblemKind::Deconv, &Covariate::Point(x)) => Ok(heaviside(x - w)),
            _ => Err(Error::KindMismatch),
        }
    }

    /// Unbiased single-sample gradient `u(w) = Phi(x, w) dl(y, A[f](x))`.
    pub fn stochastic_gradient(&self, f: &DiscreteFn, sample: &Sample) -> Result<DiscreteFn> {
        let mut out = DiscreteFn::zeros(self.w_grid);
        self.accumulate_gradient(f, sample, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += weight * u`, returning the loss derivative used.
    pub(crate) fn accumulate_gradient(
        &self,
        f: &DiscreteFn,
        sample: &Sample,
        weight: f64,
        out: &mut DiscreteFn,
    ) -> Result<f64> {
        self.check_fn(f)?;
        let row = self.kernel_row(&sample.x)?;
        let pred = row.dot(self.w_grid.spacing(), f.values());
        let residual = self.loss.grad2(sample.y, pred)?;
        row.scatter(weight * residual, out.values_mut());
        Ok(residual)
    }

    /// Sample-mean adjoint `g(w) = (1/m) sum_i Phi(x_i, w) h_i`.
    pub fn empirical_adjoint<'a, I>(&self, residuals: I) -> Result<DiscreteFn>
    where
        I: IntoIterator<Item = (&'a Covariate, f64)>,
    {
        let mut out = DiscreteFn::zeros(self.w_grid);
        let mut m = 0usize;
        for (x, h) in residuals {
            self.kernel_row(x)?.scatter(h, out.values_mut());
            m += 1;
        }
        if m == 0 {
            return Err(Error::EmptyInput);
        }
        out.scale(1.0 / m as f64);
        Ok(out)
    }
}

/// Kernel rows of a fixed sample set, built once for repeated full-batch
/// passes.
pub(crate) struct KernelRows<'a> {
    rows: Vec<KernelRow<'a>>,
    ys: Vec<f64>,
}

impl<'a> KernelRows<'a> {
    pub(crate) fn new<S>(problem: &Problem, samples: &'a S) -> Result<Self>
    where
        S: SampleAccess + ?Sized,
    {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut rows = Vec::with_capacity(samples.len());
        let mut ys = Vec::with_capacity(samples.len());
        for i in 0..samples.len() {
            let s = samples.sample(i);
            rows.push(problem.kernel_row(&s.x)?);
            ys.push(s.y);
        }
        Ok(KernelRows { rows, ys })
    }

    pub(crate) fn responses(&self) -> &[f64] {
        &self.ys
    }

    pub(crate) fn kernel_sup(&self, grid: &Grid) -> f64 {
        self.rows
            .iter()
            .map(|r| r.norm2(grid.spacing(), grid.len()))
            .fold(0.0, f64::max)
    }

    /// `(1/m) sum_i Phi(x_i, .) h(i, A f(x_i))`. Same operation order as
    /// [`Problem::empirical_adjoint`].
    pub(crate) fn adjoint_of<H>(&self, grid: &Grid, f: &[f64], mut h: H) -> Result<Vec<f64>>
    where
        H: FnMut(usize, f64) -> Result<f64>,
    {
        let mut out = alloc::vec![0.0; grid.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let hi = h(i, row.dot(grid.spacing(), f))?;
            row.scatter(hi, &mut out);
        }
        let m = 1.0 / self.rows.len() as f64;
        out.iter_mut().for_each(|o| *o *= m);
        Ok(out)
    }

    pub(crate) fn mean_gradient(&self, problem: &Problem, f: &DiscreteFn) -> Result<DiscreteFn> {
        problem.check_fn(f)?;
        let loss = problem.loss();
        let values = self.adjoint_of(problem.w_grid(), f.values(), |i, pred| {
            loss.grad2(self.ys[i], pred)
        })?;
        DiscreteFn::new(*problem.w_grid(), values)
    }
}

/// Heaviside step with `k(0) = 1`.
pub fn heaviside(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Number of grid points `w_j <= x`.
fn heaviside_count(g: &Grid, x: f64) -> usize {
    let n = g.len();
    let mut k = g.bracket(x.clamp(g.lo(), g.hi()));
    while k < n && g.point(k) <= x {
        k += 1;
    }
    while k > 0 && g.point(k - 1) > x {
        k -= 1;
    }
    k
}

pub(crate) enum KernelRow<'a> {
    Dense(Cow<'a, [f64]>),
    /// Ones on the first `k` grid points, zeros after.
    Indicator(usize),
}

impl KernelRow<'_> {
    pub(crate) fn dot(&self, spacing: f64, f: &[f64]) -> f64 {
        match self {
            KernelRow::Dense(row) => riemann_dot(spacing, row, f),
            KernelRow::Indicator(k) => {
                let m = (*k).min(f.len() - 1);
                spacing * f[..m].iter().sum::<f64>()
            }
        }
    }

    pub(crate) fn scatter(&self, scale: f64, out: &mut [f64]) {
        match self {
            KernelRow::Dense(row) => {
                for (o, r) in out.iter_mut().zip(row.iter()) {
                    *o += scale * r;
                }
            }
            KernelRow::Indicator(k) => out[..*k].iter_mut().for_each(|o| *o += scale),
        }
    }

    /// Quadrature norm squared of the row on a grid of `n` points.
    pub(crate) fn norm2(&self, spacing: f64, n: usize) -> f64 {
        match self {
            KernelRow::Dense(row) => riemann_dot(spacing, row, row),
            KernelRow::Indicator(k) => spacing * (*k).min(n - 1) as f64,
        }
    }
}
