//! Base learners fitted by least squares to gridded gradients.
//!
//! - `Spline { df }`: ordinary least squares on a clamped cubic B-spline basis
//!   of dimension `df`, interior knots at equally spaced quantiles of the
//!   inputs.
//! - `Tree { max_leaves }`: greedy best-first CART on a single input; a node
//!   splits at the midpoint between consecutive inputs (`w < s` goes left),
//!   leaves predict the node mean.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{DiscreteFn, Grid};

const DEGREE: usize = 3;
const ORDER: usize = DEGREE + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerSpec {
    Spline { df: usize },
    Tree { max_leaves: usize },
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::Spline { df } if df < ORDER => Err(Error::InvalidLearner(format!(
                "spline df must be >= {ORDER}, got {df}"
            ))),
            LearnerSpec::Tree { max_leaves: 0 } => {
                Err(Error::InvalidLearner("tree needs at least one leaf".into()))
            }
            _ => Ok(()),
        }
    }

    /// Minimum number of training points.
    pub fn capacity(&self) -> usize {
        match *self {
            LearnerSpec::Spline { df } => df,
            LearnerSpec::Tree { max_leaves } => max_leaves,
        }
    }

    /// Parses `"spline:df=10"`, `"tree:leaves=30"` or `"none"`.
    pub fn parse_optional(s: &str) -> Result<Option<Self>> {
        if s.trim() == "none" {
            Ok(None)
        } else {
            s.parse().map(Some)
        }
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerSpec::Spline { df } => write!(f, "spline:df={df}"),
            LearnerSpec::Tree { max_leaves } => write!(f, "tree:leaves={max_leaves}"),
        }
    }
}

impl FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidLearner(format!("cannot parse {s:?}"));
        let (kind, param) = s.trim().split_once(':').ok_or_else(bad)?;
        let (key, value) = param.split_once('=').ok_or_else(bad)?;
        let value: usize = value.trim().parse().map_err(|_| bad())?;
        let spec = match (kind.trim(), key.trim()) {
            ("spline", "df") => LearnerSpec::Spline { df: value },
            ("tree", "leaves") => LearnerSpec::Tree { max_leaves: value },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplineFit {
    lo: f64,
    hi: f64,
    interior_knots: Vec<f64>,
    coefficients: Vec<f64>,
}

impl SplineFit {
    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    fn knot_vector(&self) -> Vec<f64> {
        knot_vector(self.lo, self.hi, &self.interior_knots)
    }

    pub fn predict(&self, w: f64) -> f64 {
        let knots = self.knot_vector();
        let (first, basis) = basis_at(&knots, w.clamp(self.lo, self.hi));
        basis
            .iter()
            .zip(&self.coefficients[first..first + ORDER])
            .map(|(b, c)| b * c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeFit {
    splits: Vec<f64>,
    leaves: Vec<f64>,
}

impl TreeFit {
    pub fn splits(&self) -> &[f64] {
        &self.splits
    }

    pub fn leaves(&self) -> &[f64] {
        &self.leaves
    }

    pub fn predict(&self, w: f64) -> f64 {
        self.leaves[self.splits.partition_point(|&s| s <= w)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedLearner {
    Spline(SplineFit),
    Tree(TreeFit),
    Zero,
}

impl FittedLearner {
    pub fn predict(&self, w: f64) -> f64 {
        match self {
            FittedLearner::Spline(s) => s.predict(w),
            FittedLearner::Tree(t) => t.predict(w),
            FittedLearner::Zero => 0.0,
        }
    }

    pub fn project_to_grid(&self, grid: &Grid) -> DiscreteFn {
        DiscreteFn::from_fn(*grid, |w| self.predict(w))
    }
}

fn check_inputs(spec: &LearnerSpec, w: &[f64], u: &[f64]) -> Result<()> {
    spec.validate()?;
    if w.len() != u.len() {
        return Err(Error::LengthMismatch {
            expected: w.len(),
            got: u.len(),
        });
    }
    if w.len() < spec.capacity() || w.is_empty() {
        return Err(Error::DimensionTooLarge {
            points: w.len(),
            required: spec.capacity().max(1),
        });
    }
    if w.windows(2).any(|p| !(p[0] < p[1])) {
        return Err(Error::NonMonotoneInputs);
    }
    if let Some(j) = w.iter().chain(u).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(j % w.len()));
    }
    Ok(())
}

/// Least-squares fit of `u` against inputs `w`.
pub fn fit(spec: LearnerSpec, w: &[f64], u: &[f64]) -> Result<FittedLearner> {
    check_inputs(&spec, w, u)?;
    match spec {
        LearnerSpec::Spline { df } => Ok(FittedLearner::Spline(SplineBasis::new(w, df)?.fit(u)?)),
        LearnerSpec::Tree { max_leaves } => Ok(FittedLearner::Tree(fit_tree(w, u, max_leaves))),
    }
}

/// A learner prepared for repeated fits on fixed inputs.
#[derive(Debug, Clone)]
pub enum PreparedLearner {
    Spline(SplineBasis),
    Tree { w: Vec<f64>, max_leaves: usize },
}

impl PreparedLearner {
    pub fn new(spec: LearnerSpec, w: &[f64]) -> Result<Self> {
        check_inputs(&spec, w, w)?;
        Ok(match spec {
            LearnerSpec::Spline { df } => PreparedLearner::Spline(SplineBasis::new(w, df)?),
            LearnerSpec::Tree { max_leaves } => PreparedLearner::Tree {
                w: w.to_vec(),
                max_leaves,
            },
        })
    }

    /// Fit `u` and return the fitted values at the training inputs.
    pub fn fit_values(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self {
            PreparedLearner::Spline(basis) => {
                let fit = basis.fit(u)?;
                Ok(basis.evaluate_at_nodes(&fit.coefficients))
            }
            PreparedLearner::Tree { w, max_leaves } => {
                if u.len() != w.len() {
                    return Err(Error::LengthMismatch {
                        expected: w.len(),
                        got: u.len(),
                    });
                }
                let tree = fit_tree(w, u, *max_leaves);
                Ok(w.iter().map(|&x| tree.predict(x)).collect())
            }
        }
    }
}

fn knot_vector(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut t = Vec::with_capacity(interior.len() + 2 * ORDER);
    t.extend(core::iter::repeat_n(lo, ORDER));
    t.extend_from_slice(interior);
    t.extend(core::iter::repeat_n(hi, ORDER));
    t
}

/// Nonzero cubic B-spline values at `x`: `(first index, [B_first..B_first+3])`.
fn basis_at(knots: &[f64], x: f64) -> (usize, [f64; ORDER]) {
    let n_basis = knots.len() - ORDER;
    // span index s with knots[s] <= x < knots[s+1], restricted to DEGREE..n_basis-1
    let span = (knots[ORDER..n_basis].partition_point(|&k| k <= x) + DEGREE).min(n_basis - 1);
    let mut n = [0.0; ORDER];
    let mut left = [0.0; ORDER];
    let mut right = [0.0; ORDER];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    (span - DEGREE, n)
}

/// Cubic B-spline design on fixed inputs with a factorized Gram matrix.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    lo: f64,
    hi: f64,
    interior_knots: Vec<f64>,
    rows: Vec<(usize, [f64; ORDER])>,
    /// Lower Cholesky factor of `B^T B`, row-major `df x df`.
    chol: Vec<f64>,
    df: usize,
}

impl SplineBasis {
    pub fn new(w: &[f64], df: usize) -> Result<Self> {
        LearnerSpec::Spline { df }.validate()?;
        if w.len() < df {
            return Err(Error::DimensionTooLarge {
                points: w.len(),
                required: df,
            });
        }
        let (lo, hi) = (w[0], w[w.len() - 1]);
        let k = df - ORDER;
        let interior_knots: Vec<f64> = (1..=k)
            .map(|i| quantile(w, i as f64 / (k + 1) as f64))
            .collect();
        let knots = knot_vector(lo, hi, &interior_knots);
        let rows: Vec<_> = w.iter().map(|&x| basis_at(&knots, x)).collect();

        let mut gram = alloc::vec![0.0; df * df];
        for (first, b) in &rows {
            for a in 0..ORDER {
                for c in 0..ORDER {
                    gram[(first + a) * df + first + c] += b[a] * b[c];
                }
            }
        }
        let chol = cholesky(&gram, df).ok_or(Error::DimensionTooLarge {
            points: w.len(),
            required: df,
        })?;
        Ok(Self {
            lo,
            hi,
            interior_knots,
            rows,
            chol,
            df,
        })
    }

    pub fn df(&self) -> usize {
        self.df
    }

    /// Column-wise products `B^T v`.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.df];
        for ((first, b), &val) in self.rows.iter().zip(v) {
            for a in 0..ORDER {
                out[first + a] += b[a] * val;
            }
        }
        out
    }

    pub fn fit(&self, u: &[f64]) -> Result<SplineFit> {
        if u.len() != self.rows.len() {
            return Err(Error::LengthMismatch {
                expected: self.rows.len(),
                got: u.len(),
            });
        }
        let coefficients = if u.iter().all(|&v| v == u[0]) {
            // B-splines sum to one
            alloc::vec![u[0]; self.df]
        } else {
            cholesky_solve(&self.chol, self.df, self.transpose_apply(u))
        };
        Ok(SplineFit {
            lo: self.lo,
            hi: self.hi,
            interior_knots: self.interior_knots.clone(),
            coefficients,
        })
    }

    pub fn evaluate_at_nodes(&self, coefficients: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(first, b)| {
                b.iter()
                    .zip(&coefficients[*first..first + ORDER])
                    .map(|(x, c)| x * c)
                    .sum()
            })
            .collect()
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = alloc::vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, mut b: Vec<f64>) -> Vec<f64> {
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * b[k]).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k * n + i] * b[k]).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
    b
}

struct Node {
    start: usize,
    end: usize,
    /// Best split `(index, gain)`; left child is `start..index`.
    best: Option<(usize, f64)>,
}

fn best_split(prefix: &[f64], start: usize, end: usize) -> Option<(usize, f64)> {
    let total = prefix[end] - prefix[start];
    let n = (end - start) as f64;
    let mut best: Option<(usize, f64)> = None;
    for k in start + 1..end {
        let nl = (k - start) as f64;
        let nr = n - nl;
        let sl = prefix[k] - prefix[start];
        let diff = sl / nl - (total - sl) / nr;
        // SSE reduction of the split
        let gain = nl * nr / n * diff * diff;
        if gain > best.map_or(0.0, |b| b.1) {
            best = Some((k, gain));
        }
    }
    best
}

fn fit_tree(w: &[f64], u: &[f64], max_leaves: usize) -> TreeFit {
    let mut prefix = Vec::with_capacity(u.len() + 1);
    prefix.push(0.0);
    for &v in u {
        prefix.push(prefix[prefix.len() - 1] + v);
    }
    let mean = |s: usize, e: usize| (prefix[e] - prefix[s]) / (e - s) as f64;

    if u.iter().all(|&v| v == u[0]) || max_leaves == 1 {
        let c = if u.iter().all(|&v| v == u[0]) {
            u[0]
        } else {
            mean(0, u.len())
        };
        return TreeFit {
            splits: Vec::new(),
            leaves: alloc::vec![c],
        };
    }

    // leaves kept in input order
    let mut leaves = alloc::vec![Node {
        start: 0,
        end: u.len(),
        best: best_split(&prefix, 0, u.len()),
    }];
    while leaves.len() < max_leaves {
        let mut pick: Option<(usize, f64)> = None;
        for (i, node) in leaves.iter().enumerate() {
            if let Some((_, gain)) = node.best {
                if gain > pick.map_or(0.0, |p| p.1) {
                    pick = Some((i, gain));
                }
            }
        }
        let Some((i, _)) = pick else { break };
        let (start, end) = (leaves[i].start, leaves[i].end);
        let k = leaves[i].best.expect("picked leaf has a split").0;
        leaves[i] = Node {
            start,
            end: k,
            best: best_split(&prefix, start, k),
        };
        leaves.insert(
            i + 1,
            Node {
                start: k,
                end,
                best: best_split(&prefix, k, end),
            },
        );
    }

    TreeFit {
        splits: leaves[1..]
            .iter()
            .map(|n| 0.5 * (w[n.start - 1] + w[n.start]))
            .collect(),
        leaves: leaves.iter().map(|n| mean(n.start, n.end)).collect(),
    }
}
