//! Uniform 1-D grids and functions sampled on them.
//!
//! Integrals use the left Riemann sum `h * sum_{j < n-1} f_j g_j`; off-grid
//! evaluation is piecewise linear.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

/// Uniform discretization of `[lo, hi]` with `n >= 2` points.
///
/// Equality is bitwise on `(lo, hi, n)`.
#[derive(Debug, Clone, Copy)]
pub struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
    spacing: f64,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.lo.to_bits() == other.lo.to_bits()
            && self.hi.to_bits() == other.hi.to_bits()
            && self.n == other.n
    }
}

impl Eq for Grid {}

impl Grid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidRange { lo, hi });
        }
        if n < 2 {
            return Err(Error::TooFewPoints(n));
        }
        Ok(Self {
            lo,
            hi,
            n,
            spacing: (hi - lo) / (n - 1) as f64,
        })
    }

    /// Grid on `[lo, hi]` whose spacing is as close as possible to `step`.
    pub fn with_spacing(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidRange { lo, hi });
        }
        let intervals = ((hi - lo) / step).round();
        if !(intervals >= 1.0) {
            return Err(Error::InvalidRange { lo, hi });
        }
        Self::new(lo, hi, intervals as usize + 1)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `lo + j * spacing`, with the last point pinned to `hi`.
    pub fn point(&self, j: usize) -> f64 {
        debug_assert!(j < self.n);
        if j + 1 == self.n {
            self.hi
        } else {
            self.lo + j as f64 * self.spacing
        }
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n).map(move |j| self.point(j))
    }

    pub fn contains(&self, w: f64) -> bool {
        w >= self.lo && w <= self.hi
    }

    /// Index `j` of the interval `[p_j, p_{j+1}]` holding `w`, `j <= n - 2`.
    pub(crate) fn bracket(&self, w: f64) -> usize {
        let t = (w - self.lo) / self.spacing;
        let j = if t <= 0.0 { 0 } else { t.floor() as usize };
        let j = j.min(self.n - 2);
        // Rounding can put `w` one cell off; nudge into the right cell.
        if w < self.point(j) && j > 0 {
            j - 1
        } else if w > self.point(j + 1) && j + 2 < self.n {
            j + 1
        } else {
            j
        }
    }
}

/// Values of a real function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFn {
    grid: Grid,
    values: Vec<f64>,
}

impl DiscreteFn {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(j));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.points().map(f).collect(),
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Self {
            grid,
            values: alloc::vec![c; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &DiscreteFn) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Piecewise-linear value at `w`; exact at grid points.
    pub fn evaluate(&self, w: f64) -> Result<f64> {
        let g = &self.grid;
        if !g.contains(w) {
            return Err(Error::OutOfDomain {
                w,
                lo: g.lo,
                hi: g.hi,
            });
        }
        Ok(self.evaluate_unchecked(w))
    }

    pub(crate) fn evaluate_unchecked(&self, w: f64) -> f64 {
        let g = &self.grid;
        let j = g.bracket(w);
        let (left, right) = (g.point(j), g.point(j + 1));
        if w == left {
            return self.values[j];
        }
        if w == right {
            return self.values[j + 1];
        }
        let t = (w - left) / (right - left);
        self.values[j] + t * (self.values[j + 1] - self.values[j])
    }

    /// Resample onto `coarse` by linear interpolation.
    pub fn restrict(&self, coarse: &Grid) -> Result<DiscreteFn> {
        if coarse == &self.grid {
            return Ok(self.clone());
        }
        for w in [coarse.lo, coarse.hi] {
            if !self.grid.contains(w) {
                return Err(Error::OutOfDomain {
                    w,
                    lo: self.grid.lo,
                    hi: self.grid.hi,
                });
            }
        }
        Ok(DiscreteFn {
            grid: *coarse,
            values: coarse
                .points()
                .map(|w| self.evaluate_unchecked(w))
                .collect(),
        })
    }

    /// Largest absolute value.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Discrete total variation `sum |f_{j+1} - f_j|`.
    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
    }
}

/// Left Riemann sum of `f * g`.
pub fn inner_product(f: &DiscreteFn, g: &DiscreteFn) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    Ok(riemann_dot(f.grid.spacing, &f.values, &g.values))
}

pub fn l2_norm(f: &DiscreteFn) -> f64 {
    riemann_dot(f.grid.spacing, &f.values, &f.values).sqrt()
}

/// `h * sum_{j < n-1} a_j b_j`; slices must have equal length.
pub(crate) fn riemann_dot(spacing: f64, a: &[f64], b: &[f64]) -> f64 {
    let m = a.len().saturating_sub(1);
    spacing * a[..m].iter().zip(&b[..m]).map(|(x, y)| x * y).sum::<f64>()
}
