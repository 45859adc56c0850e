//! Seeded synthetic data for FLR regression, FLR classification and
//! Heaviside deconvolution.
//!
//! All draws come from [`SipRng`]; the same config and seed give
//! bit-identical datasets on every platform.

use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::grid::{riemann_dot, DiscreteFn, Grid};
use crate::loss::sigmoid;
use crate::operators::{Covariate, Sample};
use crate::rng::SipRng;

/// Domain of the deconvolution experiments.
pub const DECONV_DOMAIN: (f64, f64) = (-10.0, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    /// `sin(4 pi w)` on `[0, 1]`.
    Sine,
    /// `+1, -1, +1, -1` on `[0, .25), [.25, .5), [.5, .75), [.75, 1]`.
    Step,
    /// `exp(-w^2)` on `[-10, 10]`.
    GaussPeak,
}

impl TargetKind {
    fn domain(self) -> (f64, f64) {
        match self {
            TargetKind::Sine | TargetKind::Step => (0.0, 1.0),
            TargetKind::GaussPeak => DECONV_DOMAIN,
        }
    }

    pub fn eval(self, w: f64) -> f64 {
        match self {
            TargetKind::Sine => (4.0 * core::f64::consts::PI * w).sin(),
            TargetKind::Step => {
                // the last segment is closed on the right
                let segment = ((w * 4.0).floor() as i64).min(3);
                if segment.rem_euclid(2) == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            TargetKind::GaussPeak => (-w * w).exp(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TargetKind::Sine => "sine",
            TargetKind::Step => "step",
            TargetKind::GaussPeak => "gauss-peak",
        }
    }
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(TargetKind::Sine),
            "step" => Ok(TargetKind::Step),
            "gauss-peak" => Ok(TargetKind::GaussPeak),
            other => Err(Error::InvalidConfig(alloc::format!(
                "unknown target {other:?}"
            ))),
        }
    }
}

/// Target function sampled on `grid`, which must lie in the target's domain.
pub fn make_target(kind: TargetKind, grid: &Grid) -> Result<DiscreteFn> {
    let (lo, hi) = kind.domain();
    if grid.lo() < lo || grid.hi() > hi {
        return Err(Error::DomainMismatch(alloc::format!(
            "{kind} lives on [{lo}, {hi}], grid is [{}, {}]",
            grid.lo(),
            grid.hi()
        )));
    }
    Ok(DiscreteFn::from_fn(*grid, |w| kind.eval(w)))
}

/// Brownian path on `grid` with `x(lo) = 0` and N(0, spacing) increments.
pub fn simulate_brownian(grid: &Grid, rng: &mut SipRng) -> DiscreteFn {
    let sd = grid.spacing().sqrt();
    let mut values = Vec::with_capacity(grid.len());
    let mut x = 0.0;
    values.push(x);
    for _ in 1..grid.len() {
        x += sd * rng.normal();
        values.push(x);
    }
    DiscreteFn::new(*grid, values).expect("finite Brownian path")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlrGenConfig {
    pub n_samples: usize,
    /// Simulation grid size on `[0, 1]`.
    pub fine_n: usize,
    /// Observation grid size on `[0, 1]`.
    pub obs_n: usize,
    /// Noise sd as a multiple of the sd of the noiseless responses.
    pub nsr: f64,
    pub target: TargetKind,
    /// Multiplier applied to the target function.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for FlrGenConfig {
    fn default() -> Self {
        Self {
            n_samples: 3000,
            fine_n: 1000,
            obs_n: 100,
            nsr: 0.2,
            target: TargetKind::Sine,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

impl FlrGenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_samples == 0 {
            return fail("n_samples must be >= 1");
        }
        if self.fine_n < 2 || self.obs_n < 2 {
            return fail("grids need at least 2 points");
        }
        if self.obs_n > self.fine_n {
            return fail("obs_n must not exceed fine_n");
        }
        if !(self.nsr >= 0.0 && self.nsr.is_finite()) {
            return fail("nsr must be >= 0");
        }
        if !self.amplitude.is_finite() {
            return fail("amplitude must be finite");
        }
        if self.target == TargetKind::GaussPeak {
            return fail("FLR targets live on [0, 1]; gauss-peak is a deconvolution target");
        }
        Ok(())
    }

    pub fn fine_grid(&self) -> Result<Grid> {
        Grid::new(0.0, 1.0, self.fine_n)
    }

    pub fn obs_grid(&self) -> Result<Grid> {
        Grid::new(0.0, 1.0, self.obs_n)
    }

    /// `amplitude * target` on the fine grid.
    pub fn truth(&self) -> Result<DiscreteFn> {
        let amp = self.amplitude;
        Ok(make_target(self.target, &self.fine_grid()?)?.map(|v| amp * v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlrDataset {
    pub samples: Vec<Sample>,
    pub f_true: DiscreteFn,
    pub sigma_eps: f64,
    /// Noiseless responses (regression) or linear predictors (classification).
    pub clean: Vec<f64>,
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Paths on the fine grid plus their exact-quadrature responses.
fn simulate_paths(
    config: &FlrGenConfig,
    f_true: &DiscreteFn,
    rng: &mut SipRng,
) -> Result<(Vec<DiscreteFn>, Vec<f64>)> {
    let fine = config.fine_grid()?;
    let obs = config.obs_grid()?;
    if f_true.grid() != &fine {
        return Err(Error::GridMismatch);
    }
    let mut paths = Vec::with_capacity(config.n_samples);
    let mut clean = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let path = simulate_brownian(&fine, rng);
        clean.push(riemann_dot(fine.spacing(), path.values(), f_true.values()));
        paths.push(path.restrict(&obs)?);
    }
    Ok((paths, clean))
}

/// Regression data `y = int x f + N(0, sigma^2)` with `sigma = nsr * sd(y*)`.
pub fn gen_flr(config: &FlrGenConfig) -> Result<FlrDataset> {
    config.validate()?;
    gen_flr_from(config, config.truth()?)
}

/// As [`gen_flr`] with an explicit target on the fine grid.
pub fn gen_flr_from(config: &FlrGenConfig, f_true: DiscreteFn) -> Result<FlrDataset> {
    let mut rng = SipRng::seed_from_u64(config.seed);
    let (paths, clean) = simulate_paths(config, &f_true, &mut rng)?;
    let sigma_eps = config.nsr * sample_sd(&clean);
    let samples = paths
        .into_iter()
        .zip(&clean)
        .map(|(p, &c)| Sample::new(Covariate::Path(p), c + sigma_eps * rng.normal()))
        .collect();
    Ok(FlrDataset {
        samples,
        f_true,
        sigma_eps,
        clean,
    })
}

/// Draws `+1` with probability `sigmoid(eta)`, else `-1`.
pub fn draw_label(eta: f64, rng: &mut SipRng) -> f64 {
    if rng.bernoulli(sigmoid(eta)) {
        1.0
    } else {
        -1.0
    }
}

/// Logistic labels with log-odds `int x f`; `nsr` is ignored.
pub fn gen_flr_classification(config: &FlrGenConfig) -> Result<FlrDataset> {
    config.validate()?;
    gen_flr_classification_from(config, config.truth()?)
}

pub fn gen_flr_classification_from(
    config: &FlrGenConfig,
    f_true: DiscreteFn,
) -> Result<FlrDataset> {
    let mut rng = SipRng::seed_from_u64(config.seed);
    let (paths, clean) = simulate_paths(config, &f_true, &mut rng)?;
    let samples = paths
        .into_iter()
        .zip(&clean)
        .map(|(p, &eta)| Sample::new(Covariate::Path(p), draw_label(eta, &mut rng)))
        .collect();
    Ok(FlrDataset {
        samples,
        f_true,
        sigma_eps: 0.0,
        clean,
    })
}

/// Streaming FLR draws with a fixed noise level, for Monte Carlo oracles
/// too large to hold in memory.
pub struct FlrStream {
    fine: Grid,
    obs: Grid,
    f_true: DiscreteFn,
    sigma_eps: f64,
    rng: SipRng,
}

impl FlrStream {
    pub fn new(config: &FlrGenConfig, sigma_eps: f64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            fine: config.fine_grid()?,
            obs: config.obs_grid()?,
            f_true: config.truth()?,
            sigma_eps,
            rng: SipRng::seed_from_u64(config.seed),
        })
    }

    pub fn f_true(&self) -> &DiscreteFn {
        &self.f_true
    }

    pub fn next_sample(&mut self) -> Sample {
        let path = simulate_brownian(&self.fine, &mut self.rng);
        let clean = riemann_dot(self.fine.spacing(), path.values(), self.f_true.values());
        let y = clean + self.sigma_eps * self.rng.normal();
        let obs = path
            .restrict(&self.obs)
            .expect("observation grid inside [0, 1]");
        Sample::new(Covariate::Path(obs), y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvGenConfig {
    /// Number of observations; `None` uses every observation-grid point once.
    pub n_samples: Option<usize>,
    pub fine_spacing: f64,
    pub obs_spacing: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for DeconvGenConfig {
    fn default() -> Self {
        Self {
            n_samples: None,
            fine_spacing: 0.01,
            obs_spacing: 0.1,
            noise_sd: core::f64::consts::SQRT_2,
            seed: 0,
        }
    }
}

impl DeconvGenConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.fine_spacing > 0.0) || !(self.obs_spacing >= self.fine_spacing) {
            return fail("need 0 < fine_spacing <= obs_spacing");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return fail("noise_sd must be >= 0");
        }
        if self.n_samples == Some(0) {
            return fail("n_samples must be >= 1");
        }
        Ok(())
    }

    pub fn fine_grid(&self) -> Result<Grid> {
        Grid::with_spacing(DECONV_DOMAIN.0, DECONV_DOMAIN.1, self.fine_spacing)
    }

    pub fn obs_grid(&self) -> Result<Grid> {
        Grid::with_spacing(DECONV_DOMAIN.0, DECONV_DOMAIN.1, self.obs_spacing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeconvDataset {
    pub samples: Vec<Sample>,
    pub f_true: DiscreteFn,
    pub clean: Vec<f64>,
}

/// Noisy Heaviside-convolved Gaussian peak at shuffled observation-grid points.
///
/// Responses use the fine grid: `y = h * sum_{w_j <= x, j < n-1} f(w_j) + noise`.
/// With `n_samples = m`, locations cycle through successive shuffles of the
/// observation grid until `m` are drawn.
pub fn gen_deconv(config: &DeconvGenConfig) -> Result<DeconvDataset> {
    config.validate()?;
    let fine = config.fine_grid()?;
    let obs = config.obs_grid()?;
    let f_true = make_target(TargetKind::GaussPeak, &fine)?;
    let mut prefix = Vec::with_capacity(fine.len());
    let mut acc = 0.0;
    for &v in &f_true.values()[..fine.len() - 1] {
        prefix.push(acc);
        acc += v;
    }
    prefix.push(acc);
    // prefix[k] = sum of the first k values, k <= n - 1
    let response = |x: f64| {
        let k = fine
            .points()
            .take(fine.len() - 1)
            .filter(|&w| w <= x)
            .count();
        fine.spacing() * prefix[k]
    };

    let mut rng = SipRng::seed_from_u64(config.seed);
    let m = config.n_samples.unwrap_or(obs.len());
    let mut locations = Vec::with_capacity(m);
    while locations.len() < m {
        let mut round: Vec<f64> = obs.points().collect();
        rng.shuffle(&mut round);
        locations.extend(round.into_iter().take(m - locations.len()));
    }
    let clean: Vec<f64> = locations.iter().map(|&x| response(x)).collect();
    let samples = locations
        .iter()
        .zip(&clean)
        .map(|(&x, &c)| Sample::new(Covariate::Point(x), c + config.noise_sd * rng.normal()))
        .collect();
    Ok(DeconvDataset {
        samples,
        f_true,
        clean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn targets() {
        let g = Grid::new(0.0, 1.0, 9).unwrap();
        let sine = make_target(TargetKind::Sine, &g).unwrap();
        assert!((sine.values()[1] - 1.0).abs() < 1e-15); // w = 0.125
        let step = TargetKind::Step;
        assert_eq!(step.eval(0.0), 1.0);
        assert_eq!(step.eval(0.3), -1.0);
        assert_eq!(step.eval(0.25), -1.0);
        assert_eq!(step.eval(0.5), 1.0);
        assert_eq!(step.eval(0.8), -1.0);
        assert_eq!(step.eval(1.0), -1.0);
        assert_eq!(TargetKind::GaussPeak.eval(0.0), 1.0);
        assert!(make_target(TargetKind::GaussPeak, &Grid::new(-20.0, 0.0, 5).unwrap()).is_err());
        assert!(make_target(TargetKind::Sine, &Grid::new(-10.0, 10.0, 5).unwrap()).is_err());
    }

    #[test]
    fn brownian_starts_at_zero() {
        let mut rng = SipRng::seed_from_u64(5);
        let p = simulate_brownian(&Grid::new(0.0, 1.0, 100).unwrap(), &mut rng);
        assert_eq!(p.values()[0], 0.0);
    }

    #[test]
    fn flr_zero_noise_is_exact_quadrature() {
        let cfg = FlrGenConfig {
            n_samples: 20,
            fine_n: 200,
            obs_n: 50,
            nsr: 0.0,
            seed: 9,
            ..Default::default()
        };
        let d = gen_flr(&cfg).unwrap();
        assert_eq!(d.sigma_eps, 0.0);
        for (s, c) in d.samples.iter().zip(&d.clean) {
            assert_eq!(s.y, *c);
            let Covariate::Path(p) = &s.x else { panic!() };
            assert_eq!(p.grid(), &cfg.obs_grid().unwrap());
        }
        assert_eq!(d.f_true.grid(), &cfg.fine_grid().unwrap());
    }

    #[test]
    fn flr_zero_target_gives_zero_responses() {
        let cfg = FlrGenConfig {
            n_samples: 30,
            fine_n: 100,
            obs_n: 20,
            ..Default::default()
        };
        let zero = DiscreteFn::zeros(cfg.fine_grid().unwrap());
        let d = gen_flr_from(&cfg, zero).unwrap();
        assert_eq!(d.sigma_eps, 0.0);
        assert!(d.samples.iter().all(|s| s.y == 0.0));
    }

    #[test]
    fn generators_are_deterministic() {
        let cfg = FlrGenConfig {
            n_samples: 50,
            fine_n: 100,
            obs_n: 10,
            seed: 77,
            ..Default::default()
        };
        assert_eq!(gen_flr(&cfg).unwrap(), gen_flr(&cfg).unwrap());
        assert_eq!(
            gen_flr_classification(&cfg).unwrap(),
            gen_flr_classification(&cfg).unwrap()
        );
        let dc = DeconvGenConfig {
            seed: 3,
            ..Default::default()
        };
        assert_eq!(gen_deconv(&dc).unwrap(), gen_deconv(&dc).unwrap());
        let other = FlrGenConfig {
            seed: 78,
            ..cfg.clone()
        };
        assert_ne!(
            gen_flr(&other).unwrap().samples,
            gen_flr(&cfg).unwrap().samples
        );
    }

    #[test]
    fn labels_are_plus_minus_one() {
        let cfg = FlrGenConfig {
            n_samples: 200,
            fine_n: 100,
            obs_n: 10,
            amplitude: 20.0,
            ..Default::default()
        };
        let d = gen_flr_classification(&cfg).unwrap();
        assert!(d.samples.iter().all(|s| s.y == 1.0 || s.y == -1.0));
    }

    #[test]
    fn forced_large_log_odds() {
        let mut rng = SipRng::seed_from_u64(1);
        let n = 20_000;
        let pos = (0..n).filter(|_| draw_label(10.0, &mut rng) == 1.0).count();
        assert!(pos as f64 / n as f64 > 0.999);
    }

    #[test]
    fn deconv_default_layout() {
        let d = gen_deconv(&DeconvGenConfig {
            noise_sd: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(d.samples.len(), 201);
        assert_eq!(d.f_true.grid().len(), 2001);
        let at = |x: f64| {
            d.samples
                .iter()
                .find(|s| matches!(s.x, Covariate::Point(p) if (p - x).abs() < 1e-9))
                .unwrap()
                .y
        };
        assert!((at(10.0) - PI.sqrt()).abs() < 1e-6);
        assert!(at(-10.0).abs() < 1e-40);
        // shuffled, each point once
        let mut xs: Vec<f64> = d
            .samples
            .iter()
            .map(|s| match s.x {
                Covariate::Point(p) => p,
                _ => unreachable!(),
            })
            .collect();
        let shuffled = xs.clone();
        xs.sort_by(f64::total_cmp);
        assert_ne!(xs, shuffled);
        assert!(xs.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn deconv_sample_count_cycles() {
        let d = gen_deconv(&DeconvGenConfig {
            n_samples: Some(450),
            ..Default::default()
        })
        .unwrap();
        assert_eq!(d.samples.len(), 450);
    }

    #[test]
    fn config_validation() {
        let bad = FlrGenConfig {
            obs_n: 2000,
            ..Default::default()
        };
        assert!(gen_flr(&bad).is_err());
        let bad = FlrGenConfig {
            nsr: -0.1,
            ..Default::default()
        };
        assert!(gen_flr(&bad).is_err());
        let bad = DeconvGenConfig {
            obs_spacing: 0.001,
            ..Default::default()
        };
        assert!(gen_deconv(&bad).is_err());
    }
}
