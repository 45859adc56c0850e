//! Experiment configuration: a JSON document layered over per-experiment
//! defaults, with dotted `key=value` overrides.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use sipsolve_core::synthgen::{DeconvGenConfig, FlrGenConfig, TargetKind};
use sipsolve_core::{LearnerSpec, SampleMode, SolverConfig, StepSchedule};

use crate::error::AppError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Flr,
    FlrStep,
    FlrClassify,
    Deconv,
    Check,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Flr => "flr",
            ExperimentKind::FlrStep => "flr-step",
            ExperimentKind::FlrClassify => "flr-classify",
            ExperimentKind::Deconv => "deconv",
            ExperimentKind::Check => "check",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgd,
    Mlsgd,
    Landweber,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::Mlsgd => "mlsgd",
            Method::Landweber => "landweber",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// `eta / sqrt(i)`
    InverseSqrt,
    /// `eta / sqrt(n)` with `n` the training sample count.
    FixedInvSqrtN,
}

impl ScheduleKind {
    pub fn build(self, eta: f64, n: usize) -> StepSchedule {
        match self {
            ScheduleKind::InverseSqrt => StepSchedule::InverseSqrt { eta },
            ScheduleKind::FixedInvSqrtN => StepSchedule::FixedInvSqrtN { eta, n },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    Streaming,
    FullBatch,
}

/// Serde through `Display`/`FromStr`, for core types that carry no serde
/// derives.
mod text {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        let s = String::deserialize(d)?;
        s.parse().map_err(de::Error::custom)
    }

    pub mod opt {
        use super::*;

        pub fn serialize<T: Display, S: Serializer>(
            v: &Option<T>,
            s: S,
        ) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => s.collect_str(v),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
        where
            T: FromStr,
            T::Err: Display,
            D: Deserializer<'de>,
        {
            match Option::<String>::deserialize(d)? {
                None => Ok(None),
                Some(s) if s == "none" => Ok(None),
                Some(s) => s.parse().map(Some).map_err(de::Error::custom),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlrSection {
    pub n_samples: usize,
    pub fine_n: usize,
    pub obs_n: usize,
    pub nsr: f64,
    #[serde(with = "text")]
    pub target: TargetKind,
    /// Multiplier on the target; the classification experiment needs
    /// log-odds well away from zero.
    pub amplitude: f64,
}

impl FlrSection {
    pub fn gen_config(&self, seed: u64) -> FlrGenConfig {
        FlrGenConfig {
            n_samples: self.n_samples,
            fine_n: self.fine_n,
            obs_n: self.obs_n,
            nsr: self.nsr,
            target: self.target,
            amplitude: self.amplitude,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeconvSection {
    /// `null` means one sample per observation grid point.
    pub n_samples: Option<usize>,
    pub fine_spacing: f64,
    pub obs_spacing: f64,
    pub noise_sd: f64,
}

impl DeconvSection {
    pub fn gen_config(&self, seed: u64) -> DeconvGenConfig {
        DeconvGenConfig {
            n_samples: self.n_samples,
            fine_spacing: self.fine_spacing,
            obs_spacing: self.obs_spacing,
            noise_sd: self.noise_sd,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSolver {
    pub eta: f64,
    pub schedule: ScheduleKind,
    pub mode: ModeKind,
    /// Step count in full-batch mode.
    pub iterations: usize,
    #[serde(with = "text::opt")]
    pub learner: Option<LearnerSpec>,
}

impl StreamSolver {
    pub fn solver_config(&self, n: usize) -> SolverConfig {
        let mut c = SolverConfig::streaming(self.schedule.build(self.eta, n));
        if self.mode == ModeKind::FullBatch {
            c.mode = SampleMode::FullBatch {
                iterations: self.iterations,
            };
        }
        c.learner = self.learner;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandweberSolver {
    pub eta: f64,
    pub schedule: ScheduleKind,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub sgd: StreamSolver,
    pub mlsgd: StreamSolver,
    pub landweber: LandweberSolver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    /// `null` means twice the sup norm of the target.
    pub diameter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    pub adjoint_trials: usize,
    pub adjoint_samples: usize,
    pub adjoint_tol: f64,
    pub unbiased_m: usize,
    pub unbiased_small_m: usize,
    pub oracle_m: usize,
    pub unbiased_tol: f64,
    pub directional_samples: usize,
    pub directions: usize,
    pub delta: f64,
    pub directional_tol: f64,
    pub bound_n: usize,
    pub bound_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    /// Fresh samples per replicate for excess risk.
    pub eval_n: usize,
    /// Also write the generated training data of each replicate.
    pub export_data: bool,
    pub flr: FlrSection,
    pub deconv: DeconvSection,
    pub solver: SolverSection,
    pub bound: BoundSection,
    pub cv: CvSection,
    pub checks: CheckSection,
}

impl ExperimentConfig {
    pub fn defaults(kind: ExperimentKind) -> Self {
        let flr_default = FlrGenConfig::default();
        let deconv_default = DeconvGenConfig::default();
        let stream = |eta: f64, learner: Option<LearnerSpec>| StreamSolver {
            eta,
            schedule: ScheduleKind::FixedInvSqrtN,
            mode: ModeKind::Streaming,
            iterations: 200,
            learner,
        };
        let mut c = ExperimentConfig {
            experiment: kind,
            methods: vec![Method::Sgd, Method::Mlsgd, Method::Landweber],
            replicates: 10,
            seed: 0,
            eval_n: 20_000,
            export_data: false,
            flr: FlrSection {
                n_samples: flr_default.n_samples,
                fine_n: flr_default.fine_n,
                obs_n: flr_default.obs_n,
                nsr: flr_default.nsr,
                target: TargetKind::Sine,
                amplitude: 1.0,
            },
            deconv: DeconvSection {
                n_samples: deconv_default.n_samples,
                fine_spacing: deconv_default.fine_spacing,
                obs_spacing: deconv_default.obs_spacing,
                noise_sd: deconv_default.noise_sd,
            },
            solver: SolverSection {
                sgd: stream(30.0, None),
                mlsgd: stream(30.0, Some(LearnerSpec::Spline { df: 10 })),
                landweber: LandweberSolver {
                    eta: 100.0,
                    schedule: ScheduleKind::FixedInvSqrtN,
                    iterations: 200,
                },
            },
            bound: BoundSection { diameter: None },
            cv: CvSection { folds: 3 },
            checks: CheckSection {
                adjoint_trials: 50,
                adjoint_samples: 20,
                adjoint_tol: 1e-10,
                unbiased_m: 50_000,
                unbiased_small_m: 5_000,
                oracle_m: 500_000,
                unbiased_tol: 0.02,
                directional_samples: 5_000,
                directions: 10,
                delta: 1e-4,
                directional_tol: 1e-5,
                bound_n: 1_000,
                bound_replicates: 20,
            },
        };
        match kind {
            ExperimentKind::Flr | ExperimentKind::Check => {}
            ExperimentKind::FlrStep => c.flr.target = TargetKind::Step,
            ExperimentKind::FlrClassify => {
                c.methods = vec![Method::Sgd];
                c.replicates = 1;
                c.flr.amplitude = 30.0;
            }
            ExperimentKind::Deconv => {
                c.solver.sgd.eta = 0.5;
                c.solver.mlsgd.eta = 0.5;
                c.solver.mlsgd.learner = Some(LearnerSpec::Spline { df: 5 });
                c.solver.landweber.eta = 0.5;
            }
        }
        c
    }

    pub fn is_classification(&self) -> bool {
        self.experiment == ExperimentKind::FlrClassify
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |msg: String| Err(AppError::Config(msg));
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if self.eval_n == 0 {
            return bad("eval_n must be at least 1".into());
        }
        if self.is_classification() && self.methods.contains(&Method::Landweber) {
            return bad("landweber needs the squared loss and cannot run flr-classify".into());
        }
        if self.methods.contains(&Method::Mlsgd) && self.solver.mlsgd.learner.is_none() {
            return bad("solver.mlsgd.learner must name a base learner".into());
        }
        if self.solver.sgd.learner.is_some() {
            return bad("solver.sgd.learner must be \"none\"; use mlsgd for learners".into());
        }
        for (name, eta) in [
            ("sgd", self.solver.sgd.eta),
            ("mlsgd", self.solver.mlsgd.eta),
            ("landweber", self.solver.landweber.eta),
        ] {
            if !(eta > 0.0 && eta.is_finite()) {
                return bad(format!("solver.{name}.eta must be positive, got {eta}"));
            }
        }
        if self.solver.landweber.iterations == 0 {
            return bad("solver.landweber.iterations must be at least 1".into());
        }
        for (name, s) in [("sgd", &self.solver.sgd), ("mlsgd", &self.solver.mlsgd)] {
            if s.mode == ModeKind::FullBatch && s.iterations == 0 {
                return bad(format!(
                    "solver.{name}.iterations must be at least 1 in full-batch mode"
                ));
            }
        }
        if let Some(d) = self.bound.diameter {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("bound.diameter must be nonnegative, got {d}"));
            }
        }
        match self.experiment {
            ExperimentKind::Deconv => self
                .deconv
                .gen_config(self.seed)
                .validate()
                .map_err(|e| AppError::Config(format!("deconv: {e}")))?,
            _ => self
                .flr
                .gen_config(self.seed)
                .validate()
                .map_err(|e| AppError::Config(format!("flr: {e}")))?,
        }
        if self.is_classification() {
            let n = self.flr.n_samples;
            if self.cv.folds < 2 || self.cv.folds > n {
                return bad(format!(
                    "cv.folds must lie in [2, {n}], got {}",
                    self.cv.folds
                ));
            }
        }
        if self.experiment == ExperimentKind::Check {
            let c = &self.checks;
            for (name, v) in [
                ("adjoint_trials", c.adjoint_trials),
                ("adjoint_samples", c.adjoint_samples),
                ("unbiased_m", c.unbiased_m),
                ("unbiased_small_m", c.unbiased_small_m),
                ("oracle_m", c.oracle_m),
                ("directional_samples", c.directional_samples),
                ("directions", c.directions),
                ("bound_n", c.bound_n),
            ] {
                if v == 0 {
                    return bad(format!("checks.{name} must be at least 1"));
                }
            }
            if c.bound_replicates < 2 {
                return bad("checks.bound_replicates must be at least 2".into());
            }
            if c.unbiased_small_m >= c.unbiased_m {
                return bad("checks.unbiased_small_m must be below checks.unbiased_m".into());
            }
            if !(c.delta > 0.0) {
                return bad("checks.delta must be positive".into());
            }
        }
        Ok(())
    }
}

/// `key=value` with a dotted key. The value is read as JSON when it parses,
/// otherwise as a bare string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, raw) = s
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got {s:?}"))?;
        let key = key.trim();
        if key.is_empty() || key.split('.').any(str::is_empty) {
            return Err(format!("malformed key {key:?}"));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Override {
            path: key.split('.').map(String::from).collect(),
            value,
        })
    }
}

/// Recursive object merge; non-object values in `overlay` replace.
pub fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(doc: &mut Value, ov: &Override) -> Result<(), AppError> {
    let mut node = doc;
    let (last, parents) = ov.path.split_last().expect("nonempty path");
    for (depth, key) in parents.iter().enumerate() {
        let here = ov.path[..=depth].join(".");
        node = match node {
            Value::Object(map) => map
                .entry(key.clone())
                .or_insert_with(|| Value::Object(Map::new())),
            _ => {
                return Err(AppError::Config(format!(
                    "--set {}: {here} is not a table",
                    ov.path.join(".")
                )))
            }
        };
        if !node.is_object() {
            return Err(AppError::Config(format!(
                "--set {}: {here} is not a table",
                ov.path.join(".")
            )));
        }
    }
    match node {
        Value::Object(map) => {
            map.insert(last.clone(), ov.value.clone());
            Ok(())
        }
        _ => unreachable!(),
    }
}

/// A manifest is accepted wherever a config is: its `config` member is used.
fn unwrap_manifest(doc: Value) -> Value {
    match doc {
        Value::Object(mut map) if map.contains_key("config") && map.contains_key("seeds") => {
            map.remove("config").unwrap_or(Value::Null)
        }
        other => other,
    }
}

pub fn parse_document(text: &str, origin: &str) -> Result<Value, AppError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        AppError::Config(format!(
            "{origin}: line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    if !doc.is_object() {
        return Err(AppError::Config(format!(
            "{origin}: top level must be a JSON object"
        )));
    }
    Ok(unwrap_manifest(doc))
}

/// Defaults for `kind`, then the file at `path`, then `overrides` in order.
pub fn resolve(
    kind: ExperimentKind,
    path: Option<&Path>,
    overrides: &[Override],
) -> Result<ExperimentConfig, AppError> {
    let mut doc =
        serde_json::to_value(ExperimentConfig::defaults(kind)).expect("defaults serialize");
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        let user = parse_document(&text, &path.display().to_string())?;
        if let Some(exp) = user.get("experiment") {
            if exp != &Value::String(kind.as_str().into()) {
                return Err(AppError::Config(format!(
                    "{}: experiment is {exp}, but the command is {kind}",
                    path.display()
                )));
            }
        }
        merge(&mut doc, user);
    }
    for ov in overrides {
        if ov.path == ["experiment"] {
            return Err(AppError::Config(
                "experiment is chosen by the subcommand".into(),
            ));
        }
        apply_override(&mut doc, ov)?;
    }
    let config: ExperimentConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        AppError::Config(format!("at {path}: {}", e.into_inner()))
    })?;
    config.validate()?;
    Ok(config)
}
