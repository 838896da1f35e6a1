//! Experiment configuration, loaded from a single JSON document.

use std::fs;
use std::path::{Path, PathBuf};

use optidelay::envlab::{Generator, ModelSkill};
use optidelay::hinting::HintStrategy;
use optidelay::DelaySchedule;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LearnerKind {
    #[serde(rename = "dorm")]
    Dorm,
    #[serde(rename = "dormplus")]
    DormPlus,
    #[serde(rename = "adahedged")]
    AdaHedgeD,
    #[serde(rename = "dub")]
    Dub,
    #[serde(rename = "odaftrl-const")]
    ConstantFtrl,
    #[serde(rename = "replicated-dormplus")]
    ReplicatedDormPlus,
}

impl LearnerKind {
    pub fn is_regret_matching(&self) -> bool {
        matches!(self, Self::Dorm | Self::DormPlus | Self::ReplicatedDormPlus)
    }
}

/// Constant delay, or a `t,reveal_time` CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelaySpec {
    Constant(usize),
    Schedule { schedule: PathBuf },
}

impl Default for DelaySpec {
    fn default() -> Self {
        Self::Constant(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HinterSpec {
    Fixed(HintStrategy),
    Learned { learned: Vec<HintStrategy> },
}

impl Default for HinterSpec {
    fn default() -> Self {
        Self::Fixed(HintStrategy::None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvConfig {
    Linear {
        generator: Generator,
        #[serde(default)]
        sigma: f64,
    },
    Rmse {
        gridpoints: usize,
        /// Defaults to one dominant model plus noisy alternates.
        #[serde(default)]
        models: Option<Vec<ModelSkill>>,
        /// Round-to-round correlation of model errors.
        #[serde(default)]
        persistence: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub learner: LearnerKind,
    pub d: usize,
    #[serde(alias = "T")]
    pub horizon: usize,
    #[serde(default)]
    pub delay: DelaySpec,
    /// Regret-matching exponent; defaults to `q_opt(d)` (2 when `d = 1`).
    #[serde(default)]
    pub q: Option<f64>,
    /// Regularization weight for constant tuning.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Self-tuning scale; defaults to `ln d`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub hinter: HinterSpec,
    pub env: EnvConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Whether regret certificates are checked and gate the exit code.
    #[serde(default = "yes")]
    pub certify: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg = Self::parse(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Loads a config file; relative schedule paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if let DelaySpec::Schedule { schedule } = &mut cfg.delay {
            if schedule.is_relative() {
                if let Some(dir) = path.parent() {
                    *schedule = dir.join(&*schedule);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.d == 0 {
            return bad("`d` must be at least 1".into());
        }
        if self.horizon == 0 {
            return bad("`horizon` must be at least 1".into());
        }
        if let Some(q) = self.q {
            if !self.learner.is_regret_matching() {
                return bad("`q` only applies to dorm, dormplus and replicated-dormplus".into());
            }
            if !(q >= 2.0 && q.is_finite()) {
                return bad(format!("`q` must be finite and at least 2, got {q}"));
            }
        }
        match (self.learner, self.lambda) {
            (LearnerKind::ConstantFtrl, None) => return bad("odaftrl-const needs `lambda`".into()),
            (LearnerKind::ConstantFtrl, Some(l)) if !(l >= 0.0 && l.is_finite()) => {
                return bad(format!("`lambda` must be finite and nonnegative, got {l}"))
            }
            (LearnerKind::AdaHedgeD | LearnerKind::Dub, Some(_)) => {
                return bad("`lambda` is tuned automatically for adahedged and dub; use `alpha`".into())
            }
            (k, Some(l)) if k.is_regret_matching() && !(l > 0.0 && l.is_finite()) => {
                return bad(format!("`lambda` must be positive, got {l}"))
            }
            _ => {}
        }
        if let Some(a) = self.alpha {
            if !matches!(self.learner, LearnerKind::AdaHedgeD | LearnerKind::Dub) {
                return bad("`alpha` only applies to adahedged and dub".into());
            }
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("`alpha` must be positive, got {a}"));
            }
        }
        if let HinterSpec::Learned { learned } = &self.hinter {
            if learned.is_empty() {
                return bad("`hinter.learned` needs at least one strategy".into());
            }
            if self.learner == LearnerKind::ReplicatedDormPlus {
                return bad("replicated-dormplus supports fixed hinters only".into());
            }
        }
        match &self.delay {
            DelaySpec::Schedule { schedule } => {
                if self.learner == LearnerKind::ReplicatedDormPlus {
                    return bad("replicated-dormplus needs a constant delay".into());
                }
                if !schedule.exists() {
                    return bad(format!("schedule file {} does not exist", schedule.display()));
                }
            }
            DelaySpec::Constant(_) => {}
        }
        match &self.env {
            EnvConfig::Linear { generator, sigma } => {
                if !(*sigma >= 0.0 && sigma.is_finite()) {
                    return bad(format!("`env.sigma` must be nonnegative, got {sigma}"));
                }
                if let Generator::IidGaussian { mean } = generator {
                    if mean.len() != self.d {
                        return bad(format!("`env.generator.mean` has {} entries but d = {}", mean.len(), self.d));
                    }
                }
            }
            EnvConfig::Rmse { gridpoints, models, persistence } => {
                if *gridpoints == 0 {
                    return bad("`env.gridpoints` must be at least 1".into());
                }
                if let Some(rho) = persistence {
                    if !(0.0..1.0).contains(rho) {
                        return bad(format!("`env.persistence` must lie in [0, 1), got {rho}"));
                    }
                }
                if let Some(m) = models {
                    if m.len() != self.d {
                        return bad(format!("`env.models` has {} entries but d = {}", m.len(), self.d));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<DelaySchedule, CliError> {
        match &self.delay {
            DelaySpec::Constant(d) => Ok(DelaySchedule::constant(*d)),
            DelaySpec::Schedule { schedule } => {
                let file =
                    fs::File::open(schedule).map_err(|e| CliError::Io(format!("{}: {e}", schedule.display())))?;
                DelaySchedule::from_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", schedule.display())))
            }
        }
    }

    /// Sets one top-level field from its JSON text, as used by sweeps and
    /// flag overrides.
    pub fn with_field(&self, name: &str, value: &str) -> Result<Self, CliError> {
        let mut doc = serde_json::to_value(self).map_err(|e| CliError::Config(e.to_string()))?;
        let parsed = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        let map = doc.as_object_mut().expect("config serializes to an object");
        let key = if name == "T" { "horizon" } else { name };
        if !map.contains_key(key) {
            return Err(CliError::Config(format!("unknown config field `{name}`")));
        }
        map.insert(key.to_string(), parsed);
        let cfg: Self = serde_json::from_value(doc).map_err(|e| CliError::Config(format!("`{name}`: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
