//! Wires schedule, environment, learner and hinter together and runs the
//! delayed-feedback protocol.

use log::{debug, info};
use optidelay::bounds::{
    copy_history, ftrl_round_terms, regret_certificate, replicated_certificate, rm_round_terms, CertificateKind,
    RmNorm, RmVariant,
};
use optidelay::closed_forms::{q_opt, PNormConfig};
use optidelay::envlab::{
    best_competitor_regret, generate_stream, LinearEnvironment, LinearStreamSpec, RegretRecord, RmseEnvSpec,
    RmseEnvironment,
};
use optidelay::ftrl::{FtrlConfig, Odaftrl, Tuning};
use optidelay::hinting::{AdaptiveHinter, BaseAdapter, ConstantHints, ReplicatedHints};
use optidelay::omd::{replicate, RegretMatcher, RmConfig};
use optidelay::{
    run_protocol, DelaySchedule, DelayedLearner, Environment, GradientVector, HintProvider, RunHistory, SimplexWeights,
};
use serde::{Deserialize, Serialize};

use crate::config::{DelaySpec, EnvConfig, ExperimentConfig, HinterSpec, LearnerKind};
use crate::error::CliError;

/// Slack allowed when comparing regret to a certificate, relative to
/// `max(1, certificate)`.
pub const CERTIFICATE_TOLERANCE: f64 = 1e-8;

/// One `regret ≤ certificate` comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    pub name: String,
    /// Expert index of the competitor vertex; `None` for the hint learner.
    pub competitor: Option<usize>,
    pub regret: f64,
    pub certificate: f64,
    pub holds: bool,
}

impl CertificateCheck {
    fn new(name: &str, competitor: Option<usize>, regret: f64, certificate: f64) -> Self {
        let holds = regret <= certificate + CERTIFICATE_TOLERANCE * certificate.abs().max(1.0);
        Self { name: name.to_string(), competitor, regret, certificate, holds }
    }
}

/// Per-round bound terms logged next to the plays.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundBound {
    pub b: f64,
    pub a: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub q: Option<f64>,
    pub alpha: Option<f64>,
    pub max_delay: usize,
    pub history: RunHistory,
    pub record: RegretRecord,
    pub bounds: Vec<RoundBound>,
    /// Hint-learner weights per round, when hints are learned.
    pub omegas: Option<Vec<SimplexWeights>>,
    pub certificates: Vec<CertificateCheck>,
}

impl Outcome {
    pub fn certified(&self) -> bool {
        self.certificates.iter().all(|c| c.holds)
    }
}

/// The environment, plus its gradient stream when losses are linear.
type Built = (Box<dyn Environment>, Option<Vec<GradientVector>>);

fn environment(cfg: &ExperimentConfig) -> Result<Built, CliError> {
    match &cfg.env {
        EnvConfig::Linear { generator, sigma } => {
            let spec = LinearStreamSpec {
                d: cfg.d,
                horizon: cfg.horizon,
                generator: generator.clone(),
                sigma: *sigma,
                seed: cfg.seed,
            };
            let stream = generate_stream(&spec)?;
            Ok((Box::new(LinearEnvironment::new(stream.clone())?), Some(stream)))
        }
        EnvConfig::Rmse { gridpoints, models, persistence } => {
            let spec = RmseEnvSpec {
                gridpoints: *gridpoints,
                horizon: cfg.horizon,
                models: models.clone().unwrap_or_else(|| RmseEnvSpec::dominant_profile(cfg.d)),
                persistence: persistence.unwrap_or(RmseEnvSpec::DEFAULT_PERSISTENCE),
                seed: cfg.seed,
            };
            Ok((Box::new(RmseEnvironment::from_spec(&spec)?), None))
        }
    }
}

fn rm_variant(kind: LearnerKind) -> RmVariant {
    if kind == LearnerKind::Dorm {
        RmVariant::Dorm
    } else {
        RmVariant::DormPlus
    }
}

fn tuning(cfg: &ExperimentConfig, alpha: Option<f64>) -> Option<Tuning> {
    match cfg.learner {
        LearnerKind::ConstantFtrl => Some(Tuning::Constant { lambda: cfg.lambda.unwrap_or(0.0) }),
        LearnerKind::Dub => Some(Tuning::Dub { alpha: alpha? }),
        LearnerKind::AdaHedgeD => Some(Tuning::AdaHedgeD { alpha: alpha? }),
        _ => None,
    }
}

fn learner(cfg: &ExperimentConfig, q: Option<f64>, alpha: Option<f64>) -> Result<Box<dyn DelayedLearner>, CliError> {
    let rm = |variant| -> optidelay::Result<RmConfig> {
        let base = RmConfig::new(cfg.d, q.expect("regret matching has q"), variant)?;
        match cfg.lambda {
            Some(l) => base.with_lambda(l),
            None => Ok(base),
        }
    };
    Ok(match cfg.learner {
        LearnerKind::Dorm | LearnerKind::DormPlus => Box::new(RegretMatcher::new(rm(rm_variant(cfg.learner))?)?),
        LearnerKind::ReplicatedDormPlus => {
            let DelaySpec::Constant(delay) = cfg.delay else {
                return Err(CliError::Config("replicated-dormplus needs a constant delay".into()));
            };
            let base = rm(RmVariant::DormPlus)?;
            Box::new(replicate(|| Ok(Box::new(RegretMatcher::new(base)?) as Box<dyn DelayedLearner>), delay)?)
        }
        _ => {
            let tuning = tuning(cfg, alpha).expect("FTRL learner has a tuning");
            Box::new(Odaftrl::new(FtrlConfig { d: cfg.d, tuning })?)
        }
    })
}

enum Hints {
    Fixed(Box<dyn HintProvider>),
    Learned(Box<AdaptiveHinter>),
}

fn hints(cfg: &ExperimentConfig, learner: &dyn DelayedLearner, q: Option<f64>) -> Result<Hints, CliError> {
    let space = learner.hint_space();
    Ok(match &cfg.hinter {
        HinterSpec::Fixed(strategy) if cfg.learner == LearnerKind::ReplicatedDormPlus => {
            let DelaySpec::Constant(delay) = cfg.delay else { unreachable!("validated constant delay") };
            Hints::Fixed(Box::new(ReplicatedHints { strategy: *strategy, space, copies: delay + 1 }))
        }
        HinterSpec::Fixed(strategy) => Hints::Fixed(Box::new(ConstantHints { strategy: *strategy, space })),
        HinterSpec::Learned { learned } => {
            let base = match q {
                Some(q) => BaseAdapter::RegretMatching { q },
                None => BaseAdapter::Ftrl,
            };
            Hints::Learned(Box::new(AdaptiveHinter::from_strategies(learned, base)?))
        }
    })
}

fn bound_columns(cfg: &ExperimentConfig, hist: &RunHistory, q: Option<f64>) -> Result<Vec<RoundBound>, CliError> {
    match (cfg.learner, q) {
        (LearnerKind::ReplicatedDormPlus, Some(q)) => {
            let DelaySpec::Constant(delay) = cfg.delay else { unreachable!("validated constant delay") };
            let copies = delay + 1;
            let mut out = vec![RoundBound::default(); hist.horizon()];
            for k in 0..copies {
                let sub = copy_history(hist, copies, k)?;
                if sub.horizon() == 0 {
                    continue;
                }
                let terms = rm_round_terms(&sub, RmVariant::DormPlus, q)?;
                let rounds = (1..=hist.horizon()).filter(|t| t % copies == k);
                for (t, b) in rounds.zip(terms) {
                    out[t - 1].b = b;
                }
            }
            Ok(out)
        }
        (kind, Some(q)) => {
            Ok(rm_round_terms(hist, rm_variant(kind), q)?.into_iter().map(|b| RoundBound { b, a: 0.0 }).collect())
        }
        (_, None) => Ok(ftrl_round_terms(hist)?.into_iter().map(|t| RoundBound { b: t.b, a: t.a }).collect()),
    }
}

fn certificates(
    cfg: &ExperimentConfig,
    hist: &RunHistory,
    q: Option<f64>,
    alpha: Option<f64>,
) -> Result<Vec<CertificateCheck>, CliError> {
    let d = cfg.d;
    let mut kinds: Vec<(&str, CertificateKind)> = Vec::new();
    if let Some(q) = q {
        let pnorm = PNormConfig::new(q)?;
        let variant = rm_variant(cfg.learner);
        let rm = |norm| CertificateKind::RegretMatching { variant, pnorm, norm };
        kinds.push(("regret_matching_q", rm(RmNorm::Q)));
        kinds.push(("regret_matching_max", rm(RmNorm::Max)));
        if d >= 2 && cfg.learner != LearnerKind::ReplicatedDormPlus && q == q_opt(d)? {
            kinds.push(("regret_matching_log_dim", rm(RmNorm::LogDim)));
        }
    } else {
        match tuning(cfg, alpha).expect("FTRL learner has a tuning") {
            Tuning::Constant { lambda } => kinds.push(("constant_ftrl", CertificateKind::ConstantFtrl { lambda })),
            Tuning::Dub { alpha } => kinds.push(("dub", CertificateKind::Dub { alpha })),
            Tuning::AdaHedgeD { alpha } => kinds.push(("adahedged", CertificateKind::AdaHedgeD { alpha })),
        }
    }
    let mut out = Vec::new();
    for (name, kind) in kinds {
        for i in 0..d {
            let u = SimplexWeights::vertex(d, i);
            let regret = hist.linearized_regret(&u)?;
            let certificate = match (cfg.learner, cfg.delay.clone()) {
                (LearnerKind::ReplicatedDormPlus, DelaySpec::Constant(delay)) => {
                    replicated_certificate(&kind, hist, delay + 1, &u)?
                }
                _ => regret_certificate(&kind, hist, &u)?,
            };
            out.push(CertificateCheck::new(name, Some(i), regret, certificate));
        }
    }
    Ok(out)
}

/// Runs one experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let schedule: DelaySchedule = cfg.schedule()?;
    let q = match (cfg.learner.is_regret_matching(), cfg.q) {
        (false, _) => None,
        (true, Some(q)) => Some(q),
        // A single expert is played with certainty whatever the exponent.
        (true, None) if cfg.d == 1 => Some(2.0),
        (true, None) => Some(q_opt(cfg.d)?),
    };
    let alpha = match cfg.learner {
        LearnerKind::AdaHedgeD | LearnerKind::Dub => {
            Some(cfg.alpha.unwrap_or_else(|| FtrlConfig::default_alpha(cfg.d)))
        }
        _ => None,
    };
    let (mut env, _) = environment(cfg)?;
    let mut base = learner(cfg, q, alpha)?;
    let mut provider = hints(cfg, base.as_ref(), q)?;
    info!("running {:?} with d={} T={} seed={}", cfg.learner, cfg.d, cfg.horizon, cfg.seed);

    let history = match &mut provider {
        Hints::Fixed(h) => run_protocol(base.as_mut(), env.as_mut(), &schedule, cfg.horizon, h.as_mut())?,
        Hints::Learned(h) => run_protocol(base.as_mut(), env.as_mut(), &schedule, cfg.horizon, h)?,
    };
    let record = best_competitor_regret(&history.losses, &history.expert_losses)?;
    let bounds = bound_columns(cfg, &history, q)?;
    let mut checks = if cfg.certify { certificates(cfg, &history, q, alpha)? } else { Vec::new() };
    let omegas = match &provider {
        Hints::Learned(h) => {
            if cfg.certify {
                let regret = (0..h.candidates()).map(|j| h.hint_regret(j)).fold(f64::NEG_INFINITY, f64::max);
                checks.push(CertificateCheck::new("hint_learner", None, regret, h.certificate()?));
            }
            Some(h.weights().to_vec())
        }
        Hints::Fixed(_) => None,
    };
    for c in checks.iter().filter(|c| !c.holds) {
        debug!("certificate {} fails against {:?}: {} > {}", c.name, c.competitor, c.regret, c.certificate);
    }
    Ok(Outcome {
        config: cfg.clone(),
        q,
        alpha,
        max_delay: schedule.max_delay(cfg.horizon),
        history,
        record,
        bounds,
        omegas,
        certificates: checks,
    })
}

/// The generated gradient stream of a linear-loss config.
pub fn linear_stream(cfg: &ExperimentConfig) -> Result<Option<Vec<GradientVector>>, CliError> {
    Ok(environment(cfg)?.1)
}
