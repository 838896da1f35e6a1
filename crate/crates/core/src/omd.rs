//! Delayed optimistic regret matching (DORM, DORM+), the orthant mirror-descent
//! step they are built on, and the replication baseline.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bounds::RmVariant;
use crate::closed_forms::{pow_nonneg, PNormConfig};
use crate::error::{check_dim, Error, Result};
use crate::protocol::{DelayedLearner, HintSpace};
use crate::vector::{instantaneous_regret, simplex_normalize, GradientVector, SimplexWeights};

/// DORM iterate `((r_{1:last} + h)/λ)₊^{q−1}`.
pub fn dorm_iterate(regret_prefix: &[f64], hint: &[f64], lambda: f64, cfg: PNormConfig) -> Vec<f64> {
    regret_prefix.iter().zip(hint).map(|(r, h)| pow_nonneg((r + h) / lambda, cfg.q() - 1.0)).collect()
}

/// DORM play: the normalized [`dorm_iterate`].
pub fn dorm_play(regret_prefix: &[f64], hint: &[f64], lambda: f64, cfg: PNormConfig) -> Result<SimplexWeights> {
    check_dim(regret_prefix.len(), hint.len())?;
    simplex_normalize(&dorm_iterate(regret_prefix, hint, lambda, cfg))
}

/// DORM+ recursion `(w̃^{p−1} + (r_delayed + h_next − h_prev)/λ)₊^{q−1}`, where
/// `r_delayed` is the regret block revealed since the previous play.
pub fn dormplus_step(
    prev: &[f64],
    r_delayed: &[f64],
    h_prev: &[f64],
    h_next: &[f64],
    lambda: f64,
    cfg: PNormConfig,
) -> Result<Vec<f64>> {
    let d = prev.len();
    for n in [r_delayed.len(), h_prev.len(), h_next.len()] {
        check_dim(d, n)?;
    }
    Ok((0..d)
        .map(|j| {
            let base = pow_nonneg(prev[j], cfg.p() - 1.0);
            pow_nonneg(base + (r_delayed[j] + h_next[j] - h_prev[j]) / lambda, cfg.q() - 1.0)
        })
        .collect())
}

/// Single-step optimistic mirror descent on the orthant with `ψ = ½‖·‖_p²`, in
/// the coordinates where DORM+ lives:
/// `(w̃^{p−1} − (g + g̃_next − g̃)/λ)₊^{q−1}`.
pub fn soomd_orthant_step(
    prev: &[f64],
    g: &[f64],
    hint: &[f64],
    hint_next: &[f64],
    lambda: f64,
    cfg: PNormConfig,
) -> Result<Vec<f64>> {
    let d = prev.len();
    for n in [g.len(), hint.len(), hint_next.len()] {
        check_dim(d, n)?;
    }
    Ok((0..d)
        .map(|j| {
            let base = pow_nonneg(prev[j], cfg.p() - 1.0);
            pow_nonneg(base - (g[j] + hint_next[j] - hint[j]) / lambda, cfg.q() - 1.0)
        })
        .collect())
}

/// Maps an iterate in DORM+ coordinates to the actual mirror-descent point
/// `w̃ · ‖w̃‖_p^{p−2}`, the minimizer the recursion tracks up to scale.
pub fn orthant_point(iterate: &[f64], cfg: PNormConfig) -> Vec<f64> {
    let norm = crate::vector::lp_norm(iterate, cfg.p());
    if norm == 0.0 {
        return vec![0.0; iterate.len()];
    }
    let scale = norm.powf(cfg.p() - 2.0);
    iterate.iter().map(|x| x * scale).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmConfig {
    pub d: usize,
    pub pnorm: PNormConfig,
    pub lambda: f64,
    pub variant: RmVariant,
}

impl RmConfig {
    /// `λ = 1`; plays do not depend on it.
    pub fn new(d: usize, q: f64, variant: RmVariant) -> Result<Self> {
        let cfg = Self { d, pnorm: PNormConfig::new(q)?, lambda: 1.0, variant };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInput("need at least one expert".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// DORM or DORM+ over the simplex; hints guess the regret window sum.
#[derive(Debug, Clone)]
pub struct RegretMatcher {
    cfg: RmConfig,
    iterate: Vec<f64>,
    regret_prefix: Vec<f64>,
    block: Vec<f64>,
    prev_hint: Vec<f64>,
    pending: VecDeque<SimplexWeights>,
    received: usize,
    played: usize,
}

impl RegretMatcher {
    pub fn new(cfg: RmConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        Ok(Self {
            cfg,
            iterate: vec![0.0; d],
            regret_prefix: vec![0.0; d],
            block: vec![0.0; d],
            prev_hint: vec![0.0; d],
            pending: VecDeque::new(),
            received: 0,
            played: 0,
        })
    }

    pub fn config(&self) -> &RmConfig {
        &self.cfg
    }

    /// Orthant iterate behind the most recent play.
    pub fn iterate(&self) -> &[f64] {
        &self.iterate
    }

    /// Number of rounds whose feedback has arrived.
    pub fn received(&self) -> usize {
        self.received
    }
}

impl DelayedLearner for RegretMatcher {
    fn dim(&self) -> usize {
        self.cfg.d
    }

    fn hint_space(&self) -> HintSpace {
        HintSpace::Regret
    }

    fn play(&mut self, hint: &GradientVector) -> Result<SimplexWeights> {
        check_dim(self.cfg.d, hint.dim())?;
        let h = hint.as_slice();
        self.iterate = match self.cfg.variant {
            RmVariant::Dorm => dorm_iterate(&self.regret_prefix, h, self.cfg.lambda, self.cfg.pnorm),
            RmVariant::DormPlus => {
                let next =
                    dormplus_step(&self.iterate, &self.block, &self.prev_hint, h, self.cfg.lambda, self.cfg.pnorm)?;
                self.block.iter_mut().for_each(|x| *x = 0.0);
                self.prev_hint.copy_from_slice(h);
                next
            }
        };
        let w = simplex_normalize(&self.iterate)?;
        self.played += 1;
        self.pending.push_back(w.clone());
        Ok(w)
    }

    fn receive(&mut self, round: usize, g: &GradientVector) -> Result<()> {
        check_dim(self.cfg.d, g.dim())?;
        if round != self.received + 1 {
            return Err(Error::Protocol(format!("expected feedback for round {}, got {round}", self.received + 1)));
        }
        let w = self
            .pending
            .pop_front()
            .ok_or_else(|| Error::Protocol(format!("feedback for round {round} before it was played")))?;
        let r = instantaneous_regret(g, &w)?;
        for (j, rj) in r.as_slice().iter().enumerate() {
            self.regret_prefix[j] += rj;
            self.block[j] += rj;
        }
        self.received = round;
        Ok(())
    }

    fn current_lambda(&self) -> f64 {
        self.cfg.lambda
    }
}

/// Delayed optimistic mirror descent on the orthant with `ψ = ½‖·‖_p²` for
/// linear losses. Plays raw orthant iterates rather than simplex points.
#[derive(Debug, Clone)]
pub struct OrthantDoomd {
    pnorm: PNormConfig,
    lambda: f64,
    iterate: Vec<f64>,
    block: Vec<f64>,
    prev_hint: Vec<f64>,
    received: usize,
    played: usize,
}

impl OrthantDoomd {
    pub fn new(d: usize, pnorm: PNormConfig, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            pnorm,
            lambda,
            iterate: vec![0.0; d],
            block: vec![0.0; d],
            prev_hint: vec![0.0; d],
            received: 0,
            played: 0,
        })
    }

    /// Next iterate given the hint for the rounds still missing.
    pub fn play(&mut self, hint: &GradientVector) -> Result<Vec<f64>> {
        check_dim(self.iterate.len(), hint.dim())?;
        self.iterate =
            soomd_orthant_step(&self.iterate, &self.block, &self.prev_hint, hint.as_slice(), self.lambda, self.pnorm)?;
        self.block.iter_mut().for_each(|x| *x = 0.0);
        self.prev_hint.copy_from_slice(hint.as_slice());
        self.played += 1;
        Ok(self.iterate.clone())
    }

    pub fn receive(&mut self, round: usize, g: &GradientVector) -> Result<()> {
        check_dim(self.iterate.len(), g.dim())?;
        if round != self.received + 1 || round > self.played {
            return Err(Error::Protocol(format!(
                "feedback for round {round} out of order (received {}, played {})",
                self.received, self.played
            )));
        }
        for (b, x) in self.block.iter_mut().zip(g.as_slice()) {
            *b += x;
        }
        self.received = round;
        Ok(())
    }
}

/// `D + 1` undelayed copies of a base learner taking turns: round `t` is
/// served by copy `t mod (D + 1)`, whose previous feedback has arrived by then.
pub struct Replicated {
    copies: Vec<Box<dyn DelayedLearner>>,
    served: Vec<usize>,
    played: usize,
    last_lambda: f64,
}

/// Builds the replication wrapper from a factory for fresh base learners.
pub fn replicate<F>(mut factory: F, delay: usize) -> Result<Replicated>
where
    F: FnMut() -> Result<Box<dyn DelayedLearner>>,
{
    let copies = (0..=delay).map(|_| factory()).collect::<Result<Vec<_>>>()?;
    let d = copies[0].dim();
    if copies.iter().any(|c| c.dim() != d) {
        return Err(Error::InvalidInput("replicated copies disagree on dimension".into()));
    }
    Ok(Replicated { served: Vec::new(), last_lambda: copies[0].current_lambda(), copies, played: 0 })
}

impl Replicated {
    pub fn copies(&self) -> usize {
        self.copies.len()
    }

    /// Copy that serves round `t`.
    pub fn owner(&self, t: usize) -> usize {
        t % self.copies.len()
    }

    /// Index of round `t` within its copy's own sequence (1-indexed).
    pub fn local_round(&self, t: usize) -> usize {
        t.div_ceil(self.copies.len())
    }

    /// Rounds each copy has played.
    pub fn rounds_per_copy(&self) -> &[usize] {
        &self.served
    }
}

impl DelayedLearner for Replicated {
    fn dim(&self) -> usize {
        self.copies[0].dim()
    }

    fn hint_space(&self) -> HintSpace {
        self.copies[0].hint_space()
    }

    fn play(&mut self, hint: &GradientVector) -> Result<SimplexWeights> {
        self.played += 1;
        let k = self.owner(self.played);
        let w = self.copies[k].play(hint)?;
        self.last_lambda = self.copies[k].current_lambda();
        if self.served.len() < self.copies.len() {
            self.served.resize(self.copies.len(), 0);
        }
        self.served[k] += 1;
        Ok(w)
    }

    fn receive(&mut self, round: usize, g: &GradientVector) -> Result<()> {
        if round == 0 || round > self.played {
            return Err(Error::Protocol(format!("feedback for unplayed round {round}")));
        }
        let k = self.owner(round);
        let local = self.local_round(round);
        self.copies[k].receive(local, g)
    }

    fn current_lambda(&self) -> f64 {
        self.last_lambda
    }
}
