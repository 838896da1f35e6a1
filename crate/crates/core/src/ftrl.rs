//! Optimistic delayed adaptive FTRL over the simplex with negative-entropy
//! regularization, under constant, upper-bound (DUB) or AdaHedge-style
//! (AdaHedgeD) tuning of the regularization weight.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::bounds::{dub_envelope_general, ftrl_bound_terms, BoundTerms, DualNorm, SIMPLEX_DIAMETER};
use crate::closed_forms::negentropy_argmin;
use crate::error::{check_dim, Error, Result};
use crate::protocol::{DelayedLearner, HintSpace};
use crate::vector::{dot, lp_norm, window_sum, GradientVector, SimplexWeights};

/// Weights below this are treated as zero when choosing stabilizing shifts.
const ZERO_WEIGHT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tuning {
    Constant { lambda: f64 },
    Dub { alpha: f64 },
    AdaHedgeD { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FtrlConfig {
    pub d: usize,
    pub tuning: Tuning,
}

impl FtrlConfig {
    /// `sup_u ψ(u) = ln d`; falls back to 1 for a single expert, where `ln d = 0`.
    pub fn default_alpha(d: usize) -> f64 {
        if d >= 2 {
            (d as f64).ln()
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidInput("need at least one expert".into()));
        }
        match self.tuning {
            Tuning::Constant { lambda } if !(lambda >= 0.0 && lambda.is_finite()) => {
                Err(Error::InvalidInput(format!("lambda must be finite and nonnegative, got {lambda}")))
            }
            Tuning::Dub { alpha } | Tuning::AdaHedgeD { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidInput(format!("alpha must be finite and positive, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
struct PendingRound {
    round: usize,
    play: SimplexWeights,
    hint: GradientVector,
    lambda: f64,
    observable: usize,
}

/// Diagnostics for a round whose feedback has arrived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub lambda: f64,
    pub terms: BoundTerms,
    pub delta: f64,
}

/// ODAFTRL: plays `argmin_w λ_t ψ(w) + ⟨g_{1:last(t)} + h_t, w⟩`.
#[derive(Debug, Clone)]
pub struct Odaftrl {
    cfg: FtrlConfig,
    revealed: Vec<GradientVector>,
    prefix: GradientVector,
    pending: VecDeque<PendingRound>,
    observable: Vec<usize>,
    trace: Vec<RoundTrace>,
    a_hist: Vec<f64>,
    b_hist: Vec<f64>,
    deltas: Vec<f64>,
    delta_sum: f64,
    lambda: f64,
    last_lambda: f64,
    played: usize,
}

impl Odaftrl {
    pub fn new(cfg: FtrlConfig) -> Result<Self> {
        cfg.validate()?;
        let lambda = match cfg.tuning {
            Tuning::Constant { lambda } => lambda,
            _ => 0.0,
        };
        Ok(Self {
            cfg,
            revealed: Vec::new(),
            prefix: GradientVector::zeros(cfg.d),
            pending: VecDeque::new(),
            observable: Vec::new(),
            trace: Vec::new(),
            a_hist: Vec::new(),
            b_hist: Vec::new(),
            deltas: Vec::new(),
            delta_sum: 0.0,
            lambda,
            last_lambda: lambda,
            played: 0,
        })
    }

    pub fn config(&self) -> &FtrlConfig {
        &self.cfg
    }

    /// Weight the next play will use.
    pub fn next_lambda(&self) -> f64 {
        self.lambda
    }

    /// Per-round diagnostics, one entry per round with feedback.
    pub fn trace(&self) -> &[RoundTrace] {
        &self.trace
    }

    /// Rounds played but not yet answered.
    pub fn pending_rounds(&self) -> usize {
        self.pending.len()
    }

    fn retune(&mut self) -> Result<()> {
        self.lambda = match self.cfg.tuning {
            Tuning::Constant { lambda } => lambda,
            Tuning::Dub { alpha } => {
                dub_envelope_general(&self.a_hist, &self.b_hist, &self.observable, alpha, self.revealed.len())?
            }
            Tuning::AdaHedgeD { alpha } => self.delta_sum / alpha,
        };
        Ok(())
    }
}

impl DelayedLearner for Odaftrl {
    fn dim(&self) -> usize {
        self.cfg.d
    }

    fn hint_space(&self) -> HintSpace {
        HintSpace::Gradient
    }

    fn play(&mut self, hint: &GradientVector) -> Result<SimplexWeights> {
        check_dim(self.cfg.d, hint.dim())?;
        let theta: Vec<f64> = self.prefix.as_slice().iter().zip(hint.as_slice()).map(|(g, h)| -(g + h)).collect();
        let w = negentropy_argmin(&theta, self.lambda);
        self.played += 1;
        self.observable.push(self.revealed.len());
        self.pending.push_back(PendingRound {
            round: self.played,
            play: w.clone(),
            hint: hint.clone(),
            lambda: self.lambda,
            observable: self.revealed.len(),
        });
        self.last_lambda = self.lambda;
        Ok(w)
    }

    fn receive(&mut self, round: usize, g: &GradientVector) -> Result<()> {
        check_dim(self.cfg.d, g.dim())?;
        let expected = self.revealed.len() + 1;
        if round != expected {
            return Err(Error::Protocol(format!("expected feedback for round {expected}, got {round}")));
        }
        let rec = self
            .pending
            .pop_front()
            .ok_or_else(|| Error::Protocol(format!("feedback for round {round} before it was played")))?;
        debug_assert_eq!(rec.round, round);

        self.prefix += g;
        self.revealed.push(g.clone());
        let window = window_sum(&self.revealed, rec.observable as isize + 1, round as isize, self.cfg.d);
        let terms = ftrl_bound_terms(&rec.hint, &window, g, DualNorm::Max, SIMPLEX_DIAMETER)?;
        self.a_hist.push(terms.a);
        self.b_hist.push(terms.b);

        let delta = match self.cfg.tuning {
            Tuning::AdaHedgeD { .. } => {
                let delta = adahedged_delta(&rec.play, &rec.hint, &window, &self.prefix, g, rec.lambda)?;
                self.delta_sum += delta;
                self.deltas.push(delta);
                delta
            }
            _ => 0.0,
        };
        self.trace.push(RoundTrace { lambda: rec.lambda, terms, delta });
        self.retune()
    }

    fn current_lambda(&self) -> f64 {
        self.last_lambda
    }

    fn deltas(&self) -> &[f64] {
        &self.deltas
    }
}

/// `λ ln Σ_j w_j exp((x_j − c)/λ) + ⟨−x, w⟩ + c`, with `c` the max of `x` over
/// the support of `w`. Equals `obj(w) − obj(w̄)` when `w` is the FTRL play for
/// the hint offset `x` and `w̄` the play without it.
fn entropic_gap(w: &[f64], offset: &[f64], lambda: f64) -> f64 {
    let shift =
        w.iter().zip(offset).filter(|(wj, _)| **wj > ZERO_WEIGHT).map(|(_, x)| *x).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = w
        .iter()
        .zip(offset)
        .filter(|(wj, _)| **wj > ZERO_WEIGHT)
        .map(|(wj, x)| wj * ((x - shift) / lambda).exp())
        .sum();
    lambda * s.ln() - dot(offset, w) + shift
}

fn min_coord(x: &[f64]) -> f64 {
    x.iter().copied().fold(f64::INFINITY, f64::min)
}

/// AdaHedge-style increment for round `t`, evaluated once `g_t` is revealed:
/// the positive part of the smallest of three certified per-round excess
/// terms. `window` is `g_{last(t)+1 : t}`, `prefix` is `g_{1:t}`, and `lambda`
/// is the weight that produced `w`.
pub fn adahedged_delta(
    w: &SimplexWeights,
    hint: &GradientVector,
    window: &GradientVector,
    prefix: &GradientVector,
    g: &GradientVector,
    lambda: f64,
) -> Result<f64> {
    let d = w.dim();
    for n in [hint.dim(), window.dim(), prefix.dim(), g.dim()] {
        check_dim(d, n)?;
    }
    let wv = w.as_slice();
    let miss: Vec<f64> = hint.as_slice().iter().zip(window.as_slice()).map(|(h, s)| h - s).collect();
    let miss_norm = lp_norm(&miss, f64::INFINITY);
    let shrink = if miss_norm > 0.0 { (g.inf_norm() / miss_norm).min(1.0) } else { 1.0 };
    let shrunk: Vec<f64> = miss.iter().map(|m| shrink * m).collect();

    // Play after seeing g_{1:t} without hint, and with the shrunken hint error.
    let neg_prefix: Vec<f64> = prefix.as_slice().iter().map(|x| -x).collect();
    let shifted: Vec<f64> = prefix.as_slice().iter().zip(&shrunk).map(|(p, s)| -(p + s)).collect();
    let w_bar = negentropy_argmin(&neg_prefix, lambda);
    let w_hat = negentropy_argmin(&shifted, lambda);
    let step = |v: &SimplexWeights| g.dot(wv) - g.dot(v.as_slice());

    let (first, third) = if lambda > 0.0 {
        let first = entropic_gap(wv, &miss, lambda);
        let third = entropic_gap(w_hat.as_slice(), &shrunk, lambda) + step(&w_hat);
        (first, third)
    } else {
        let best = min_coord(prefix.as_slice());
        let first = prefix.dot(wv) - best;
        let third = prefix.dot(w_hat.as_slice()) - best + step(&w_hat);
        (first, third)
    };
    let second = step(&w_bar);
    Ok(first.min(second).min(third).max(0.0))
}

/// Undelayed optimistic FTRL fed the pseudo-hint
/// `g̃_t = h_t − Σ_{s=t−D}^{t−1} g_s`, with full access to the stream. Reference
/// implementation for checking the delayed learner.
pub fn oftrl_with_bad_hint(
    stream: &[GradientVector],
    hints: &[GradientVector],
    lambda: f64,
    delay: usize,
) -> Result<Vec<SimplexWeights>> {
    if stream.len() != hints.len() {
        return Err(Error::InvalidInput(format!("{} gradients but {} hints", stream.len(), hints.len())));
    }
    let d = match stream.first() {
        Some(g) => g.dim(),
        None => return Ok(Vec::new()),
    };
    let mut cumulative = GradientVector::zeros(d);
    let mut plays = Vec::with_capacity(stream.len());
    for t in 1..=stream.len() {
        check_dim(d, hints[t - 1].dim())?;
        let missing = window_sum(stream, t as isize - delay as isize, t as isize - 1, d);
        let pseudo = &hints[t - 1] - &missing;
        let theta: Vec<f64> = (&cumulative + &pseudo).as_slice().iter().map(|x| -x).collect();
        plays.push(negentropy_argmin(&theta, lambda));
        cumulative += &stream[t - 1];
    }
    Ok(plays)
}
