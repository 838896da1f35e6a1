//! Regret-bound quantities evaluated at runtime: the huber penalty, per-round
//! bound terms, self-tuning envelopes, and certificates that measured regret
//! is compared against.

use serde::{Deserialize, Serialize};

use crate::closed_forms::{negentropy, q_opt, PNormConfig};
use crate::error::{check_dim, Error, Result};
use crate::protocol::RunHistory;
use crate::vector::{lp_norm, window_sum, GradientVector, SimplexWeights};

/// Diameter of the simplex in ℓ₁.
pub const SIMPLEX_DIAMETER: f64 = 2.0;

/// `huber(x, y) = ½x² − ½(x − y)₊²` for `x, y ≥ 0`.
pub fn huber(x: f64, y: f64) -> Result<f64> {
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::InvalidInput(format!("huber needs nonnegative inputs, got ({x}, {y})")));
    }
    Ok(huber_unchecked(x, y))
}

pub(crate) fn huber_unchecked(x: f64, y: f64) -> f64 {
    let excess = (x - y).max(0.0);
    0.5 * x * x - 0.5 * excess * excess
}

/// Norm used to measure hint error and gradient size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DualNorm {
    Max,
    Lq(f64),
}

impl DualNorm {
    pub fn of(&self, x: &[f64]) -> f64 {
        match self {
            Self::Max => lp_norm(x, f64::INFINITY),
            Self::Lq(q) => lp_norm(x, *q),
        }
    }
}

/// Per-round terms of the adaptive FTRL bound.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundTerms {
    /// `diameter · min(‖h − window‖, ‖g‖)`.
    pub a: f64,
    /// `huber(‖h − window‖, ‖g‖)`.
    pub b: f64,
}

/// Bound terms for one round: `hint` guessed `window = Σ g_s` over the rounds
/// missing at play time, and `g` is the round's own gradient.
pub fn ftrl_bound_terms(
    hint: &GradientVector,
    window: &GradientVector,
    g: &GradientVector,
    norm: DualNorm,
    diameter: f64,
) -> Result<BoundTerms> {
    check_dim(hint.dim(), window.dim())?;
    check_dim(hint.dim(), g.dim())?;
    if !(diameter > 0.0) {
        return Err(Error::InvalidInput(format!("diameter must be positive, got {diameter}")));
    }
    let miss = norm.of((hint - window).as_slice());
    let size = norm.of(g.as_slice());
    Ok(BoundTerms { a: diameter * miss.min(size), b: huber_unchecked(miss, size) })
}

/// `huber(‖h − window‖_c, ‖step‖_c)`, where `step` is `r_t` for DORM and the
/// drift `r_{t−D} + h_{t+1} − h_t` for DORM+.
pub fn dorm_bound_term(
    hint: &GradientVector,
    regret_window: &GradientVector,
    step: &GradientVector,
    c: f64,
) -> Result<f64> {
    check_dim(hint.dim(), regret_window.dim())?;
    check_dim(hint.dim(), step.dim())?;
    if !(c >= 1.0) {
        return Err(Error::InvalidInput(format!("norm index must be at least 1, got {c}")));
    }
    let miss = lp_norm((hint - regret_window).as_slice(), c);
    Ok(huber_unchecked(miss, lp_norm(step.as_slice(), c)))
}

fn one_indexed(v: &[f64], s: isize) -> f64 {
    if s >= 1 {
        v.get(s as usize - 1).copied().unwrap_or(0.0)
    } else {
        0.0
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")))
    }
}

/// Constant-delay upper-bound tuning:
/// `λ_{t+1} = (2/α)·max_{j ≤ t−D−1} a_{j−D+1:j} + (1/α)·√(Σ_{i ≤ t−D} a_i² + 2α b_i)`.
/// `a` and `b` are 1-indexed by round and must cover rounds `1..=t−D`.
pub fn dub_envelope(a: &[f64], b: &[f64], alpha: f64, delay: usize, t: usize) -> Result<f64> {
    check_alpha(alpha)?;
    let known = t as isize - delay as isize;
    if known > a.len() as isize || known > b.len() as isize {
        return Err(Error::IncompleteHistory(format!(
            "need {known} rounds of bound terms, have {}",
            a.len().min(b.len())
        )));
    }
    let d = delay as isize;
    let mut window_max = 0.0_f64;
    for j in 1..known {
        let w: f64 = (j - d + 1..=j).map(|s| one_indexed(a, s)).sum();
        window_max = window_max.max(w);
    }
    let sq: f64 = (1..=known).map(|i| one_indexed(a, i).powi(2) + 2.0 * alpha * one_indexed(b, i)).sum();
    Ok((2.0 * window_max + sq.sqrt()) / alpha)
}

/// Schedule-aware form of [`dub_envelope`] once `known` rounds are revealed:
/// the window for round `s` is `a_{last(s)+1 : s−1}`. `observable[s-1]` holds
/// `last(s)`.
pub fn dub_envelope_general(a: &[f64], b: &[f64], observable: &[usize], alpha: f64, known: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if known > a.len() || known > b.len() || known > observable.len() {
        return Err(Error::IncompleteHistory(format!("need {known} rounds of bound terms")));
    }
    let mut window_max = 0.0_f64;
    for s in 1..=known {
        let w: f64 = a[observable[s - 1]..s - 1].iter().sum();
        window_max = window_max.max(w);
    }
    let sq: f64 = a[..known].iter().zip(&b[..known]).map(|(ai, bi)| ai * ai + 2.0 * alpha * bi).sum();
    Ok((2.0 * window_max + sq.sqrt()) / alpha)
}

/// Which dual-norm estimate the regret-matching certificate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmNorm {
    /// `√(2‖u‖_p² (q−1) Σ b_{t,q})`; the tightest form.
    Q,
    /// `√(2‖u‖_p² d^{2/q}(q−1) Σ b_{t,∞})`.
    Max,
    /// `√(4‖u‖_p² (2 log₂ d − 1) Σ b_{t,∞})`; valid when `q = q_opt(d)`.
    LogDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RmVariant {
    Dorm,
    DormPlus,
}

/// Learner whose bound is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CertificateKind {
    RegretMatching { variant: RmVariant, pnorm: PNormConfig, norm: RmNorm },
    ConstantFtrl { lambda: f64 },
    Dub { alpha: f64 },
    AdaHedgeD { alpha: f64 },
}

/// `(a_t, b_t)` for every round of a gradient-space run, ℓ∞ dual norm, simplex
/// diameter.
pub fn ftrl_round_terms(hist: &RunHistory) -> Result<Vec<BoundTerms>> {
    hist.validate()?;
    (1..=hist.horizon())
        .map(|t| {
            let window = window_sum(&hist.gradients, hist.last(t) as isize + 1, t as isize, hist.d);
            ftrl_bound_terms(&hist.hints[t - 1], &window, &hist.gradients[t - 1], DualNorm::Max, SIMPLEX_DIAMETER)
        })
        .collect()
}

/// `b_{t,c}` for every round of a regret-space run. For DORM+ the final round
/// uses the terminal hint `h_{T+1} = r_{last(T+1)+1 : T}`.
pub fn rm_round_terms(hist: &RunHistory, variant: RmVariant, c: f64) -> Result<Vec<f64>> {
    hist.validate()?;
    let horizon = hist.horizon();
    let regrets: Vec<GradientVector> = (1..=horizon).map(|t| hist.regret_vector(t)).collect();
    let rsum = |from: usize, to: usize| window_sum(&regrets, from as isize, to as isize, hist.d);
    let terminal_hint = rsum(hist.last(horizon + 1) + 1, horizon);
    (1..=horizon)
        .map(|t| {
            let hint = &hist.hints[t - 1];
            let window = rsum(hist.last(t) + 1, t);
            let step = match variant {
                RmVariant::Dorm => regrets[t - 1].clone(),
                RmVariant::DormPlus => {
                    let next_hint = if t < horizon { &hist.hints[t] } else { &terminal_hint };
                    &(&rsum(hist.last(t) + 1, hist.last(t + 1)) + next_hint) - hint
                }
            };
            dorm_bound_term(hint, &window, &step, c)
        })
        .collect()
}

/// Right-hand side of the regret bound for competitor `u`.
pub fn regret_certificate(kind: &CertificateKind, hist: &RunHistory, u: &SimplexWeights) -> Result<f64> {
    hist.validate()?;
    check_dim(hist.d, u.dim())?;
    let d = hist.d;
    match *kind {
        CertificateKind::RegretMatching { variant, pnorm, norm } => {
            let u_sq = lp_norm(u.as_slice(), pnorm.p()).powi(2);
            let q = pnorm.q();
            let value = match norm {
                RmNorm::Q => {
                    let total: f64 = rm_round_terms(hist, variant, q)?.iter().sum();
                    (2.0 * u_sq * (q - 1.0) * total).sqrt()
                }
                RmNorm::Max => {
                    let total: f64 = rm_round_terms(hist, variant, f64::INFINITY)?.iter().sum();
                    (2.0 * u_sq * (d as f64).powf(2.0 / q) * (q - 1.0) * total).sqrt()
                }
                RmNorm::LogDim => {
                    let best = q_opt(d)?;
                    if (best - q).abs() > 1e-12 {
                        return Err(Error::InvalidInput(format!(
                            "log-dimension certificate needs q = q_opt(d) = {best}, got {q}"
                        )));
                    }
                    let total: f64 = rm_round_terms(hist, variant, f64::INFINITY)?.iter().sum();
                    (4.0 * u_sq * (2.0 * (d as f64).log2() - 1.0) * total).sqrt()
                }
            };
            Ok(value)
        }
        CertificateKind::ConstantFtrl { lambda } => {
            if !(lambda >= 0.0) {
                return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
            }
            let terms = ftrl_round_terms(hist)?;
            let tail: f64 = terms.iter().map(|t| if lambda > 0.0 { (t.b / lambda).min(t.a) } else { t.a }).sum();
            Ok(lambda * negentropy(u.as_slice()) + tail)
        }
        CertificateKind::Dub { alpha } | CertificateKind::AdaHedgeD { alpha } => {
            check_alpha(alpha)?;
            let terms = ftrl_round_terms(hist)?;
            let a: Vec<f64> = terms.iter().map(|t| t.a).collect();
            let mut window_max = 0.0_f64;
            for t in 1..=hist.horizon() {
                window_max = window_max.max(a[hist.last(t)..t - 1].iter().sum());
            }
            let sq: f64 = terms.iter().map(|t| t.a * t.a + 2.0 * alpha * t.b).sum();
            Ok((negentropy(u.as_slice()) / alpha + 1.0) * (2.0 * window_max + sq.sqrt()))
        }
    }
}

/// Rounds served by copy `k` of an `n`-fold replicated learner, viewed as that
/// copy's own undelayed run.
pub fn copy_history(hist: &RunHistory, copies: usize, k: usize) -> Result<RunHistory> {
    hist.validate()?;
    if copies == 0 || k >= copies {
        return Err(Error::InvalidInput(format!("copy {k} out of range for {copies} copies")));
    }
    let rounds: Vec<usize> = (1..=hist.horizon()).filter(|t| t % copies == k).collect();
    let take = |v: &Vec<GradientVector>| rounds.iter().map(|t| v[t - 1].clone()).collect::<Vec<_>>();
    Ok(RunHistory {
        d: hist.d,
        hint_space: hist.hint_space,
        plays: rounds.iter().map(|t| hist.plays[t - 1].clone()).collect(),
        hints: take(&hist.hints),
        gradients: take(&hist.gradients),
        observable: (0..=rounds.len()).collect(),
        lambdas: rounds.iter().map(|t| hist.lambdas[t - 1]).collect(),
        deltas: Vec::new(),
        losses: rounds.iter().map(|t| hist.losses[t - 1]).collect(),
        expert_losses: rounds.iter().map(|t| hist.expert_losses[t - 1].clone()).collect(),
    })
}

/// Certificate for a replicated learner: the sum of each copy's undelayed
/// certificate, since the regret splits across copies.
pub fn replicated_certificate(
    kind: &CertificateKind,
    hist: &RunHistory,
    copies: usize,
    u: &SimplexWeights,
) -> Result<f64> {
    (0..copies)
        .map(|k| {
            let sub = copy_history(hist, copies, k)?;
            if sub.horizon() == 0 {
                Ok(0.0)
            } else {
                regret_certificate(kind, &sub, u)
            }
        })
        .sum()
}

/// Quantities bounding the hint learner's per-round terms.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HintBoundTerms {
    /// `4(D+1) Σ_{s=t−D}^{t} ‖γ_s‖∞²`.
    pub xi: f64,
    /// `4 ‖γ_{t−D}‖∞ Σ_{s=t−D}^{t} ‖γ_s‖∞`.
    pub zeta: f64,
}

/// `ξ_t, ζ_t` from the sup-norms of the meta-subgradients (1-indexed by round,
/// `γ_s = 0` for `s ≤ 0`).
pub fn hint_bound_terms(gamma_norms: &[f64], delay: usize, t: usize) -> Result<HintBoundTerms> {
    if t == 0 || t > gamma_norms.len() {
        return Err(Error::IncompleteHistory(format!(
            "meta-subgradient of round {t} not available ({} recorded)",
            gamma_norms.len()
        )));
    }
    let from = t as isize - delay as isize;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for s in from..=t as isize {
        let n = one_indexed(gamma_norms, s);
        sum += n;
        sum_sq += n * n;
    }
    Ok(HintBoundTerms { xi: 4.0 * (delay as f64 + 1.0) * sum_sq, zeta: 4.0 * one_indexed(gamma_norms, from) * sum })
}

/// Hint-learner certificate from meta-subgradient norms alone:
/// `√(2 m^{2/q}(q−1) (½ξ_T + Σ_{t<T} min(½ξ_t, ζ_t)))` for a meta-learner over
/// `m` columns with exponent `q` and constant meta-delay `delay`.
pub fn hint_certificate_from_subgradients(gamma_norms: &[f64], delay: usize, m: usize, q: f64) -> Result<f64> {
    let horizon = gamma_norms.len();
    let mut total = 0.0;
    for t in 1..=horizon {
        let terms = hint_bound_terms(gamma_norms, delay, t)?;
        total += if t == horizon { 0.5 * terms.xi } else { (0.5 * terms.xi).min(terms.zeta) };
    }
    Ok((2.0 * (m as f64).powf(2.0 / q) * (q - 1.0) * total).sqrt())
}
