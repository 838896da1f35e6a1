//! Hints: fixed optimism strategies, and a meta-learner that learns which
//! combination of candidate hints to trust.

use serde::{Deserialize, Serialize};

use crate::bounds::{hint_certificate_from_subgradients, regret_certificate, CertificateKind, RmNorm, RmVariant};
use crate::closed_forms::{pnorm_subgradient, PNormConfig};
use crate::error::{check_dim, Error, Result};
use crate::omd::{RegretMatcher, RmConfig};
use crate::protocol::{DelayedLearner, HintProvider, HintSpace, Observed, RunHistory};
use crate::vector::{lp_norm, GradientVector, SimplexWeights};

/// Per-round guess `g̃_s` for each gradient still missing at play time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintStrategy {
    /// Every missing gradient is guessed as the most recently revealed one.
    RecentG,
    /// Missing `g_s` is guessed as the gradient one window length earlier.
    PrevG,
    /// `(D+1)/(t−D−1) · g_{1:t−D−1}` per missing round.
    MeanG,
    /// The plain running mean `g_{1:t−D−1}/(t−D−1)` per missing round.
    MeanGPlain,
    /// No optimism.
    None,
}

impl HintStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            Self::RecentG => "recent_g",
            Self::PrevG => "prev_g",
            Self::MeanG => "mean_g",
            Self::MeanGPlain => "mean_g_plain",
            Self::None => "none",
        }
    }

    fn pseudo_gradient(&self, seen: &Observed, t: usize, s: usize) -> GradientVector {
        let d = seen.dim();
        let last = seen.last();
        let width = t - last;
        match self {
            Self::None => GradientVector::zeros(d),
            Self::RecentG if last >= 1 => seen.revealed()[last - 1].clone(),
            Self::PrevG if s > width => seen.revealed()[s - width - 1].clone(),
            Self::MeanG if last >= 1 => seen.gradient_sum(1, last as isize).scaled(width as f64 / last as f64),
            Self::MeanGPlain if last >= 1 => seen.gradient_sum(1, last as isize).scaled(1.0 / last as f64),
            _ => GradientVector::zeros(d),
        }
    }
}

/// Hint for round `t` from a fixed strategy.
///
/// In gradient space the hint guesses `Σ_{s=last(t)+1}^{t} g_s`. In regret space
/// it guesses the matching regret sum, with `w_{t−1}` standing in for the
/// not-yet-chosen `w_t` (and `w_0 = 0`).
pub fn constant_hint(strategy: HintStrategy, seen: &Observed, t: usize, space: HintSpace) -> Result<GradientVector> {
    if t == 0 || t > seen.plays().len() + 1 || seen.last() >= t {
        return Err(Error::InvalidInput(format!(
            "hint requested for round {t} with {} plays and {} revealed gradients",
            seen.plays().len(),
            seen.last()
        )));
    }
    let d = seen.dim();
    let mut hint = GradientVector::zeros(d);
    for s in seen.last() + 1..=t {
        let guess = strategy.pseudo_gradient(seen, t, s);
        match space {
            HintSpace::Gradient => hint += &guess,
            HintSpace::Regret => {
                let proxy = if s < t { s } else { t - 1 };
                let mixed = if proxy >= 1 { guess.dot(seen.plays()[proxy - 1].as_slice()) } else { 0.0 };
                let regret: Vec<f64> = guess.as_slice().iter().map(|x| mixed - x).collect();
                hint += &GradientVector::from_raw(regret);
            }
        }
    }
    Ok(hint)
}

/// [`constant_hint`] as a [`HintProvider`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantHints {
    pub strategy: HintStrategy,
    pub space: HintSpace,
}

impl HintProvider for ConstantHints {
    fn hint(&mut self, t: usize, seen: &Observed) -> Result<GradientVector> {
        constant_hint(self.strategy, seen, t, self.space)
    }
}

/// Fixed-strategy hints for the replication baseline: each copy is hinted as
/// an undelayed learner from its own rounds only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplicatedHints {
    pub strategy: HintStrategy,
    pub space: HintSpace,
    pub copies: usize,
}

impl HintProvider for ReplicatedHints {
    fn hint(&mut self, t: usize, seen: &Observed) -> Result<GradientVector> {
        let n = self.copies.max(1);
        let mut local = Observed::new(seen.dim());
        let mut u = if t.is_multiple_of(n) { n } else { t % n };
        while u < t {
            local.push_round(seen.hints()[u - 1].clone(), seen.plays()[u - 1].clone());
            if u <= seen.last() {
                local.push_revealed(seen.revealed()[u - 1].clone());
            }
            u += n;
        }
        let local_t = local.plays().len() + 1;
        constant_hint(self.strategy, &local, local_t, self.space)
    }
}

/// Candidate hints side by side, one column per hinter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintMatrix {
    columns: Vec<GradientVector>,
}

impl HintMatrix {
    pub fn new(columns: Vec<GradientVector>) -> Result<Self> {
        let first = columns.first().ok_or_else(|| Error::InvalidInput("hint matrix needs a column".into()))?;
        let d = first.dim();
        for c in &columns {
            check_dim(d, c.dim())?;
        }
        Ok(Self { columns })
    }

    pub fn rows(&self) -> usize {
        self.columns[0].dim()
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[GradientVector] {
        &self.columns
    }

    /// `Hω`.
    pub fn combine(&self, omega: &[f64]) -> Result<GradientVector> {
        check_dim(self.cols(), omega.len())?;
        let mut out = vec![0.0; self.rows()];
        for (c, w) in self.columns.iter().zip(omega) {
            for (o, x) in out.iter_mut().zip(c.as_slice()) {
                *o += w * x;
            }
        }
        Ok(GradientVector::from_raw(out))
    }

    /// `Hᵀv`.
    pub fn transpose_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.rows(), v.len())?;
        Ok(self.columns.iter().map(|c| c.dot(v)).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.columns.iter().map(|c| c.inf_norm()).fold(0.0, f64::max)
    }
}

fn residual(omega: &[f64], h: &HintMatrix, target: &GradientVector) -> Result<GradientVector> {
    check_dim(h.rows(), target.dim())?;
    Ok(&h.combine(omega)? - target)
}

/// `scale · ‖Hω − target‖_q`, with `q = ∞` allowed.
pub fn hinting_loss(omega: &[f64], h: &HintMatrix, target: &GradientVector, scale: f64, q: f64) -> Result<f64> {
    check_scale(scale)?;
    Ok(scale * lp_norm(residual(omega, h, target)?.as_slice(), q))
}

/// Subgradient of [`hinting_loss`] in `ω`: `scale · Hᵀ ∂‖μ‖_q` at `μ = Hω − target`,
/// zero when the residual vanishes.
pub fn hinting_loss_subgradient(
    omega: &[f64],
    h: &HintMatrix,
    target: &GradientVector,
    scale: f64,
    q: f64,
) -> Result<Vec<f64>> {
    check_scale(scale)?;
    let mu = residual(omega, h, target)?;
    let dual = pnorm_subgradient(mu.as_slice(), q);
    Ok(h.transpose_apply(&dual)?.into_iter().map(|x| scale * x).collect())
}

fn check_scale(scale: f64) -> Result<()> {
    if scale >= 0.0 && scale.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("loss scale must be finite and nonnegative, got {scale}")))
    }
}

/// How the base learner turns a hint into regret, which fixes the hinting loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseAdapter {
    /// DORM+ base with exponent `q`: target `Σ r_s`, scale `‖drift‖_q`.
    RegretMatching { q: f64 },
    /// Entropic FTRL base: target `Σ g_s`, scale `‖g_t‖∞`, max norm.
    Ftrl,
}

impl BaseAdapter {
    pub fn space(&self) -> HintSpace {
        match self {
            Self::RegretMatching { .. } => HintSpace::Regret,
            Self::Ftrl => HintSpace::Gradient,
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Self::RegretMatching { q } => *q,
            Self::Ftrl => f64::INFINITY,
        }
    }
}

/// Learns a convex combination of candidate hinters with DORM+ (`q = 2`, no
/// meta-hints). Meta-feedback for round `s` is formed as soon as everything
/// the hinting loss needs is observable.
pub struct AdaptiveHinter {
    columns: Vec<Box<dyn HintProvider>>,
    base: BaseAdapter,
    meta: RegretMatcher,
    matrices: Vec<HintMatrix>,
    weights: Vec<SimplexWeights>,
    meta_observable: Vec<usize>,
    final_meta_observable: Option<usize>,
    subgradients: Vec<GradientVector>,
    losses: Vec<f64>,
    column_losses: Vec<Vec<f64>>,
}

impl AdaptiveHinter {
    pub fn new(columns: Vec<Box<dyn HintProvider>>, base: BaseAdapter) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidInput("need at least one candidate hinter".into()));
        }
        let meta = RegretMatcher::new(RmConfig::new(columns.len(), 2.0, RmVariant::DormPlus)?)?;
        Ok(Self {
            columns,
            base,
            meta,
            matrices: Vec::new(),
            weights: Vec::new(),
            meta_observable: Vec::new(),
            final_meta_observable: None,
            subgradients: Vec::new(),
            losses: Vec::new(),
            column_losses: Vec::new(),
        })
    }

    /// Builds one column per fixed strategy in the base learner's hint space.
    pub fn from_strategies(strategies: &[HintStrategy], base: BaseAdapter) -> Result<Self> {
        let space = base.space();
        let columns = strategies
            .iter()
            .map(|&strategy| Box::new(ConstantHints { strategy, space }) as Box<dyn HintProvider>)
            .collect();
        Self::new(columns, base)
    }

    pub fn candidates(&self) -> usize {
        self.columns.len()
    }

    /// Meta-plays `ω_1, …`.
    pub fn weights(&self) -> &[SimplexWeights] {
        &self.weights
    }

    pub fn matrices(&self) -> &[HintMatrix] {
        &self.matrices
    }

    /// Meta-subgradients `γ_1, …` formed so far.
    pub fn subgradients(&self) -> &[GradientVector] {
        &self.subgradients
    }

    /// `Σ_t l_t(ω_t) − l_t(e_j)` over rounds with meta-feedback.
    pub fn hint_regret(&self, j: usize) -> f64 {
        self.losses.iter().zip(&self.column_losses).map(|(l, c)| l - c[j]).sum()
    }

    /// Largest gap between a meta-play and the meta-feedback it could use.
    pub fn meta_delay(&self) -> usize {
        self.meta_observable.iter().enumerate().map(|(i, &o)| i - o).max().unwrap_or(0)
    }

    /// The meta-problem as a linear-loss run, for certification.
    pub fn meta_history(&self) -> Result<RunHistory> {
        let horizon = self.weights.len();
        let final_obs = self
            .final_meta_observable
            .ok_or_else(|| Error::IncompleteHistory("hint learner has not been finished".into()))?;
        if self.subgradients.len() != horizon {
            return Err(Error::IncompleteHistory(format!(
                "{} meta-subgradients for {horizon} rounds",
                self.subgradients.len()
            )));
        }
        let m = self.columns.len();
        let mut observable = self.meta_observable.clone();
        observable.push(final_obs);
        Ok(RunHistory {
            d: m,
            hint_space: HintSpace::Regret,
            plays: self.weights.clone(),
            hints: vec![GradientVector::zeros(m); horizon],
            gradients: self.subgradients.clone(),
            observable,
            lambdas: vec![1.0; horizon],
            deltas: Vec::new(),
            losses: self.subgradients.iter().zip(&self.weights).map(|(g, w)| g.dot(w.as_slice())).collect(),
            expert_losses: self.subgradients.iter().map(|g| g.as_slice().to_vec()).collect(),
        })
    }

    /// Certificate on the linearized meta-regret against any fixed column,
    /// from the meta-run's own bound terms.
    pub fn certificate(&self) -> Result<f64> {
        let hist = self.meta_history()?;
        let kind = CertificateKind::RegretMatching {
            variant: RmVariant::DormPlus,
            pnorm: PNormConfig::new(2.0)?,
            norm: RmNorm::Max,
        };
        regret_certificate(&kind, &hist, &SimplexWeights::vertex(hist.d, 0))
    }

    /// Looser certificate from meta-subgradient norms only.
    pub fn subgradient_certificate(&self) -> Result<f64> {
        let norms: Vec<f64> = self.subgradients.iter().map(|g| g.inf_norm()).collect();
        hint_certificate_from_subgradients(&norms, self.meta_delay(), self.columns.len(), 2.0)
    }

    fn feed(&mut self, seen: &Observed, terminal: Option<usize>) -> Result<()> {
        let played = seen.plays().len();
        loop {
            let s = self.meta.received() + 1;
            if s > self.matrices.len() || s > seen.last() {
                return Ok(());
            }
            let last_s = seen.observable_at_play()[s - 1];
            let (target, scale) = match self.base {
                BaseAdapter::Ftrl => {
                    let target = seen.gradient_sum(last_s as isize + 1, s as isize);
                    (target, seen.revealed()[s - 1].inf_norm())
                }
                BaseAdapter::RegretMatching { q } => {
                    let (next_hint, last_next) = if s < played {
                        (seen.hints()[s].clone(), seen.observable_at_play()[s])
                    } else {
                        match terminal {
                            Some(final_obs) if s == played => {
                                (seen.regret_sum(final_obs as isize + 1, played as isize)?, final_obs)
                            }
                            _ => return Ok(()),
                        }
                    };
                    let target = seen.regret_sum(last_s as isize + 1, s as isize)?;
                    let block = seen.regret_sum(last_s as isize + 1, last_next as isize)?;
                    let drift = &(&block + &next_hint) - &seen.hints()[s - 1];
                    (target, drift.norm(q))
                }
            };
            let q = self.base.norm();
            let h = &self.matrices[s - 1];
            let omega = self.weights[s - 1].as_slice();
            let gamma = hinting_loss_subgradient(omega, h, &target, scale, q)?;
            self.losses.push(hinting_loss(omega, h, &target, scale, q)?);
            let m = self.columns.len();
            let per_column = (0..m)
                .map(|j| hinting_loss(SimplexWeights::vertex(m, j).as_slice(), h, &target, scale, q))
                .collect::<Result<Vec<_>>>()?;
            self.column_losses.push(per_column);
            let gamma = GradientVector::new(gamma)?;
            self.meta.receive(s, &gamma)?;
            self.subgradients.push(gamma);
        }
    }
}

impl HintProvider for AdaptiveHinter {
    fn hint(&mut self, t: usize, seen: &Observed) -> Result<GradientVector> {
        if t != self.matrices.len() + 1 {
            return Err(Error::Protocol(format!("hint for round {t} requested after {} rounds", self.matrices.len())));
        }
        let columns = self.columns.iter_mut().map(|c| c.hint(t, seen)).collect::<Result<Vec<_>>>()?;
        let h = HintMatrix::new(columns)?;
        check_dim(seen.dim(), h.rows())?;
        self.meta_observable.push(self.meta.received());
        let omega = self.meta.play(&GradientVector::zeros(self.columns.len()))?;
        let out = h.combine(omega.as_slice())?;
        self.matrices.push(h);
        self.weights.push(omega);
        Ok(out)
    }

    fn end_round(&mut self, t: usize, seen: &Observed) -> Result<()> {
        for c in &mut self.columns {
            c.end_round(t, seen)?;
        }
        self.feed(seen, None)
    }

    fn finish(&mut self, seen: &Observed, final_observable: usize) -> Result<()> {
        for c in &mut self.columns {
            c.finish(seen, final_observable)?;
        }
        self.final_meta_observable = Some(self.meta.received());
        self.feed(seen, Some(final_observable))
    }
}
