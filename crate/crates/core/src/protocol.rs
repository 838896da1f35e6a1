//! The delayed-feedback protocol: learners, hint providers, environments and
//! the loop that connects them.
//!
//! Round `t`: a hint `h_t` is built from what is observable, the learner plays
//! `w_t`, the environment answers with a loss and `g_t`, and the queue hands
//! out every gradient whose reveal time is `t`. After the last round all
//! pending feedback is released so that every round can be evaluated.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedule::{DelaySchedule, FeedbackQueue};
use crate::vector::{instantaneous_regret, window_sum, GradientVector, SimplexWeights};

/// Whether a learner's hints guess gradients or instantaneous regrets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintSpace {
    Gradient,
    Regret,
}

/// An online learner over the simplex that tolerates delayed feedback.
///
/// `play` and `receive` may interleave arbitrarily as long as feedback arrives
/// in round order and only for rounds already played.
pub trait DelayedLearner {
    fn dim(&self) -> usize;
    fn hint_space(&self) -> HintSpace;
    fn play(&mut self, hint: &GradientVector) -> Result<SimplexWeights>;
    fn receive(&mut self, round: usize, g: &GradientVector) -> Result<()>;
    /// Regularization weight behind the most recent play.
    fn current_lambda(&self) -> f64;
    /// `δ_t` for every round whose feedback has arrived; empty for learners
    /// that do not tune on it.
    fn deltas(&self) -> &[f64] {
        &[]
    }
}

impl<L: DelayedLearner + ?Sized> DelayedLearner for Box<L> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn hint_space(&self) -> HintSpace {
        (**self).hint_space()
    }
    fn play(&mut self, hint: &GradientVector) -> Result<SimplexWeights> {
        (**self).play(hint)
    }
    fn receive(&mut self, round: usize, g: &GradientVector) -> Result<()> {
        (**self).receive(round, g)
    }
    fn current_lambda(&self) -> f64 {
        (**self).current_lambda()
    }
    fn deltas(&self) -> &[f64] {
        (**self).deltas()
    }
}

/// Everything a hint may depend on: revealed gradients, past plays and hints.
#[derive(Debug, Clone)]
pub struct Observed {
    d: usize,
    revealed: Vec<GradientVector>,
    plays: Vec<SimplexWeights>,
    hints: Vec<GradientVector>,
    observable: Vec<usize>,
}

impl Observed {
    pub fn new(d: usize) -> Self {
        Self { d, revealed: Vec::new(), plays: Vec::new(), hints: Vec::new(), observable: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `g_1, …, g_{last}`.
    pub fn revealed(&self) -> &[GradientVector] {
        &self.revealed
    }

    /// Number of revealed gradients.
    pub fn last(&self) -> usize {
        self.revealed.len()
    }

    /// Plays `w_1, …` made so far.
    pub fn plays(&self) -> &[SimplexWeights] {
        &self.plays
    }

    /// Hints `h_1, …` passed to the learner so far.
    pub fn hints(&self) -> &[GradientVector] {
        &self.hints
    }

    /// `last(s)` for every played round `s`.
    pub fn observable_at_play(&self) -> &[usize] {
        &self.observable
    }

    /// `r_s = 1⟨g_s, w_s⟩ − g_s` for a revealed round `s`.
    pub fn regret(&self, s: usize) -> Result<GradientVector> {
        let g = self
            .revealed
            .get(s.wrapping_sub(1))
            .ok_or_else(|| Error::Protocol(format!("regret of round {s} requested before its feedback")))?;
        instantaneous_regret(g, &self.plays[s - 1])
    }

    /// `Σ_{s=from}^{to} r_s` over revealed rounds, clipped at round 1.
    pub fn regret_sum(&self, from: isize, to: isize) -> Result<GradientVector> {
        let mut acc = GradientVector::zeros(self.d);
        for s in from.max(1)..=to {
            acc += &self.regret(s as usize)?;
        }
        Ok(acc)
    }

    pub fn gradient_sum(&self, from: isize, to: isize) -> GradientVector {
        window_sum(&self.revealed, from, to, self.d)
    }

    pub fn push_revealed(&mut self, g: GradientVector) {
        self.revealed.push(g);
    }

    pub fn push_round(&mut self, hint: GradientVector, play: SimplexWeights) {
        self.observable.push(self.revealed.len());
        self.hints.push(hint);
        self.plays.push(play);
    }
}

/// Source of the hint `h_t`.
pub trait HintProvider {
    /// Hint for round `t = seen.plays().len() + 1`.
    fn hint(&mut self, t: usize, seen: &Observed) -> Result<GradientVector>;

    /// Called after round `t`'s due feedback has been revealed.
    fn end_round(&mut self, _t: usize, _seen: &Observed) -> Result<()> {
        Ok(())
    }

    /// Called once all feedback has been released after the last round.
    /// `final_observable` is `last(T+1)` under the schedule.
    fn finish(&mut self, _seen: &Observed, _final_observable: usize) -> Result<()> {
        Ok(())
    }
}

impl<H: HintProvider + ?Sized> HintProvider for Box<H> {
    fn hint(&mut self, t: usize, seen: &Observed) -> Result<GradientVector> {
        (**self).hint(t, seen)
    }
    fn end_round(&mut self, t: usize, seen: &Observed) -> Result<()> {
        (**self).end_round(t, seen)
    }
    fn finish(&mut self, seen: &Observed, final_observable: usize) -> Result<()> {
        (**self).finish(seen, final_observable)
    }
}

/// Hints from a closure of `(t, observed)`. Closures may capture the loss
/// stream, which is how clairvoyant hints are built in experiments.
pub struct FnHints<F>(pub F);

impl<F> HintProvider for FnHints<F>
where
    F: FnMut(usize, &Observed) -> GradientVector,
{
    fn hint(&mut self, t: usize, seen: &Observed) -> Result<GradientVector> {
        Ok((self.0)(t, seen))
    }
}

/// What the environment reports for a play.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: GradientVector,
    /// Loss each expert (simplex vertex) would have suffered this round.
    pub expert_losses: Vec<f64>,
}

pub trait Environment {
    fn dim(&self) -> usize;
    fn evaluate(&mut self, t: usize, w: &SimplexWeights) -> Result<Evaluation>;
}

/// Full record of a finished run, including feedback revealed only after the
/// last round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    pub d: usize,
    pub hint_space: HintSpace,
    pub plays: Vec<SimplexWeights>,
    pub hints: Vec<GradientVector>,
    pub gradients: Vec<GradientVector>,
    /// `last(t)` for `t = 1, …, T + 1`.
    pub observable: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub losses: Vec<f64>,
    pub expert_losses: Vec<Vec<f64>>,
}

impl RunHistory {
    pub fn horizon(&self) -> usize {
        self.plays.len()
    }

    /// Checks that all per-round records line up.
    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        let ok = self.hints.len() == t
            && self.gradients.len() == t
            && self.observable.len() == t + 1
            && self.losses.len() == t
            && self.expert_losses.len() == t;
        if ok {
            Ok(())
        } else {
            Err(Error::IncompleteHistory(format!(
                "{} plays, {} hints, {} gradients, {} observable entries",
                t,
                self.hints.len(),
                self.gradients.len(),
                self.observable.len()
            )))
        }
    }

    /// `last(t)` for `t ∈ [1, T+1]`.
    pub fn last(&self, t: usize) -> usize {
        self.observable[t - 1]
    }

    pub fn regret_vector(&self, t: usize) -> GradientVector {
        instantaneous_regret(&self.gradients[t - 1], &self.plays[t - 1]).expect("history dimensions validated")
    }

    /// Linearized regret `Σ_t ⟨g_t, w_t − u⟩`.
    pub fn linearized_regret(&self, u: &SimplexWeights) -> Result<f64> {
        check_dim(self.d, u.dim())?;
        Ok(self.gradients.iter().zip(&self.plays).map(|(g, w)| g.dot(w.as_slice()) - g.dot(u.as_slice())).sum())
    }

    /// Regret in true losses against expert `i`.
    pub fn loss_regret(&self, i: usize) -> f64 {
        self.losses.iter().zip(&self.expert_losses).map(|(l, e)| l - e[i]).sum()
    }
}

/// Runs `horizon` rounds of the delayed protocol.
pub fn run_protocol<L, E, H>(
    learner: &mut L,
    env: &mut E,
    schedule: &DelaySchedule,
    horizon: usize,
    hints: &mut H,
) -> Result<RunHistory>
where
    L: DelayedLearner + ?Sized,
    E: Environment + ?Sized,
    H: HintProvider + ?Sized,
{
    let d = learner.dim();
    check_dim(d, env.dim())?;
    let mut queue = FeedbackQueue::new(schedule.clone(), d);
    let mut seen = Observed::new(d);
    let mut hist = RunHistory {
        d,
        hint_space: learner.hint_space(),
        plays: Vec::with_capacity(horizon),
        hints: Vec::with_capacity(horizon),
        gradients: Vec::with_capacity(horizon),
        observable: Vec::with_capacity(horizon + 1),
        lambdas: Vec::with_capacity(horizon),
        deltas: Vec::new(),
        losses: Vec::with_capacity(horizon),
        expert_losses: Vec::with_capacity(horizon),
    };

    for t in 1..=horizon {
        debug_assert_eq!(seen.last(), schedule.observable(t));
        hist.observable.push(seen.last());
        let h = hints.hint(t, &seen)?;
        check_dim(d, h.dim())?;
        let w = learner.play(&h)?;
        hist.lambdas.push(learner.current_lambda());
        let eval = env.evaluate(t, &w)?;
        check_dim(d, eval.gradient.dim())?;
        check_dim(d, eval.expert_losses.len())?;
        hist.losses.push(eval.loss);
        hist.expert_losses.push(eval.expert_losses);
        hist.gradients.push(eval.gradient.clone());
        hist.plays.push(w.clone());
        hist.hints.push(h.clone());
        seen.push_round(h, w);
        queue.push(t, eval.gradient)?;
        for (s, g) in queue.release(t) {
            learner.receive(s, &g)?;
            seen.push_revealed(g);
        }
        hints.end_round(t, &seen)?;
    }

    let final_observable = seen.last();
    hist.observable.push(final_observable);
    for (s, g) in queue.flush() {
        learner.receive(s, &g)?;
        seen.push_revealed(g);
    }
    hints.finish(&seen, final_observable)?;
    hist.deltas = learner.deltas().to_vec();
    Ok(hist)
}
