//! Delay bookkeeping: when each gradient becomes observable and the queue that
//! enforces it.
//!
//! Rounds are 1-indexed. `g_t` is observable from round `reveal(t) + 1` on.

use std::collections::VecDeque;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::GradientVector;

/// Reveal times for every round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DelaySchedule {
    /// `g_t` is revealed at the end of round `t + D`.
    Constant(usize),
    /// Entry `t - 1` holds the reveal round of `g_t`; `None` means never
    /// revealed during the run. Rounds past the table are never revealed.
    Explicit(Vec<Option<usize>>),
}

impl DelaySchedule {
    pub fn constant(delay: usize) -> Self {
        Self::Constant(delay)
    }

    /// Validates a reveal table: `reveal(t) ≥ t`, non-decreasing, and once an
    /// entry is `None` every later entry is too. Together these make every
    /// observable set a prefix `g_{1:s}`.
    pub fn explicit(reveal: Vec<Option<usize>>) -> Result<Self> {
        let mut prev: Option<usize> = Some(0);
        for (i, r) in reveal.iter().enumerate() {
            let t = i + 1;
            match (prev, r) {
                (_, Some(r)) if *r < t => {
                    return Err(Error::InvalidInput(format!("round {t} revealed at {r}, before it is played")))
                }
                (None, Some(_)) => {
                    return Err(Error::InvalidInput(format!("round {t} revealed although an earlier round never is")))
                }
                (Some(p), Some(r)) if *r < p => {
                    return Err(Error::InvalidInput(format!(
                        "round {t} revealed at {r}, before round {} (at {p}); feedback must arrive as a prefix",
                        t - 1
                    )))
                }
                _ => {}
            }
            prev = *r;
        }
        Ok(Self::Explicit(reveal))
    }

    /// Reads a `t,reveal_time` CSV. Rows must list rounds `1, 2, ...` in order;
    /// an empty or `never` reveal time marks feedback that never arrives.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut table = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| Error::InvalidInput(format!("schedule row {}: {e}", i + 1)))?;
            let t: usize = row
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidInput(format!("schedule row {}: bad round", i + 1)))?;
            if t != i + 1 {
                return Err(Error::InvalidInput(format!(
                    "schedule row {} lists round {t}; rounds must be consecutive from 1",
                    i + 1
                )));
            }
            let cell = row.get(1).unwrap_or("");
            let reveal =
                if cell.is_empty() || cell.eq_ignore_ascii_case("never") {
                    None
                } else {
                    Some(cell.parse().map_err(|_| {
                        Error::InvalidInput(format!("schedule row {}: bad reveal time {cell:?}", i + 1))
                    })?)
                };
            table.push(reveal);
        }
        Self::explicit(table)
    }

    /// Round at whose end `g_t` becomes observable.
    pub fn reveal(&self, t: usize) -> Option<usize> {
        match self {
            Self::Constant(d) => Some(t + d),
            Self::Explicit(table) => table.get(t.checked_sub(1)?).copied().flatten(),
        }
    }

    /// Number of gradients observable when building the play of round `t`,
    /// i.e. `last(t)` with `none` mapped to 0.
    pub fn observable(&self, t: usize) -> usize {
        match self {
            Self::Constant(d) => t.saturating_sub(d + 1),
            Self::Explicit(table) => table.partition_point(|r| matches!(r, Some(r) if *r < t)),
        }
    }

    /// Largest `s` with `g_{1:s}` observable at play time `t`.
    pub fn last(&self, t: usize) -> Option<usize> {
        match self.observable(t) {
            0 => None,
            s => Some(s),
        }
    }

    /// Smallest round `s` with `last(s) ≥ t`; `None` if `g_t` is never revealed.
    pub fn first(&self, t: usize) -> Option<usize> {
        self.reveal(t).map(|r| r + 1)
    }

    /// Largest `t - last(t) - 1` over `t ∈ [1, horizon]`; equals `D` for a
    /// constant schedule once `horizon > D`.
    pub fn max_delay(&self, horizon: usize) -> usize {
        match self {
            Self::Constant(d) => (*d).min(horizon.saturating_sub(1)),
            Self::Explicit(_) => (1..=horizon).map(|t| t - self.observable(t) - 1).max().unwrap_or(0),
        }
    }
}

/// Holds played-but-unrevealed gradients and releases them at their reveal time.
#[derive(Debug, Clone)]
pub struct FeedbackQueue {
    schedule: DelaySchedule,
    pending: VecDeque<(usize, GradientVector)>,
    pushed: usize,
    delivered: usize,
    revealed_prefix: GradientVector,
}

impl FeedbackQueue {
    pub fn new(schedule: DelaySchedule, d: usize) -> Self {
        Self { schedule, pending: VecDeque::new(), pushed: 0, delivered: 0, revealed_prefix: GradientVector::zeros(d) }
    }

    pub fn schedule(&self) -> &DelaySchedule {
        &self.schedule
    }

    /// Enqueue `g_t`; rounds must be pushed consecutively.
    pub fn push(&mut self, round: usize, g: GradientVector) -> Result<()> {
        check_dim(self.revealed_prefix.dim(), g.dim())?;
        if round != self.pushed + 1 {
            return Err(Error::Protocol(format!("expected gradient of round {}, got round {round}", self.pushed + 1)));
        }
        self.pushed = round;
        self.pending.push_back((round, g));
        Ok(())
    }

    /// Gradients due at the end of round `t`, in round order.
    pub fn release(&mut self, t: usize) -> Vec<(usize, GradientVector)> {
        let mut out = Vec::new();
        while let Some((s, _)) = self.pending.front() {
            match self.schedule.reveal(*s) {
                Some(r) if r <= t => {
                    let item = self.pending.pop_front().expect("front exists");
                    self.deliver(&item.1);
                    out.push(item);
                }
                _ => break,
            }
        }
        out
    }

    /// Everything still pending; used for end-of-run evaluation.
    pub fn flush(&mut self) -> Vec<(usize, GradientVector)> {
        let out: Vec<_> = self.pending.drain(..).collect();
        for (_, g) in &out {
            self.delivered += 1;
            self.revealed_prefix += g;
        }
        out
    }

    fn deliver(&mut self, g: &GradientVector) {
        self.delivered += 1;
        self.revealed_prefix += g;
    }

    pub fn delivered(&self) -> usize {
        self.delivered
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }

    /// `g_{1:delivered}`.
    pub fn revealed_prefix(&self) -> &GradientVector {
        &self.revealed_prefix
    }
}
