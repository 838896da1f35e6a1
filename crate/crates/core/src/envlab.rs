//! Synthetic environments: linear losses from seeded generators, and an RMSE
//! ensembling task where experts are forecast models.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::protocol::{Environment, Evaluation};
use crate::vector::{GradientVector, SimplexWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// `g_t = μ + σ ε_t`.
    IidGaussian { mean: Vec<f64> },
    /// A random expert is best on each segment; the others pay `gap` more.
    Switching { segment: usize, gap: f64 },
    /// Expert 0 is always best by `gap`.
    FixedBest { gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStreamSpec {
    pub d: usize,
    pub horizon: usize,
    pub generator: Generator,
    /// Standard deviation of the Gaussian noise added to every coordinate.
    #[serde(default)]
    pub sigma: f64,
    pub seed: u64,
}

impl LinearStreamSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.horizon == 0 {
            return Err(Error::InvalidInput("stream needs d >= 1 and at least one round".into()));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        match &self.generator {
            Generator::IidGaussian { mean } => check_dim(self.d, mean.len()),
            Generator::Switching { segment, gap } => {
                if *segment == 0 || !(*gap >= 0.0) {
                    Err(Error::InvalidInput("switching needs segment >= 1 and gap >= 0".into()))
                } else {
                    Ok(())
                }
            }
            Generator::FixedBest { gap } if !(*gap >= 0.0) => {
                Err(Error::InvalidInput(format!("gap must be nonnegative, got {gap}")))
            }
            Generator::FixedBest { .. } => Ok(()),
        }
    }
}

pub(crate) fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and nonnegative")
}

/// Deterministic stream of `horizon` gradients for the given seed.
pub fn generate_stream(spec: &LinearStreamSpec) -> Result<Vec<GradientVector>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = normal(spec.sigma);
    let d = spec.d;
    let mut best = 0;
    let mut out = Vec::with_capacity(spec.horizon);
    for t in 0..spec.horizon {
        let base: Vec<f64> = match &spec.generator {
            Generator::IidGaussian { mean } => mean.clone(),
            Generator::Switching { segment, gap } => {
                if t % segment == 0 {
                    best = rng.gen_range(0..d);
                }
                (0..d).map(|j| if j == best { 0.0 } else { *gap }).collect()
            }
            Generator::FixedBest { gap } => (0..d).map(|j| if j == 0 { 0.0 } else { *gap }).collect(),
        };
        let g = if spec.sigma > 0.0 { base.into_iter().map(|b| b + noise.sample(&mut rng)).collect() } else { base };
        out.push(GradientVector::new(g)?);
    }
    Ok(out)
}

/// Writes a stream as CSV with header `t,coord_0..coord_{d-1}`.
pub fn write_stream_csv<W: Write>(stream: &[GradientVector], writer: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidInput(format!("writing stream: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    let d = stream.first().map_or(0, |g| g.dim());
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|j| format!("coord_{j}")));
    w.write_record(&header).map_err(io)?;
    for (t, g) in stream.iter().enumerate() {
        let mut row = vec![(t + 1).to_string()];
        row.extend(g.as_slice().iter().map(|x| format!("{x:?}")));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("writing stream: {e}")))
}

/// Reads a stream written by [`write_stream_csv`].
pub fn read_stream_csv<R: Read>(reader: R) -> Result<Vec<GradientVector>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| Error::InvalidInput(format!("stream row {}: {e}", i + 1)))?;
        let values = row
            .iter()
            .skip(1)
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidInput(format!("stream row {}: {e}", i + 1)))?;
        out.push(GradientVector::new(values)?);
    }
    Ok(out)
}

/// Linear losses `⟨g_t, w⟩` from a precomputed stream.
#[derive(Debug, Clone)]
pub struct LinearEnvironment {
    stream: Vec<GradientVector>,
}

impl LinearEnvironment {
    pub fn new(stream: Vec<GradientVector>) -> Result<Self> {
        let d = stream.first().ok_or_else(|| Error::InvalidInput("empty stream".into()))?.dim();
        for g in &stream {
            check_dim(d, g.dim())?;
        }
        Ok(Self { stream })
    }

    pub fn stream(&self) -> &[GradientVector] {
        &self.stream
    }
}

impl Environment for LinearEnvironment {
    fn dim(&self) -> usize {
        self.stream[0].dim()
    }

    fn evaluate(&mut self, t: usize, w: &SimplexWeights) -> Result<Evaluation> {
        let g = self
            .stream
            .get(t.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidInput(format!("stream has no round {t}")))?;
        check_dim(g.dim(), w.dim())?;
        Ok(Evaluation { loss: g.dot(w.as_slice()), gradient: g.clone(), expert_losses: g.as_slice().to_vec() })
    }
}

/// Row-major `G × d` matrix of model forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ForecastMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("forecast matrix needs at least one row and column".into()));
        }
        check_dim(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `Xw`.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| crate::vector::dot(self.row(i), w)).collect()
    }

    /// Largest singular value, by power iteration on `XᵀX`.
    pub fn operator_norm(&self) -> f64 {
        let mut v = vec![1.0 / (self.cols as f64).sqrt(); self.cols];
        let mut sigma = 0.0;
        for _ in 0..500 {
            let xv = self.apply(&v);
            let mut next = vec![0.0; self.cols];
            for (i, r) in xv.iter().enumerate() {
                for (n, x) in next.iter_mut().zip(self.row(i)) {
                    *n += x * r;
                }
            }
            let norm = crate::vector::lp_norm(&next, 2.0);
            if norm == 0.0 {
                return 0.0;
            }
            sigma = norm.sqrt();
            v = next.into_iter().map(|x| x / norm).collect();
        }
        sigma
    }
}

/// RMSE of the ensemble forecast `Xw` against `y`, with a subgradient in `w`.
pub fn rmse_loss_and_subgradient(x: &ForecastMatrix, y: &[f64], w: &SimplexWeights) -> Result<(f64, GradientVector)> {
    check_dim(x.rows(), y.len())?;
    check_dim(x.cols(), w.dim())?;
    let pred = x.apply(w.as_slice());
    let resid: Vec<f64> = pred.iter().zip(y).map(|(p, t)| p - t).collect();
    let norm = crate::vector::lp_norm(&resid, 2.0);
    let root_g = (x.rows() as f64).sqrt();
    let loss = norm / root_g;
    if norm == 0.0 {
        return Ok((0.0, GradientVector::zeros(x.cols())));
    }
    let mut g = vec![0.0; x.cols()];
    for (i, r) in resid.iter().enumerate() {
        for (gj, xij) in g.iter_mut().zip(x.row(i)) {
            *gj += xij * r;
        }
    }
    let scale = root_g * norm;
    Ok((loss, GradientVector::new(g.into_iter().map(|v| v / scale).collect())?))
}

/// Bias and noise level of one forecast model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSkill {
    pub bias: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseEnvSpec {
    pub gridpoints: usize,
    pub horizon: usize,
    pub models: Vec<ModelSkill>,
    /// Round-to-round correlation of each model's error at a gridpoint.
    #[serde(default)]
    pub persistence: f64,
    pub seed: u64,
}

impl RmseEnvSpec {
    pub const DEFAULT_PERSISTENCE: f64 = 0.9;

    /// One sharp unbiased model, `d − 2` noisier alternates whose biases
    /// alternate in sign, and one strongly biased model.
    pub fn dominant_profile(d: usize) -> Vec<ModelSkill> {
        (0..d)
            .map(|j| match j {
                0 => ModelSkill { bias: 0.0, noise: 0.6 },
                j if j + 1 == d && d > 2 => ModelSkill { bias: 1.5, noise: 1.2 },
                j => ModelSkill { bias: if j % 2 == 1 { 0.5 } else { -0.5 }, noise: 0.9 },
            })
            .collect()
    }

    pub fn d(&self) -> usize {
        self.models.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gridpoints == 0 || self.horizon == 0 || self.models.is_empty() {
            return Err(Error::InvalidInput("RMSE environment needs gridpoints, rounds and models".into()));
        }
        if self.models.iter().any(|m| !(m.noise >= 0.0 && m.noise.is_finite() && m.bias.is_finite())) {
            return Err(Error::InvalidInput("model noise must be finite and nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.persistence) {
            return Err(Error::InvalidInput(format!("persistence must lie in [0, 1), got {}", self.persistence)));
        }
        Ok(())
    }
}

/// One round of the ensembling task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRound {
    pub forecasts: ForecastMatrix,
    pub truth: Vec<f64>,
}

pub fn generate_rmse_rounds(spec: &RmseEnvSpec) -> Result<Vec<RmseRound>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let std = normal(1.0);
    let d = spec.d();
    let rho = spec.persistence;
    let fresh = (1.0 - rho * rho).sqrt();
    // Standardized AR(1) error per (gridpoint, model), stationary from round 1.
    let mut errors: Vec<f64> = (0..spec.gridpoints * d).map(|_| std.sample(&mut rng)).collect();
    (0..spec.horizon)
        .map(|t| {
            if t > 0 {
                for e in errors.iter_mut() {
                    *e = rho * *e + fresh * std.sample(&mut rng);
                }
            }
            let truth: Vec<f64> = (0..spec.gridpoints).map(|_| std.sample(&mut rng)).collect();
            let mut data = Vec::with_capacity(spec.gridpoints * d);
            for (i, y) in truth.iter().enumerate() {
                for (j, m) in spec.models.iter().enumerate() {
                    data.push(y + m.bias + m.noise * errors[i * d + j]);
                }
            }
            Ok(RmseRound { forecasts: ForecastMatrix::new(spec.gridpoints, d, data)?, truth })
        })
        .collect()
}

/// Environment wrapper over pregenerated RMSE rounds.
#[derive(Debug, Clone)]
pub struct RmseEnvironment {
    rounds: Vec<RmseRound>,
}

impl RmseEnvironment {
    pub fn new(rounds: Vec<RmseRound>) -> Result<Self> {
        let first = rounds.first().ok_or_else(|| Error::InvalidInput("no rounds".into()))?;
        let d = first.forecasts.cols();
        for r in &rounds {
            check_dim(d, r.forecasts.cols())?;
            check_dim(r.forecasts.rows(), r.truth.len())?;
        }
        Ok(Self { rounds })
    }

    pub fn from_spec(spec: &RmseEnvSpec) -> Result<Self> {
        Self::new(generate_rmse_rounds(spec)?)
    }
}

impl Environment for RmseEnvironment {
    fn dim(&self) -> usize {
        self.rounds[0].forecasts.cols()
    }

    fn evaluate(&mut self, t: usize, w: &SimplexWeights) -> Result<Evaluation> {
        let round = self
            .rounds
            .get(t.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidInput(format!("environment has no round {t}")))?;
        let (loss, gradient) = rmse_loss_and_subgradient(&round.forecasts, &round.truth, w)?;
        let d = round.forecasts.cols();
        let expert_losses = (0..d)
            .map(|j| {
                rmse_loss_and_subgradient(&round.forecasts, &round.truth, &SimplexWeights::vertex(d, j)).map(|r| r.0)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Evaluation { loss, gradient, expert_losses })
    }
}

/// Cumulative losses and regrets of a completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub cumulative_loss: f64,
    pub expert_cumulative_loss: Vec<f64>,
    pub regret_vs_expert: Vec<f64>,
    pub best_expert: usize,
    pub regret_best: f64,
    /// `Σ_{s≤t} loss_s − min_j Σ_{s≤t} loss_{s,j}` for each `t`.
    pub regret_best_by_round: Vec<f64>,
    pub cumulative_loss_by_round: Vec<f64>,
}

/// Regret against each expert and against the best one in hindsight.
pub fn best_competitor_regret(losses: &[f64], expert_losses: &[Vec<f64>]) -> Result<RegretRecord> {
    if losses.len() != expert_losses.len() {
        return Err(Error::IncompleteHistory(format!(
            "{} learner losses but {} expert rows",
            losses.len(),
            expert_losses.len()
        )));
    }
    let d = expert_losses.first().map_or(0, |r| r.len());
    let mut cum = 0.0;
    let mut experts = vec![0.0; d];
    let mut by_round = Vec::with_capacity(losses.len());
    let mut cum_by_round = Vec::with_capacity(losses.len());
    for (l, row) in losses.iter().zip(expert_losses) {
        check_dim(d, row.len())?;
        cum += l;
        for (e, x) in experts.iter_mut().zip(row) {
            *e += x;
        }
        let best = experts.iter().copied().fold(f64::INFINITY, f64::min);
        by_round.push(cum - best);
        cum_by_round.push(cum);
    }
    let best_expert = experts.iter().enumerate().fold(0, |b, (j, x)| if *x < experts[b] { j } else { b });
    let regret_vs_expert: Vec<f64> = experts.iter().map(|e| cum - e).collect();
    let regret_best = regret_vs_expert.get(best_expert).copied().unwrap_or(0.0);
    Ok(RegretRecord {
        cumulative_loss: cum,
        expert_cumulative_loss: experts,
        regret_vs_expert,
        best_expert,
        regret_best,
        regret_best_by_round: by_round,
        cumulative_loss_by_round: cum_by_round,
    })
}
