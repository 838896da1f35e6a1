//! Closed-form minimizers for the two regularizers in use: negative entropy on
//! the simplex and `½‖·‖_p²` on the nonnegative orthant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{lp_norm, SimplexWeights};

/// Negative entropy shifted so that it vanishes at the uniform point:
/// `ψ(w) = Σ w_j ln w_j + ln d`.
pub fn negentropy(w: &[f64]) -> f64 {
    let d = w.len() as f64;
    w.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>() + d.ln()
}

/// `ln Σ exp(x_j)` with the max subtracted first.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `argmin_{w ∈ Δ} λψ(w) − ⟨θ, w⟩`.
///
/// `λ > 0` gives `softmax(θ/λ)`; `λ = 0` spreads mass uniformly over the
/// maximizers of `θ`. `θ` must be finite and `λ ≥ 0`.
pub fn negentropy_argmin(theta: &[f64], lambda: f64) -> SimplexWeights {
    debug_assert!(lambda >= 0.0 && theta.iter().all(|t| t.is_finite()));
    let m = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = if lambda > 0.0 {
        theta.iter().map(|t| ((t - m) / lambda).exp()).collect()
    } else {
        theta.iter().map(|&t| if t == m { 1.0 } else { 0.0 }).collect()
    };
    let total: f64 = raw.iter().sum();
    SimplexWeights::from_raw(raw.into_iter().map(|v| v / total).collect())
}

/// `(λψ)*(θ) = max_{w ∈ Δ} ⟨θ, w⟩ − λψ(w)`.
pub fn negentropy_conjugate(theta: &[f64], lambda: f64) -> f64 {
    debug_assert!(lambda >= 0.0);
    if lambda > 0.0 {
        let scaled: Vec<f64> = theta.iter().map(|t| t / lambda).collect();
        lambda * (logsumexp(&scaled) - (theta.len() as f64).ln())
    } else {
        theta.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Exponent pair for the `½‖·‖_p²` regularizer; `q ≥ 2` and `p = q/(q−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PNormConfig {
    q: f64,
    p: f64,
}

impl PNormConfig {
    pub fn new(q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 2.0) {
            return Err(Error::InvalidInput(format!("q must be finite and at least 2, got {q}")));
        }
        Ok(Self { q, p: q / (q - 1.0) })
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// `x^e` for `x ≥ 0`, with `0 ↦ 0` and negative inputs clamped to 0.
pub(crate) fn pow_nonneg(x: f64, e: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if e == 1.0 {
        x
    } else {
        x.powf(e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `argmin_{w ≥ 0} ½‖w‖_p² − ⟨v, w⟩ = (v)₊^{q−1} / ‖(v)₊‖_q^{q−2}`.
pub fn pnorm_orthant_argmin(v: &[f64], cfg: PNormConfig) -> Vec<f64> {
    let pos: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let norm = lp_norm(&pos, cfg.q);
    if norm == 0.0 {
        return vec![0.0; v.len()];
    }
    let denom = pow_nonneg(norm, cfg.q - 2.0);
    pos.iter().map(|&x| pow_nonneg(x, cfg.q - 1.0) / denom).collect()
}

/// Gradient of `½‖w‖_p²` on the orthant: `w^{p−1} / ‖w‖_p^{p−2}`.
pub fn half_sq_pnorm_gradient(w: &[f64], cfg: PNormConfig) -> Vec<f64> {
    let norm = lp_norm(w, cfg.p);
    if norm == 0.0 {
        return vec![0.0; w.len()];
    }
    let denom = norm.powf(cfg.p - 2.0);
    w.iter().map(|&x| sign(x) * pow_nonneg(x.abs(), cfg.p - 1.0) / denom).collect()
}

/// An element of `∂‖w‖_p` for `p ∈ [1, ∞]`. Ties in the max-norm case go to the
/// lowest index.
pub fn pnorm_subgradient(w: &[f64], p: f64) -> Vec<f64> {
    let norm = lp_norm(w, p);
    let mut out = vec![0.0; w.len()];
    if norm == 0.0 {
        return out;
    }
    if p.is_infinite() {
        let k = w.iter().enumerate().fold(0, |best, (j, x)| if x.abs() > w[best].abs() { j } else { best });
        out[k] = sign(w[k]);
        return out;
    }
    let denom = norm.powf(p - 1.0);
    for (o, &x) in out.iter_mut().zip(w) {
        *o = sign(x) * pow_nonneg(x.abs(), p - 1.0) / denom;
    }
    out
}

/// Minimizer over `q ≥ 2` of `d^{2/q}(q − 1)`, the dimension factor in the
/// regret-matching bound.
pub fn q_opt(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidInput(format!("q_opt needs d >= 2, got {d}")));
    }
    let c = 2.0 * (d as f64).ln();
    // Stationary points solve q² − cq + c = 0; below c = 4 the objective is
    // increasing on [2, ∞).
    if c <= 4.0 {
        return Ok(2.0);
    }
    Ok(((c + (c * c - 4.0 * c).sqrt()) / 2.0).max(2.0))
}

/// `d^{2/q}(q − 1)`.
pub fn q_objective(d: usize, q: f64) -> f64 {
    (d as f64).powf(2.0 / q) * (q - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn argmin_examples() {
        let w = negentropy_argmin(&[0.0; 3], 1.0);
        assert!(close(w.as_slice(), &[1.0 / 3.0; 3], 1e-15));
        let w = negentropy_argmin(&[2f64.ln(), 0.0], 1.0);
        assert!(close(w.as_slice(), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let w = negentropy_argmin(&[3.0, 1.0, 3.0], 0.0);
        assert_eq!(w.as_slice(), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn argmin_survives_huge_theta() {
        let w = negentropy_argmin(&[1e6, 1e6 - 1.0], 1.0);
        let e = (-1.0f64).exp();
        assert!(close(w.as_slice(), &[1.0 / (1.0 + e), e / (1.0 + e)], 1e-14));
    }

    #[test]
    fn conjugate_examples() {
        assert_eq!(negentropy_conjugate(&[0.0; 4], 0.7), 0.0);
        assert!((negentropy_conjugate(&[1.0, 1.0], 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(negentropy_conjugate(&[5.0, -1.0], 0.0), 5.0);
    }

    #[test]
    fn conjugate_is_value_at_argmin() {
        let theta = [0.3, -1.7, 2.2, 0.0];
        for lambda in [0.05, 0.5, 3.0] {
            let w = negentropy_argmin(&theta, lambda);
            let direct: f64 =
                theta.iter().zip(w.as_slice()).map(|(t, x)| t * x).sum::<f64>() - lambda * negentropy(w.as_slice());
            assert!((negentropy_conjugate(&theta, lambda) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn orthant_examples() {
        let q2 = PNormConfig::new(2.0).unwrap();
        assert_eq!(pnorm_orthant_argmin(&[1.0, -1.0], q2), vec![1.0, 0.0]);
        assert_eq!(pnorm_orthant_argmin(&[-1.0, -3.0], q2), vec![0.0, 0.0]);
        assert_eq!(pnorm_orthant_argmin(&[3.0, 4.0], q2), vec![3.0, 4.0]);
        let q3 = PNormConfig::new(3.0).unwrap();
        assert_eq!(pnorm_orthant_argmin(&[0.0, -2.0], q3), vec![0.0, 0.0]);
    }

    #[test]
    fn orthant_argmin_inverts_gradient() {
        let cfg = PNormConfig::new(3.0).unwrap();
        let v = [0.4, 1.3, 0.0, 2.0];
        let w = pnorm_orthant_argmin(&v, cfg);
        let back = half_sq_pnorm_gradient(&w, cfg);
        assert!(close(&back, &v, 1e-12));
    }

    #[test]
    fn pnorm_config_validates() {
        assert!(PNormConfig::new(1.5).is_err());
        assert!(PNormConfig::new(f64::INFINITY).is_err());
        let c = PNormConfig::new(4.0).unwrap();
        assert!((1.0 / c.p() + 1.0 / c.q() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn subgradient_examples() {
        assert_eq!(pnorm_subgradient(&[0.0, 0.0], 2.0), vec![0.0, 0.0]);
        assert!(close(&pnorm_subgradient(&[3.0, 4.0], 2.0), &[0.6, 0.8], 1e-15));
        assert_eq!(pnorm_subgradient(&[2.0, -5.0], f64::INFINITY), vec![0.0, -1.0]);
        assert_eq!(pnorm_subgradient(&[-3.0, 3.0], f64::INFINITY), vec![-1.0, 0.0]);
        assert_eq!(pnorm_subgradient(&[0.0, -2.0], 1.0), vec![0.0, -1.0]);
    }

    #[test]
    fn q_opt_examples() {
        assert_eq!(q_opt(6).unwrap(), 2.0);
        assert_eq!(q_opt(2).unwrap(), 2.0);
        assert_eq!(q_opt(7).unwrap(), 2.0);
        let q = q_opt(1000).unwrap();
        assert!((q - 12.73).abs() < 5e-3, "{q}");
        assert!(q_opt(1).is_err());
    }

    #[test]
    fn q_opt_beats_grid() {
        for d in [2usize, 3, 6, 8, 20, 100, 1000, 100_000] {
            let q = q_opt(d).unwrap();
            let best = q_objective(d, q);
            let top = (4.0 * (d as f64).ln()).max(2.0);
            let mut g = 2.0;
            while g <= top {
                assert!(best <= q_objective(d, g) + 1e-12, "d={d} q={q} grid={g}");
                g += 0.01;
            }
        }
    }
}
