//! Vectors over the expert set: loss gradients, hints, regrets and simplex plays.

use std::ops::{Add, AddAssign, Index, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Tolerance on the coordinate sum accepted by [`SimplexWeights::new`].
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Real vector indexed by expert: gradients, hints, pseudo-gradients and regrets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GradientVector(Vec<f64>);

impl GradientVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one coordinate".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("coordinate {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()), "non-finite vector {values:?}");
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    /// `‖·‖_p` for `p ∈ [1, ∞]`.
    pub fn norm(&self, p: f64) -> f64 {
        lp_norm(&self.0, p)
    }

    pub fn inf_norm(&self) -> f64 {
        lp_norm(&self.0, f64::INFINITY)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| c * v).collect())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(self + other)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(self - other)
    }
}

impl TryFrom<Vec<f64>> for GradientVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<GradientVector> for Vec<f64> {
    fn from(v: GradientVector) -> Self {
        v.0
    }
}

impl Index<usize> for GradientVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

// Arithmetic operators panic on dimension mismatch; use the checked_* forms on
// caller-supplied data.
impl Add for &GradientVector {
    type Output = GradientVector;
    fn add(self, rhs: Self) -> GradientVector {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        GradientVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &GradientVector {
    type Output = GradientVector;
    fn sub(self, rhs: Self) -> GradientVector {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        GradientVector(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Neg for &GradientVector {
    type Output = GradientVector;
    fn neg(self) -> GradientVector {
        GradientVector(self.0.iter().map(|v| -v).collect())
    }
}

impl AddAssign<&GradientVector> for GradientVector {
    fn add_assign(&mut self, rhs: &GradientVector) {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a += b;
        }
    }
}

impl SubAssign<&GradientVector> for GradientVector {
    fn sub_assign(&mut self, rhs: &GradientVector) {
        assert_eq!(self.dim(), rhs.dim(), "dimension mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a -= b;
        }
    }
}

/// A point of the probability simplex over `d` experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("simplex point needs at least one coordinate".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("simplex weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL * weights.len().max(1) as f64 {
            return Err(Error::InvalidInput(format!("simplex weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(d: usize) -> Self {
        assert!(d >= 1, "simplex needs d >= 1");
        Self(vec![1.0 / d as f64; d])
    }

    /// The vertex `e_i`.
    pub fn vertex(d: usize, i: usize) -> Self {
        assert!(i < d, "vertex index out of range");
        let mut w = vec![0.0; d];
        w[i] = 1.0;
        Self(w)
    }

    pub(crate) fn from_raw(weights: Vec<f64>) -> Self {
        Self(weights)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for SimplexWeights {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<SimplexWeights> for Vec<f64> {
    fn from(w: SimplexWeights) -> Self {
        w.0
    }
}

impl Index<usize> for SimplexWeights {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖x‖_p` for `p ∈ [1, ∞]`; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if p == 2.0 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    } else {
        // Scale by the max to avoid overflow in |x|^p.
        let m = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if m == 0.0 {
            return 0.0;
        }
        m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Project a nonnegative vector onto the simplex by rescaling; zero maps to uniform.
pub fn simplex_normalize(raw: &[f64]) -> Result<SimplexWeights> {
    if raw.is_empty() {
        return Err(Error::InvalidInput("cannot normalize an empty vector".into()));
    }
    if let Some(i) = raw.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!("coordinate {i} is negative or not finite: {}", raw[i])));
    }
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        Ok(SimplexWeights(raw.iter().map(|v| v / total).collect()))
    } else {
        Ok(SimplexWeights::uniform(raw.len()))
    }
}

/// `r = 1⟨g, w⟩ − g`: how much better each expert did than the mixture.
pub fn instantaneous_regret(g: &GradientVector, w: &SimplexWeights) -> Result<GradientVector> {
    check_dim(g.dim(), w.dim())?;
    let played = g.dot(w.as_slice());
    Ok(GradientVector(g.as_slice().iter().map(|gj| played - gj).collect()))
}

/// Sum of `items[i]` over the 1-indexed inclusive window `[from, to]`, clipped to
/// the available range; empty windows give the zero vector.
pub fn window_sum(items: &[GradientVector], from: isize, to: isize, d: usize) -> GradientVector {
    let mut acc = GradientVector::zeros(d);
    let lo = from.max(1);
    let hi = to.min(items.len() as isize);
    let mut s = lo;
    while s <= hi {
        acc += &items[(s - 1) as usize];
        s += 1;
    }
    acc
}
