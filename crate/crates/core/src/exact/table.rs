use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Law of `(x_1, …, x_k)` on `{±1}^k`. Index `Σ_j b_j 2^{k-1-j}` with
/// `b_j = 1` iff `x_j = +1`, so site 1 is the most significant digit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalTable {
    pub k: usize,
    pub probs: Vec<f64>,
}

impl MarginalTable {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(k: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != 1 << k {
            return Err(Error::DimensionMismatch { what: "marginal table", expected: 1 << k, got: probs.len() });
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::param("probs", "entries must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::param("probs", format!("entries sum to {total}")));
        }
        Ok(Self { k, probs })
    }

    /// Normalises nonnegative weights.
    pub fn from_weights(k: usize, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::param("weights", format!("total mass {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(k, weights)
    }

    pub fn uniform(k: usize) -> Self {
        Self { k, probs: vec![1.0 / (1u64 << k) as f64; 1 << k] }
    }

    /// Product law with `factors[j] = [P(x_j = -1), P(x_j = +1)]`.
    pub fn product(factors: &[[f64; 2]]) -> Result<Self> {
        let k = factors.len();
        let probs = (0..1usize << k)
            .map(|idx| {
                (0..k)
                    .map(|j| factors[j][(idx >> (k - 1 - j)) & 1])
                    .product()
            })
            .collect();
        Self::from_weights(k, probs)
    }

    /// Spin values of cell `idx`.
    pub fn spins_of(&self, idx: usize) -> Vec<f64> {
        (0..self.k)
            .map(|j| if (idx >> (self.k - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 })
            .collect()
    }

    /// Marginal of the first `k2 ≤ k` sites.
    pub fn project(&self, k2: usize) -> Self {
        assert!(k2 <= self.k);
        let mut probs = vec![0.0; 1 << k2];
        for (idx, p) in self.probs.iter().enumerate() {
            probs[idx >> (self.k - k2)] += p;
        }
        Self { k: k2, probs }
    }

    /// `⟨x_j⟩` under the table.
    pub fn mean(&self, j: usize) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(idx, p)| if (idx >> (self.k - 1 - j)) & 1 == 1 { *p } else { -*p })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_projection() {
        let t = MarginalTable::product(&[[0.2, 0.8], [0.5, 0.5]]).unwrap();
        assert_eq!(t.probs.len(), 4);
        assert!((t.probs[0] - 0.1).abs() < 1e-15); // (-,-)
        assert!((t.probs[2] - 0.4).abs() < 1e-15); // (+,-)
        let p = t.project(1);
        assert!((p.probs[1] - 0.8).abs() < 1e-15);
        assert!((t.mean(0) - 0.6).abs() < 1e-15);
        assert_eq!(t.spins_of(2), vec![1.0, -1.0]);
    }

    #[test]
    fn rejects_unnormalised() {
        assert!(MarginalTable::new(1, vec![0.5, 0.6]).is_err());
        assert!(MarginalTable::new(1, vec![-0.1, 1.1]).is_err());
        assert!(MarginalTable::new(2, vec![0.5, 0.5]).is_err());
    }
}
