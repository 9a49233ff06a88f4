use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretised `k`-dimensional marginal on a product grid. Cell index is
/// row-major with axis 0 most significant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalHistogram {
    pub k: usize,
    pub edges: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

pub const MIN_BINS: usize = 16;
pub const MAX_BINS: usize = 128;

/// Per-axis bin count `⌈2 n^{1/3}⌉`, clamped to `[16, 128]`.
pub fn bins_for(n_samples: usize) -> usize {
    ((2.0 * (n_samples as f64).cbrt()).ceil() as usize).clamp(MIN_BINS, MAX_BINS)
}

/// `bins + 1` equally spaced edges over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || bins == 0 {
        return Err(Error::param("edges", format!("need lo < hi and bins > 0, got [{lo}, {hi}] with {bins}")));
    }
    let w = (hi - lo) / bins as f64;
    let mut e: Vec<f64> = (0..=bins).map(|b| lo + w * b as f64).collect();
    e[bins] = hi;
    Ok(e)
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("edges", "must be strictly increasing with at least two entries"));
    }
    Ok(())
}

/// Bin of `x`; values outside the outer edges fall in the end bins.
fn locate(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    match edges.partition_point(|&e| e <= x) {
        0 => 0,
        p if p > bins => bins - 1,
        p => p - 1,
    }
}

impl MarginalHistogram {
    /// Histogram of row-major `k`-dimensional samples.
    pub fn from_samples(samples: &[f64], k: usize, edges: Vec<Vec<f64>>) -> Result<Self> {
        if k == 0 || edges.len() != k {
            return Err(Error::DimensionMismatch { what: "histogram axes", expected: k, got: edges.len() });
        }
        if samples.is_empty() || samples.len() % k != 0 {
            return Err(Error::param("samples", "need a non-empty multiple of k values"));
        }
        for e in &edges {
            check_edges(e)?;
        }
        let mut counts = vec![0u64; edges.iter().map(|e| e.len() - 1).product()];
        for row in samples.chunks_exact(k) {
            let mut idx = 0;
            for (x, e) in row.iter().zip(&edges) {
                idx = idx * (e.len() - 1) + locate(e, *x);
            }
            counts[idx] += 1;
        }
        let total = (samples.len() / k) as f64;
        Ok(Self { k, edges, masses: counts.iter().map(|&c| c as f64 / total).collect() })
    }

    /// Masses of a product law given per-axis cell masses.
    pub fn product(edges: Vec<Vec<f64>>, axis_masses: &[Vec<f64>]) -> Result<Self> {
        let k = edges.len();
        if axis_masses.len() != k {
            return Err(Error::DimensionMismatch { what: "histogram axes", expected: k, got: axis_masses.len() });
        }
        let mut masses = vec![1.0];
        for (e, m) in edges.iter().zip(axis_masses) {
            check_edges(e)?;
            if m.len() != e.len() - 1 {
                return Err(Error::DimensionMismatch { what: "axis masses", expected: e.len() - 1, got: m.len() });
            }
            masses = masses.iter().flat_map(|a| m.iter().map(move |b| a * b)).collect();
        }
        Ok(Self { k, edges, masses })
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Masses of the one-dimensional marginal along axis `j`.
    pub fn axis_masses(&self, j: usize) -> Vec<f64> {
        let dims: Vec<usize> = self.edges.iter().map(|e| e.len() - 1).collect();
        let inner: usize = dims[j + 1..].iter().product();
        let mut out = vec![0.0; dims[j]];
        for (idx, m) in self.masses.iter().enumerate() {
            out[(idx / inner) % dims[j]] += m;
        }
        out
    }
}
