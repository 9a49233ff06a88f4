//! Total-variation and Kolmogorov distances between marginals.

use crate::error::{Error, Result};
use crate::exact::MarginalTable;
use crate::rs::Quadrature;
use crate::sampler::MarginalHistogram;

use super::predict::{bin_quadrature, PredictedMarginal, SiteLaw};

/// `½ Σ |a_i − b_i|`, the supremum over subsets of `{±1}^k`.
pub fn tv_discrete(a: &MarginalTable, b: &MarginalTable) -> Result<f64> {
    if a.k != b.k || a.probs.len() != b.probs.len() {
        return Err(Error::DimensionMismatch { what: "marginal tables", expected: a.probs.len(), got: b.probs.len() });
    }
    let s: f64 = a.probs.iter().zip(&b.probs).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// TV between two histograms on the same grid. Binning can only merge
/// mass, so this is a lower bound on the TV of the underlying laws.
pub fn tv_histograms(a: &MarginalHistogram, b: &MarginalHistogram) -> Result<f64> {
    if a.edges != b.edges {
        return Err(Error::param("edges", "histograms are on different grids"));
    }
    let s: f64 = a.masses.iter().zip(&b.masses).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * s).clamp(0.0, 1.0))
}

/// Discretised TV between a sampled histogram and a predicted law, on the
/// histogram's own edges. A lower bound on the true TV.
pub fn tv_continuous(sampled: &MarginalHistogram, predicted: &PredictedMarginal) -> Result<f64> {
    let mass = predicted.histogram(&sampled.edges)?;
    tv_histograms(sampled, &mass)
}

/// Largest gap between the empirical CDF of `samples` and `cdf`.
pub fn ks_against<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        // ties advance together; the left limit is taken just below the atom
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let below = cdf(xs[i] - xs[i].abs() * 1e-12 - f64::MIN_POSITIVE);
        worst = worst.max((i as f64 / n - below).abs()).max(((j + 1) as f64 / n - cdf(xs[i])).abs());
        i = j + 1;
    }
    worst
}

/// Kolmogorov distance along axis `j` between row-major `k`-dimensional
/// samples and the predicted site law.
pub fn ks_axis(samples: &[f64], k: usize, j: usize, law: &SiteLaw, quad: &Quadrature) -> Result<f64> {
    if j >= k || samples.len() % k != 0 {
        return Err(Error::DimensionMismatch { what: "sample rows", expected: k, got: samples.len() % k.max(1) });
    }
    let col: Vec<f64> = samples.iter().skip(j).step_by(k).copied().collect();
    Ok(ks_against(&col, |x| law.cdf(x, quad)))
}

/// Largest per-axis Kolmogorov distance.
pub fn ks_distance(samples: &[f64], predicted: &PredictedMarginal) -> Result<f64> {
    let quad = bin_quadrature();
    let k = predicted.k();
    (0..k).try_fold(0.0f64, |m, j| Ok(m.max(ks_axis(samples, k, j, &predicted.sites[j], &quad)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::uniform_edges;
    use crate::seed::rng_from_u64;
    use crate::verify::predict::PredictionKind;
    use rand::Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    fn gaussian(mean: f64, var: f64) -> PredictedMarginal {
        PredictedMarginal { kind: PredictionKind::StLimiting, sites: vec![SiteLaw::Gaussian { mean, var }], constants: BTreeMap::new() }
    }

    #[test]
    fn discrete_examples() {
        let a = MarginalTable::new(1, vec![0.5, 0.5]).unwrap();
        let b = MarginalTable::new(1, vec![0.25, 0.75]).unwrap();
        assert_eq!(tv_discrete(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_discrete(&a, &b).unwrap(), 0.25);
        let p = MarginalTable::new(1, vec![1.0, 0.0]).unwrap();
        let q = MarginalTable::new(1, vec![0.0, 1.0]).unwrap();
        assert_eq!(tv_discrete(&p, &q).unwrap(), 1.0);
        assert!(tv_discrete(&a, &MarginalTable::uniform(2)).is_err());
    }

    #[test]
    fn self_sampled_gaussian_is_close() {
        let law = gaussian(0.3, 0.4);
        let mut rng = rng_from_u64(11);
        let xs: Vec<f64> = (0..1_000_000).map(|_| 0.3 + 0.4f64.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let e = uniform_edges(-3.0, 3.0, crate::sampler::bins_for(xs.len())).unwrap();
        let h = MarginalHistogram::from_samples(&xs, 1, vec![e]).unwrap();
        assert!(tv_continuous(&h, &law).unwrap() < 0.02);
        assert!(ks_distance(&xs, &law).unwrap() < 0.01);
    }

    #[test]
    fn disjoint_supports() {
        let law = gaussian(-8.0, 0.01);
        let xs = vec![5.0; 100];
        let h = MarginalHistogram::from_samples(&xs, 1, vec![uniform_edges(-10.0, 10.0, 40).unwrap()]).unwrap();
        assert!(tv_continuous(&h, &law).unwrap() > 1.0 - 1e-9);
    }

    #[test]
    fn refinement_never_decreases() {
        let law = gaussian(0.0, 1.0);
        let mut rng = rng_from_u64(2);
        let xs: Vec<f64> = (0..5000).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut last = 0.0;
        for bins in [4, 8, 16, 32, 64] {
            let h = MarginalHistogram::from_samples(&xs, 1, vec![uniform_edges(-3.0, 3.0, bins).unwrap()]).unwrap();
            let v = tv_continuous(&h, &law).unwrap();
            assert!(v >= last - 1e-12, "{bins}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn ks_of_point_mass() {
        assert_eq!(ks_against(&[0.0, 0.0], |x| if x >= 0.0 { 1.0 } else { 0.0 }), 0.0);
        assert!((ks_against(&[1.0], |_| 0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn edge_mismatch_rejected() {
        let a = MarginalHistogram::from_samples(&[0.0], 1, vec![uniform_edges(-1.0, 1.0, 2).unwrap()]).unwrap();
        let b = MarginalHistogram::from_samples(&[0.0], 1, vec![uniform_edges(-1.0, 1.0, 4).unwrap()]).unwrap();
        assert!(tv_histograms(&a, &b).is_err());
    }
}
