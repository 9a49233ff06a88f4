//! Reproducible averages over independent disorder draws.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chain::ChainConfig;
use super::run::{run_pair, SampleStats, SampledMarginal};
use crate::error::{Error, Result};
use crate::exact::{enumerate_with, overlap_moments, EnumerateOptions, ExactSummary};
use crate::models::{sample_disorder, Disorder, ModelKind, ModelSpec};
use crate::numerics::pairwise_sum;
use crate::seed::{disorder_seed, stream_rng, StreamRole};

/// Largest tolerated fraction of failed disorders.
pub const MAX_FAILURE_FRACTION: f64 = 0.1;

/// Worker count from `GLASSLAB_WORKERS`, else the number of CPUs.
pub fn default_workers() -> usize {
    std::env::var("GLASSLAB_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Per-disorder results in index order, failures excluded.
#[derive(Clone, Debug)]
pub struct DisorderRun<T> {
    pub records: Vec<(u64, T)>,
    pub failures: Vec<(u64, String)>,
    pub requested: usize,
}

/// Evaluates `f` on disorder indices `0..n_disorders` with `workers`
/// threads. The output depends only on the indices, never on scheduling.
/// More than 10% failures is an error.
pub fn map_disorders<T, F>(n_disorders: usize, workers: usize, f: F) -> Result<DisorderRun<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let indices: Vec<u64> = (0..n_disorders as u64).collect();
    let (records, failures) = map_indices(&indices, workers, f)?;
    check_failure_fraction(failures.len(), n_disorders)?;
    Ok(DisorderRun { records, failures, requested: n_disorders })
}

/// Successes and failures of `f` over `indices`, both in input order. No
/// failure policy is applied.
#[allow(clippy::type_complexity)]
pub fn map_indices<T, F>(indices: &[u64], workers: usize, f: F) -> Result<(Vec<(u64, T)>, Vec<(u64, String)>)>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Unsupported(format!("worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| indices.par_iter().map(|&d| f(d)).collect());
    let mut records = Vec::with_capacity(indices.len());
    let mut failures = Vec::new();
    for (&d, r) in indices.iter().zip(results) {
        match r {
            Ok(v) => records.push((d, v)),
            Err(e) => {
                log::warn!("disorder {d} failed: {e}");
                failures.push((d, e.to_string()));
            }
        }
    }
    Ok((records, failures))
}

pub fn check_failure_fraction(failed: usize, total: usize) -> Result<()> {
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failed, total });
    }
    Ok(())
}

/// The disorder with index `d` of a sweep.
pub fn sweep_disorder(spec: &ModelSpec, n: usize, master_seed: u64, d: u64) -> Result<Disorder> {
    sample_disorder(spec, n, disorder_seed(master_seed, d))
}

/// Mean, between-disorder variance and jackknife error of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Leave-one-out jackknife of `stat(column means)` over the rows.
pub fn jackknife<F: Fn(&[f64]) -> f64>(rows: &[Vec<f64>], stat: F) -> Estimate {
    let n = rows.len();
    let dim = rows.first().map_or(0, |r| r.len());
    let totals: Vec<f64> = (0..dim)
        .map(|c| pairwise_sum(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let full: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    let value = stat(&full);
    if n < 2 {
        return Estimate { value, se: f64::NAN };
    }
    let mut loo = vec![0.0; dim];
    let thetas: Vec<f64> = rows
        .iter()
        .map(|r| {
            for c in 0..dim {
                loo[c] = (totals[c] - r[c]) / (n - 1) as f64;
            }
            stat(&loo)
        })
        .collect();
    let mean = pairwise_sum(&thetas) / n as f64;
    let ss = pairwise_sum(&thetas.iter().map(|t| (t - mean).powi(2)).collect::<Vec<_>>());
    Estimate { value, se: ((n - 1) as f64 / n as f64 * ss).sqrt() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Estimator {
    Exact,
    Chain(ChainConfig),
}

/// Per-disorder Gibbs averages entering the disorder average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsMoments {
    pub overlap_mean: f64,
    pub overlap_sq: f64,
    pub norm_mean: f64,
    pub norm_sq: f64,
    pub aux_overlap_mean: f64,
    pub aux_overlap_sq: f64,
    pub aux_norm_mean: f64,
    pub aux_norm_sq: f64,
    pub fourth_moment: f64,
    pub eighth_moment: f64,
    /// `k`-marginal (tables) or empty.
    pub marginal: Vec<f64>,
}

pub const MOMENT_NAMES: [&str; 10] = [
    "overlap_mean",
    "overlap_sq",
    "norm_mean",
    "norm_sq",
    "aux_overlap_mean",
    "aux_overlap_sq",
    "aux_norm_mean",
    "aux_norm_sq",
    "fourth_moment",
    "eighth_moment",
];

impl GibbsMoments {
    pub fn row(&self) -> Vec<f64> {
        vec![
            self.overlap_mean,
            self.overlap_sq,
            self.norm_mean,
            self.norm_sq,
            self.aux_overlap_mean,
            self.aux_overlap_sq,
            self.aux_norm_mean,
            self.aux_norm_sq,
            self.fourth_moment,
            self.eighth_moment,
        ]
    }
}

/// Gibbs moments of one disorder by enumeration.
pub fn exact_moments(spec: &ModelSpec, disorder: &Disorder, k: usize) -> Result<GibbsMoments> {
    let opts = EnumerateOptions { aux: spec.kind == ModelKind::Perceptron, ..Default::default() };
    let s = enumerate_with(spec, disorder, k, &opts)?;
    moments_of_summary(&s)
}

/// Gibbs moments read off an enumeration that recorded pair correlations
/// (and aux moments for the perceptron).
pub fn moments_of_summary(s: &ExactSummary) -> Result<GibbsMoments> {
    let o = overlap_moments(s)?;
    let n = s.n as f64;
    let (mut aux_overlap_mean, mut aux_overlap_sq, mut aux_norm_mean, mut aux_norm_sq) = (0.0, 0.0, 0.0, 0.0);
    if let Some(a) = &s.aux {
        aux_overlap_mean = a.mean.iter().map(|v| v * v).sum::<f64>() / n;
        aux_overlap_sq = a.corr.iter().map(|v| v * v).sum::<f64>() / (n * n);
        aux_norm_mean = a.norm_mean;
        aux_norm_sq = a.norm_sq;
    }
    Ok(GibbsMoments {
        overlap_mean: o.mean_r12,
        overlap_sq: o.mean_r12_sq,
        norm_mean: o.mean_r11,
        norm_sq: o.mean_r11_sq,
        aux_overlap_mean,
        aux_overlap_sq,
        aux_norm_mean,
        aux_norm_sq,
        fourth_moment: 1.0,
        eighth_moment: 1.0,
        marginal: s.marginal.probs.clone(),
    })
}

/// Gibbs moments of disorder `d` of a sweep by the chosen estimator; chain
/// replicas use the `(master_seed, d)` replica streams.
pub fn disorder_moments(
    spec: &ModelSpec,
    disorder: &Disorder,
    k: usize,
    estimator: &Estimator,
    master_seed: u64,
    d: u64,
) -> Result<GibbsMoments> {
    match estimator {
        Estimator::Exact => exact_moments(spec, disorder, k),
        Estimator::Chain(cfg) => {
            let r1 = stream_rng(master_seed, d, StreamRole::Replica1);
            let r2 = stream_rng(master_seed, d, StreamRole::Replica2);
            let s = run_pair(spec, disorder, cfg, k, r1, r2, None)?;
            Ok(GibbsMoments::from(&s))
        }
    }
}

impl From<&SampleStats> for GibbsMoments {
    fn from(s: &SampleStats) -> Self {
        let marginal = match &s.marginal {
            SampledMarginal::Table(t) => t.probs.clone(),
            SampledMarginal::Histogram(_) => Vec::new(),
        };
        GibbsMoments {
            overlap_mean: s.overlap_mean,
            overlap_sq: s.overlap_sq,
            norm_mean: s.norm_mean,
            norm_sq: s.norm_sq,
            aux_overlap_mean: s.aux_overlap_mean,
            aux_overlap_sq: s.aux_overlap_sq,
            aux_norm_mean: s.aux_norm_mean,
            aux_norm_sq: s.aux_norm_sq,
            fourth_moment: s.fourth_moment,
            eighth_moment: s.eighth_moment,
            marginal,
        }
    }
}

/// Disorder average of [`GibbsMoments`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderAggregate {
    pub n_sites: usize,
    pub n_used: usize,
    pub failures: Vec<(u64, String)>,
    /// Disorder mean, between-disorder variance and jackknife s.e. of each
    /// per-disorder moment.
    pub columns: BTreeMap<String, ColumnSummary>,
    /// Variances under `ν_N = E_d G_N`, e.g. `E⟨R₁₂²⟩ − (E⟨R₁₂⟩)²`.
    pub var_overlap: Estimate,
    pub var_norm: Estimate,
    pub var_aux_overlap: Estimate,
    pub var_aux_norm: Estimate,
    pub marginal: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
}

fn variance_under_nu(rows: &[Vec<f64>], mean_col: usize, sq_col: usize) -> Estimate {
    let mut e = jackknife(rows, |m| m[sq_col] - m[mean_col] * m[mean_col]);
    // exact zero for constant moments (e.g. R₁₁ ≡ 1 for ±1 spins)
    if e.value.abs() < 1e-15 {
        e.value = e.value.max(0.0);
    }
    e
}

pub fn aggregate(n_sites: usize, records: &[(u64, GibbsMoments)], failures: Vec<(u64, String)>) -> DisorderAggregate {
    let rows: Vec<Vec<f64>> = records.iter().map(|(_, g)| g.row()).collect();
    let n = rows.len() as f64;
    let columns = MOMENT_NAMES
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            let mean = pairwise_sum(&col) / n;
            let variance = pairwise_sum(&col.iter().map(|x| (x - mean).powi(2)).collect::<Vec<_>>()) / (n - 1.0);
            let se = jackknife(&rows, |m| m[c]).se;
            (name.to_string(), ColumnSummary { mean, variance, se })
        })
        .collect();
    let cells = records.first().map_or(0, |(_, g)| g.marginal.len());
    let marginal = (0..cells)
        .map(|c| pairwise_sum(&records.iter().map(|(_, g)| g.marginal[c]).collect::<Vec<_>>()) / n)
        .collect();
    DisorderAggregate {
        n_sites,
        n_used: records.len(),
        failures,
        columns,
        var_overlap: variance_under_nu(&rows, 0, 1),
        var_norm: variance_under_nu(&rows, 2, 3),
        var_aux_overlap: variance_under_nu(&rows, 4, 5),
        var_aux_norm: variance_under_nu(&rows, 6, 7),
        marginal,
    }
}

/// Runs the estimator on `n_disorders` draws of size `n` and averages.
pub fn disorder_average(
    spec: &ModelSpec,
    n: usize,
    k: usize,
    n_disorders: usize,
    estimator: &Estimator,
    master_seed: u64,
    workers: usize,
) -> Result<DisorderAggregate> {
    if n_disorders < 2 {
        return Err(Error::param("n_disorders", "must be at least 2"));
    }
    spec.validate()?;
    if let Estimator::Chain(cfg) = estimator {
        cfg.validate()?;
    }
    let run = map_disorders(n_disorders, workers, |d| {
        let disorder = sweep_disorder(spec, n, master_seed, d)?;
        disorder_moments(spec, &disorder, k, estimator, master_seed, d)
    })?;
    Ok(aggregate(n, &run.records, run.failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let rows: Vec<Vec<f64>> = [1.0, 4.0, 2.0, 7.0, 3.0].iter().map(|&x| vec![x]).collect();
        let e = jackknife(&rows, |m| m[0]);
        assert!((e.value - 3.4).abs() < 1e-15);
        // sample sd / √n
        let sd = (rows.iter().map(|r| (r[0] - 3.4f64).powi(2)).sum::<f64>() / 4.0).sqrt();
        assert!((e.se - sd / 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn failure_policy() {
        let ok = map_disorders(20, 2, |d| if d < 2 { Err(Error::Solver("x".into())) } else { Ok(d) }).unwrap();
        assert_eq!(ok.failures.len(), 2);
        assert_eq!(ok.records.len(), 18);
        assert_eq!(ok.records[0].0, 2);
        let bad = map_disorders(20, 2, |d| if d < 3 { Err(Error::Solver("x".into())) } else { Ok(d) });
        assert!(matches!(bad, Err(Error::TooManyFailures { failed: 3, total: 20 })));
    }

    #[test]
    fn zero_beta_overlap_variance() {
        let spec = ModelSpec::sk_ising(0.0, 0.5);
        let agg = disorder_average(&spec, 16, 1, 4, &Estimator::Exact, 7, 1).unwrap();
        let t4 = 0.5f64.tanh().powi(4);
        assert!((agg.var_overlap.value - (1.0 - t4) / 16.0).abs() < 1e-12);
        assert_eq!(agg.var_norm.value, 0.0);
    }

    #[test]
    fn deterministic_across_workers() {
        let spec = ModelSpec::sk_ising(0.6, 0.2);
        let a = disorder_average(&spec, 9, 2, 12, &Estimator::Exact, 3, 1).unwrap();
        let b = disorder_average(&spec, 9, 2, 12, &Estimator::Exact, 3, 4).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn needs_two_disorders() {
        let spec = ModelSpec::sk_ising(0.6, 0.2);
        assert!(disorder_average(&spec, 9, 2, 1, &Estimator::Exact, 3, 1).is_err());
    }
}
