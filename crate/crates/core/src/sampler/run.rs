use std::io::Write;

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::chain::{Chain, ChainConfig};
use super::ess::{batch_means_se, effective_sample_size};
use super::histogram::{bins_for, uniform_edges, MarginalHistogram};
use crate::error::{Error, Result};
use crate::exact::{MarginalTable, MAX_MARGINAL_SITES};
use crate::models::{Disorder, ModelKind, ModelSpec};
use crate::seed::{stream_rng, StreamRole};

/// Target acceptance of the tuned ST proposal.
pub const TARGET_ACCEPTANCE: f64 = 0.44;
const TUNE_EVERY: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SampledMarginal {
    Table(MarginalTable),
    Histogram(MarginalHistogram),
}

/// Estimates from a replica pair after burn-in and thinning. Means pool
/// both replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub marginal: SampledMarginal,
    /// Batch-means standard errors of the table cells (tables only).
    pub marginal_se: Vec<f64>,
    pub site_means: Vec<f64>,
    pub site_vars: Vec<f64>,
    pub overlap_mean: f64,
    pub overlap_sq: f64,
    pub overlap_se: f64,
    pub norm_mean: f64,
    pub norm_sq: f64,
    /// `N⁻¹ Σ_m u′(S¹_m) u′(S²_m)` and its square (Gardner kinds, else 0).
    pub aux_overlap_mean: f64,
    pub aux_overlap_sq: f64,
    /// `N⁻¹ Σ_m u′²(S_m)` and its square.
    pub aux_norm_mean: f64,
    pub aux_norm_sq: f64,
    /// `⟨u′(S_m)⟩` per constraint (Gardner kinds, else empty).
    pub constraint_means: Vec<f64>,
    /// Site average of `⟨x⁴⟩` and `⟨x⁸⟩`.
    pub fourth_moment: f64,
    pub eighth_moment: f64,
    pub ess_min: f64,
    pub acceptance_rate: f64,
    /// ST acceptance outside `[0.1, 0.9]` after tuning.
    pub acceptance_flagged: bool,
    pub proposal_std: f64,
    /// Kept samples per replica.
    pub n_kept: usize,
    /// Kept `k`-coordinate samples of both replicas, row-major, for
    /// continuous kinds.
    #[serde(skip)]
    pub coords: Vec<f64>,
}

/// Runs two replica chains seeded from `cfg.seed`.
pub fn run_chain(spec: &ModelSpec, disorder: &Disorder, cfg: &ChainConfig, k: usize) -> Result<SampleStats> {
    let r1 = stream_rng(cfg.seed, 0, StreamRole::Replica1);
    let r2 = stream_rng(cfg.seed, 0, StreamRole::Replica2);
    run_pair(spec, disorder, cfg, k, r1, r2, None)
}

/// As [`run_chain`], additionally streaming the kept `k` coordinates of
/// both replicas as CSV, one row per kept sweep.
pub fn run_chain_to_csv<W: Write>(
    spec: &ModelSpec,
    disorder: &Disorder,
    cfg: &ChainConfig,
    k: usize,
    sink: &mut W,
) -> Result<SampleStats> {
    let r1 = stream_rng(cfg.seed, 0, StreamRole::Replica1);
    let r2 = stream_rng(cfg.seed, 0, StreamRole::Replica2);
    run_pair(spec, disorder, cfg, k, r1, r2, Some(sink as &mut dyn Write))
}

/// Per-kept-sample accumulators of one replica pair.
struct Tally {
    n: usize,
    k: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    m4: f64,
    m8: f64,
    r12: Vec<f64>,
    r11: Vec<f64>,
    aux12: Vec<f64>,
    aux11: Vec<f64>,
    uprime: Vec<f64>,
    cells: [Vec<u8>; 2],
    coords: Vec<f64>,
}

impl Tally {
    fn record(&mut self, a: &Chain, b: &Chain, ising: bool, gardner: bool) {
        let n = self.n as f64;
        let (xa, xb) = (a.spins(), b.spins());
        for x in [xa, xb] {
            for (i, &v) in x.iter().enumerate() {
                self.sum[i] += v;
                self.sum_sq[i] += v * v;
                let v4 = v * v * v * v;
                self.m4 += v4;
                self.m8 += v4 * v4;
            }
        }
        self.r12.push(xa.iter().zip(xb).map(|(p, q)| p * q).sum::<f64>() / n);
        for x in [xa, xb] {
            self.r11.push(x.iter().map(|v| v * v).sum::<f64>() / n);
        }
        if gardner {
            let u = a.potential();
            let (sa, sb) = (a.fields(), b.fields());
            self.aux12.push(sa.iter().zip(sb).map(|(p, q)| u.d1(*p) * u.d1(*q)).sum::<f64>() / n);
            for s in [sa, sb] {
                for (acc, v) in self.uprime.iter_mut().zip(s) {
                    *acc += u.d1(*v);
                }
                self.aux11.push(s.iter().map(|v| u.d1(*v).powi(2)).sum::<f64>() / n);
            }
        }
        for (r, x) in [xa, xb].into_iter().enumerate() {
            if ising {
                let idx = x[..self.k].iter().fold(0u8, |acc, &v| (acc << 1) | (v > 0.0) as u8);
                self.cells[r].push(idx);
            } else {
                self.coords.extend_from_slice(&x[..self.k]);
            }
        }
    }
}

fn mean_and_sq(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    (xs.iter().sum::<f64>() / n, xs.iter().map(|x| x * x).sum::<f64>() / n)
}

pub(crate) fn run_pair(
    spec: &ModelSpec,
    disorder: &Disorder,
    cfg: &ChainConfig,
    k: usize,
    rng1: ChaCha20Rng,
    rng2: ChaCha20Rng,
    mut sink: Option<&mut dyn Write>,
) -> Result<SampleStats> {
    cfg.validate()?;
    let n = disorder.n_sites;
    if k == 0 || k > MAX_MARGINAL_SITES || k > n {
        return Err(Error::param("k", format!("marginal size {k} not in 1..={}", MAX_MARGINAL_SITES.min(n))));
    }
    let kind = spec.kind;
    let ising = kind.is_ising();
    let gardner = kind.is_gardner();
    let mut a = Chain::new(spec, disorder, cfg.proposal_std, rng1)?;
    let mut b = Chain::new(spec, disorder, cfg.proposal_std, rng2)?;

    // burn-in, with proposal tuning for ST
    for sweep in 0..cfg.burn_in {
        a.sweep();
        b.sweep();
        if kind == ModelKind::St && (sweep + 1) % TUNE_EVERY == 0 {
            for c in [&mut a, &mut b] {
                let (acc, prop) = c.acceptance_counts();
                let rate = acc as f64 / prop.max(1) as f64;
                c.set_proposal_std(c.proposal_std() * (2.0 * (rate - TARGET_ACCEPTANCE)).exp());
                c.reset_acceptance();
            }
        }
    }
    // one step size for both replicas after tuning
    let step = (a.proposal_std() * b.proposal_std()).sqrt();
    for c in [&mut a, &mut b] {
        c.set_proposal_std(step);
        c.reset_acceptance();
    }

    if let Some(w) = sink.as_deref_mut() {
        let cols: Vec<String> = ["a", "b"]
            .iter()
            .flat_map(|r| (0..k).map(move |j| format!("{r}_x{j}")))
            .collect();
        writeln!(w, "sweep,{}", cols.join(","))?;
    }

    let kept = cfg.kept();
    let mut t = Tally {
        n,
        k,
        sum: vec![0.0; n],
        sum_sq: vec![0.0; n],
        m4: 0.0,
        m8: 0.0,
        r12: Vec::with_capacity(kept),
        r11: Vec::with_capacity(2 * kept),
        aux12: Vec::new(),
        aux11: Vec::new(),
        uprime: vec![0.0; if gardner { disorder.m } else { 0 }],
        cells: [Vec::with_capacity(kept), Vec::with_capacity(kept)],
        coords: Vec::new(),
    };
    let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(kept); k];
    for sweep in cfg.burn_in..cfg.n_sweeps {
        a.sweep();
        b.sweep();
        if (sweep - cfg.burn_in) % cfg.thin != 0 {
            continue;
        }
        t.record(&a, &b, ising, gardner);
        for (j, tr) in traces.iter_mut().enumerate() {
            tr.push(a.spins()[j]);
        }
        if let Some(w) = sink.as_deref_mut() {
            let vals: Vec<String> = a.spins()[..k]
                .iter()
                .chain(&b.spins()[..k])
                .map(|v| v.to_string())
                .collect();
            writeln!(w, "{sweep},{}", vals.join(","))?;
        }
    }

    let samples = (2 * kept) as f64;
    let site_means: Vec<f64> = t.sum.iter().map(|s| s / samples).collect();
    let site_vars = t
        .sum_sq
        .iter()
        .zip(&site_means)
        .map(|(s2, m)| (s2 / samples - m * m).max(0.0))
        .collect();
    let (overlap_mean, overlap_sq) = mean_and_sq(&t.r12);
    let (norm_mean, norm_sq) = mean_and_sq(&t.r11);
    let (aux_overlap_mean, aux_overlap_sq) = if gardner { mean_and_sq(&t.aux12) } else { (0.0, 0.0) };
    let (aux_norm_mean, aux_norm_sq) = if gardner { mean_and_sq(&t.aux11) } else { (0.0, 0.0) };

    let mut ess_min = effective_sample_size(&t.r12);
    for tr in &traces {
        ess_min = ess_min.min(effective_sample_size(tr));
    }

    let (marginal, marginal_se) = if ising {
        let cells = 1usize << k;
        let mut counts = vec![0usize; cells];
        t.cells.iter().flatten().for_each(|&c| counts[c as usize] += 1);
        let probs: Vec<f64> = counts.iter().map(|&c| c as f64 / samples).collect();
        let se = (0..cells)
            .map(|c| {
                let ind: Vec<Vec<f64>> = t
                    .cells
                    .iter()
                    .map(|s| s.iter().map(|&v| (v as usize == c) as u8 as f64).collect())
                    .collect();
                batch_means_se(&[&ind[0], &ind[1]])
            })
            .collect();
        (SampledMarginal::Table(MarginalTable::new(k, probs)?), se)
    } else {
        let bins = bins_for(2 * kept);
        let edges = if kind == ModelKind::SkBox {
            uniform_edges(-1.0, 1.0, bins)?
        } else {
            let lo = t.coords.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.coords.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            uniform_edges(lo, hi.max(lo + 1e-9), bins)?
        };
        let hist = MarginalHistogram::from_samples(&t.coords, k, vec![edges; k])?;
        (SampledMarginal::Histogram(hist), Vec::new())
    };

    let (acceptance_rate, acceptance_flagged) = if kind == ModelKind::St {
        let (acc, prop) = (a.acceptance_counts().0 + b.acceptance_counts().0, a.acceptance_counts().1 + b.acceptance_counts().1);
        let r = acc as f64 / prop.max(1) as f64;
        (r, !(0.1..=0.9).contains(&r))
    } else {
        (1.0, false)
    };
    if acceptance_flagged {
        log::warn!("ST acceptance {acceptance_rate:.3} outside [0.1, 0.9] after tuning");
    }

    Ok(SampleStats {
        marginal,
        marginal_se,
        site_means,
        site_vars,
        overlap_mean,
        overlap_sq,
        overlap_se: batch_means_se(&[&t.r12]),
        norm_mean,
        norm_sq,
        aux_overlap_mean,
        aux_overlap_sq,
        aux_norm_mean,
        aux_norm_sq,
        constraint_means: t.uprime.iter().map(|v| v / samples).collect(),
        fourth_moment: t.m4 / (samples * n as f64),
        eighth_moment: t.m8 / (samples * n as f64),
        ess_min,
        acceptance_rate,
        acceptance_flagged,
        proposal_std: step,
        n_kept: kept,
        coords: t.coords,
    })
}
