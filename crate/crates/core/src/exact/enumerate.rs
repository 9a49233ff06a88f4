use serde::{Deserialize, Serialize};
use serde_json::json;

use super::table::MarginalTable;
use super::walk::{gray_walk, marginal_index, reverse_table, GardnerState, GrayState, SkState};
use crate::error::{Error, Result};
use crate::models::energy::log_weight;
use crate::models::{Disorder, ModelKind, ModelSpec};
use crate::numerics::{fwht, pairwise_sum, Compensated, ScaledSums};
use crate::verify::TestFunction;

pub const ENUMERATION_CAP: usize = 26;
pub const MAX_MARGINAL_SITES: usize = 4;
pub const SUMMARY_VERSION: u32 = 1;
/// Walk steps between full recomputations of incremental projections.
const PROBE_RESYNC: u64 = 1 << 12;

/// Request for `⟨g(Θᵀv)⟩` during a walk, `v = x` (SK) or
/// `v = (u′(S_m))_m` (Perceptron). `theta` is `k × dim`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionProbe {
    pub k: usize,
    pub theta: Vec<f64>,
    pub functions: Vec<TestFunction>,
}

#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    pub pair_corr: bool,
    /// Perceptron auxiliary-system moments.
    pub aux: bool,
    pub probes: Vec<ProjectionProbe>,
    pub cap: usize,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { pair_corr: true, aux: false, probes: Vec::new(), cap: ENUMERATION_CAP }
    }
}

/// Exact moments of `(u′(S_m))_m` under the Gibbs measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxMoments {
    /// `⟨u′(S_m)⟩`.
    pub mean: Vec<f64>,
    /// `⟨u′(S_m) u′(S_m′)⟩`, `M × M`.
    pub corr: Vec<f64>,
    /// `⟨N⁻¹ Σ_m u′²(S_m)⟩` and the mean of its square.
    pub norm_mean: f64,
    pub norm_sq: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSummary {
    pub n: usize,
    pub log_partition: f64,
    pub site_means: Vec<f64>,
    /// `⟨x_i x_j⟩`, `N × N`, when requested.
    pub pair_corr: Option<Vec<f64>>,
    pub marginal: MarginalTable,
    pub aux: Option<AuxMoments>,
    /// `probe_values[p][f] = ⟨g_f(Θ_pᵀ v)⟩`.
    pub probe_values: Vec<Vec<f64>>,
}

impl ExactSummary {
    pub fn pair(&self, i: usize, j: usize) -> Option<f64> {
        self.pair_corr.as_ref().map(|c| c[i * self.n + j])
    }

    /// Versioned JSON document.
    pub fn to_json(&self, include_pair_corr: bool) -> serde_json::Value {
        let mut doc = json!({
            "version": SUMMARY_VERSION,
            "n": self.n,
            "logZ": self.log_partition,
            "means": self.site_means,
            "marginal": self.marginal,
        });
        if include_pair_corr {
            if let Some(c) = &self.pair_corr {
                doc["pair_corr"] = json!(c.chunks(self.n).collect::<Vec<_>>());
            }
        }
        if let Some(a) = &self.aux {
            doc["aux"] = json!(a);
        }
        doc
    }

    pub fn from_json(doc: &serde_json::Value) -> Result<Self> {
        let bad = |what: &str| Error::Unsupported(format!("summary JSON: {what}"));
        if doc["version"].as_u64() != Some(SUMMARY_VERSION as u64) {
            return Err(bad("unsupported version"));
        }
        let n = doc["n"].as_u64().ok_or_else(|| bad("missing n"))? as usize;
        let log_partition = doc["logZ"].as_f64().ok_or_else(|| bad("missing logZ"))?;
        let site_means: Vec<f64> = serde_json::from_value(doc["means"].clone())?;
        let marginal: MarginalTable = serde_json::from_value(doc["marginal"].clone())?;
        let pair_corr = match doc.get("pair_corr") {
            Some(v) => {
                let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())?;
                Some(rows.into_iter().flatten().collect())
            }
            None => None,
        };
        let aux = match doc.get("aux") {
            Some(v) => Some(serde_json::from_value(v.clone())?),
            None => None,
        };
        Ok(Self { n, log_partition, site_means, pair_corr, marginal, aux, probe_values: Vec::new() })
    }
}

pub(crate) fn check_enumerable(spec: &ModelSpec, disorder: &Disorder, k: usize, cap: usize) -> Result<()> {
    if !spec.kind.is_ising() {
        return Err(Error::Unsupported(format!(
            "exact enumeration needs ±1 spins; use the sampler for {}",
            spec.kind
        )));
    }
    if disorder.kind != spec.kind {
        return Err(Error::Unsupported(format!(
            "disorder was drawn for {} but the spec is {}",
            disorder.kind, spec.kind
        )));
    }
    let cap = cap.min(ENUMERATION_CAP);
    if disorder.n_sites > cap {
        return Err(Error::TooLarge { n: disorder.n_sites, cap });
    }
    if k > MAX_MARGINAL_SITES || k > disorder.n_sites {
        return Err(Error::param("k", format!("marginal size {k} not in 0..={}", MAX_MARGINAL_SITES.min(disorder.n_sites))));
    }
    Ok(())
}

/// Exact summary with pair correlations.
pub fn enumerate(spec: &ModelSpec, disorder: &Disorder, k: usize) -> Result<ExactSummary> {
    enumerate_with(spec, disorder, k, &EnumerateOptions::default())
}

pub fn exact_marginal(spec: &ModelSpec, disorder: &Disorder, k: usize) -> Result<MarginalTable> {
    let opts = EnumerateOptions { pair_corr: false, ..Default::default() };
    Ok(enumerate_with(spec, disorder, k, &opts)?.marginal)
}

pub fn enumerate_with(
    spec: &ModelSpec,
    disorder: &Disorder,
    k: usize,
    opts: &EnumerateOptions,
) -> Result<ExactSummary> {
    check_enumerable(spec, disorder, k, opts.cap)?;
    let dim = if spec.kind == ModelKind::Perceptron { disorder.m } else { disorder.n_sites };
    for p in &opts.probes {
        if p.theta.len() != p.k * dim {
            return Err(Error::DimensionMismatch { what: "projection matrix", expected: p.k * dim, got: p.theta.len() });
        }
    }
    match spec.kind {
        ModelKind::SkIsing => Ok(run(SkState::new(spec, disorder), disorder, k, opts)),
        ModelKind::Perceptron => Ok(run(GardnerState::new(spec, disorder), disorder, k, opts)),
        _ => unreachable!("checked above"),
    }
}

struct Layout {
    n: usize,
    k: usize,
    m: usize,
    marg: usize,
    aux: Option<usize>,
    probes: usize,
    total: usize,
}

impl Layout {
    fn new(n: usize, k: usize, m: usize, aux: bool, probe_slots: usize) -> Self {
        let marg = 1 + n;
        let mut next = marg + (1 << k);
        let aux = aux.then(|| {
            let start = next;
            next += m + m * m + 2;
            start
        });
        let probes = next;
        Self { n, k, m, marg, aux, probes, total: probes + probe_slots }
    }
}

fn run<S: GrayState>(mut state: S, disorder: &Disorder, k: usize, opts: &EnumerateOptions) -> ExactSummary {
    let n = disorder.n_sites;
    let want_aux = opts.aux && state.gardner_view().is_some();
    let probe_slots: usize = opts.probes.iter().map(|p| p.functions.len()).sum();
    let lay = Layout::new(n, k, disorder.m, want_aux, probe_slots);
    let mut sums = ScaledSums::new(lay.total);
    let reverse = reverse_table(k);
    let mut table = if opts.pair_corr { vec![0.0; 1 << n] } else { Vec::new() };
    let mut uprime = vec![0.0; disorder.m];
    // projections of the all-minus start
    let mut projs: Vec<Vec<f64>> = opts
        .probes
        .iter()
        .map(|p| {
            let dim = p.theta.len() / p.k;
            (0..p.k).map(|j| -p.theta[j * dim..(j + 1) * dim].iter().sum::<f64>()).collect()
        })
        .collect();
    let mut prev_bits = 0u64;
    let mut steps = 0u64;
    let inv_n = 1.0 / n as f64;
    // With the table recorded, Z, means and the marginal come from it and
    // the streaming sums are only needed for aux moments and probes.
    let streaming = !opts.pair_corr || want_aux || !opts.probes.is_empty();

    gray_walk(&mut state, n, |bits, s| {
        let e = s.log_weight();
        if opts.pair_corr {
            table[bits as usize] = e;
        }
        if !streaming {
            return;
        }
        let w = sums.weight(e);
        sums.add(0, w);
        if !opts.pair_corr {
            for (i, &x) in s.spins().iter().enumerate() {
                sums.add(1 + i, x * w);
            }
            sums.add(lay.marg + marginal_index(bits, lay.k, &reverse), w);
        }
        let gardner = s.gardner_view();
        if let Some((fields, u)) = gardner {
            if want_aux || !opts.probes.is_empty() {
                for (up, &f) in uprime.iter_mut().zip(fields) {
                    *up = u.d1(f);
                }
            }
        }
        if let Some(base) = lay.aux {
            let m = lay.m;
            let mut norm = 0.0;
            for a in 0..m {
                sums.add(base + a, uprime[a] * w);
                norm += uprime[a] * uprime[a];
                for b in 0..m {
                    sums.add(base + m + a * m + b, uprime[a] * uprime[b] * w);
                }
            }
            norm *= inv_n;
            sums.add(base + m + m * m, norm * w);
            sums.add(base + m + m * m + 1, norm * norm * w);
        }
        let mut slot = lay.probes;
        // spin projections follow the single flip; u′ projections are rebuilt
        let flipped = bits ^ prev_bits;
        prev_bits = bits;
        steps += 1;
        let rebuild = gardner.is_some() || steps % PROBE_RESYNC == 0;
        for (p, proj) in opts.probes.iter().zip(projs.iter_mut()) {
            let v: &[f64] = if gardner.is_some() { &uprime } else { s.spins() };
            let dim = v.len();
            if rebuild {
                for j in 0..p.k {
                    proj[j] = p.theta[j * dim..(j + 1) * dim].iter().zip(v).map(|(t, x)| t * x).sum();
                }
            } else if flipped != 0 {
                let i = flipped.trailing_zeros() as usize;
                let dx = 2.0 * v[i];
                for j in 0..p.k {
                    proj[j] += dx * p.theta[j * dim + i];
                }
            }
            for f in &p.functions {
                sums.add(slot, f.eval_product(&proj[..p.k]) * w);
                slot += 1;
            }
        }
    });

    let z = sums.value(0);
    let (log_partition, site_means, marginal, pair_corr) = if opts.pair_corr {
        let t = from_table(&mut table, n, k, &reverse);
        (t.0, t.1, t.2, Some(t.3))
    } else {
        let site_means = (0..n).map(|i| sums.value(1 + i) / z).collect();
        let marg: Vec<f64> = (0..1 << k).map(|c| sums.value(lay.marg + c) / z).collect();
        (sums.reference() + z.ln(), site_means, MarginalTable { k, probs: renormalise(marg) }, None)
    };
    let aux = lay.aux.map(|base| {
        let m = lay.m;
        AuxMoments {
            mean: (0..m).map(|a| sums.value(base + a) / z).collect(),
            corr: (0..m * m).map(|c| sums.value(base + m + c) / z).collect(),
            norm_mean: sums.value(base + m + m * m) / z,
            norm_sq: sums.value(base + m + m * m + 1) / z,
        }
    });
    let mut slot = lay.probes;
    let probe_values = opts
        .probes
        .iter()
        .map(|p| {
            p.functions
                .iter()
                .map(|f| {
                    // constants pass through exactly rather than as Σcw/Σw
                    let v = match *f {
                        TestFunction::Constant { value } => value,
                        _ => sums.value(slot) / z,
                    };
                    slot += 1;
                    v
                })
                .collect()
        })
        .collect();
    ExactSummary { n: lay.n, log_partition, site_means, pair_corr, marginal, aux, probe_values }
}

/// Removes the last-ulp drift of a table of probabilities.
fn renormalise(mut probs: Vec<f64>) -> Vec<f64> {
    let mut c = Compensated::new();
    probs.iter().for_each(|p| c.add(*p));
    let t = c.value();
    probs.iter_mut().for_each(|p| *p /= t);
    probs
}

/// Everything but aux and probes from the table of exponents. The
/// normalised weights are Walsh-Hadamard transformed; the coefficient at
/// `{i}` is `-⟨x_i⟩` and at `{i, j}` it is `⟨x_i x_j⟩`.
fn from_table(table: &mut [f64], n: usize, k: usize, reverse: &[usize]) -> (f64, Vec<f64>, MarginalTable, Vec<f64>) {
    let top = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    table.iter_mut().for_each(|e| *e = (*e - top).exp());
    let z = pairwise_sum(table);
    table.iter_mut().for_each(|p| *p /= z);
    let mut cells = vec![Compensated::new(); 1 << k];
    for (b, p) in table.iter().enumerate() {
        cells[marginal_index(b as u64, k, reverse)].add(*p);
    }
    let marginal = MarginalTable { k, probs: renormalise(cells.iter().map(|c| c.value()).collect()) };
    fwht(table);
    let means = (0..n).map(|i| -table[1usize << i]).collect();
    let mut corr = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = table[(1usize << i) | (1usize << j)];
            corr[i * n + j] = c;
            corr[j * n + i] = c;
        }
    }
    (top + z.ln(), means, marginal, corr)
}

/// Brute-force reference: every quantity recomputed from scratch per
/// configuration. Only for small `n`.
pub fn naive_enumerate(spec: &ModelSpec, disorder: &Disorder, k: usize) -> Result<ExactSummary> {
    check_enumerable(spec, disorder, k, 16)?;
    let n = disorder.n_sites;
    let configs: Vec<Vec<f64>> = (0..1u64 << n)
        .map(|b| (0..n).map(|i| if b >> i & 1 == 1 { 1.0 } else { -1.0 }).collect())
        .collect();
    let exps: Vec<f64> = configs.iter().map(|x| log_weight(spec, disorder, x)).collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ws: Vec<f64> = exps.iter().map(|e| (e - top).exp()).collect();
    let z = pairwise_sum(&ws);
    let log_partition = top + z.ln();
    let expect = |f: &dyn Fn(&[f64]) -> f64| {
        let mut c = Compensated::new();
        for (x, w) in configs.iter().zip(&ws) {
            c.add(w * f(x));
        }
        c.value() / z
    };
    let site_means = (0..n).map(|i| expect(&|x| x[i])).collect();
    let mut corr = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let c = expect(&|x| x[i] * x[j]);
            corr[i * n + j] = c;
            corr[j * n + i] = c;
        }
    }
    let probs = (0..1usize << k)
        .map(|idx| {
            expect(&|x| {
                let hit = (0..k).all(|j| {
                    let want = if (idx >> (k - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 };
                    x[j] == want
                });
                if hit { 1.0 } else { 0.0 }
            })
        })
        .collect();
    Ok(ExactSummary {
        n,
        log_partition,
        site_means,
        pair_corr: Some(corr),
        marginal: MarginalTable { k, probs },
        aux: None,
        probe_values: Vec::new(),
    })
}

/// Overlap and self-overlap moments under `G_N ⊗ G_N` for one disorder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapMoments {
    pub mean_r12: f64,
    pub mean_r12_sq: f64,
    pub mean_r11: f64,
    pub mean_r11_sq: f64,
}

/// `⟨R₁₂⟩ = N⁻¹ Σ_i ⟨x_i⟩²`, `⟨R₁₂²⟩ = N⁻² Σ_ij ⟨x_i x_j⟩²`; `R₁₁ ≡ 1`.
pub fn overlap_moments(summary: &ExactSummary) -> Result<OverlapMoments> {
    let corr = summary
        .pair_corr
        .as_ref()
        .ok_or_else(|| Error::param("summary", "pair correlations were not computed"))?;
    let n = summary.n as f64;
    let mut a = Compensated::new();
    summary.site_means.iter().for_each(|m| a.add(m * m));
    let mut b = Compensated::new();
    corr.iter().for_each(|c| b.add(c * c));
    Ok(OverlapMoments {
        mean_r12: a.value() / n,
        mean_r12_sq: b.value() / (n * n),
        mean_r11: 1.0,
        mean_r11_sq: 1.0,
    })
}
