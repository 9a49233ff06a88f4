//! Disorder sweeps producing the local-independence statistics.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::bound::{log_abstract_constant, C_EPSILON};
use super::distance::{ks_against, ks_distance, tv_continuous, tv_discrete};
use super::fit::{fit_slope, SlopeFit};
use super::predict::{predicted_product, sampled_cavity_fields, PredictedMarginal, PredictionForm};
use super::testfn::TestFunction;
use crate::error::{Error, Result};
use crate::exact::{cavity_exact, enumerate_with, EnumerateOptions, ProjectionProbe, ENUMERATION_CAP};
use crate::models::{cavity_decompose_with, CavityDecomposition, Disorder, ModelKind, ModelSpec};
use crate::numerics::normal_cdf;
use crate::rs::{solve, Quadrature, RSSolution, RsInputs, SolverOptions};
use crate::sampler::run::run_pair;
use crate::sampler::{
    aggregate, jackknife, map_disorders, moments_of_summary, sweep_disorder, ChainConfig, DisorderAggregate,
    Estimate, Estimator, GibbsMoments, MarginalHistogram, SampledMarginal,
};
use crate::seed::{stream_rng, StreamRole};

/// Estimator choice for a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum Backend {
    Exact,
    Mcmc(ChainConfig),
    /// Exact for `±1` kinds up to the enumeration cap, chains otherwise.
    Auto(ChainConfig),
}

impl Backend {
    pub fn resolve(&self, kind: ModelKind, n: usize) -> Result<Estimator> {
        let enumerable = kind.is_ising() && n <= ENUMERATION_CAP;
        match self {
            Backend::Exact if enumerable => Ok(Estimator::Exact),
            Backend::Exact => Err(Error::Unsupported(format!(
                "exact backend needs a ±1 model with N ≤ {ENUMERATION_CAP}, got {kind} at N = {n}"
            ))),
            Backend::Mcmc(cfg) => Ok(Estimator::Chain(cfg.clone())),
            Backend::Auto(cfg) => Ok(if enumerable { Estimator::Exact } else { Estimator::Chain(cfg.clone()) }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Mcmc(_) => "mcmc",
            Backend::Auto(_) => "auto",
        }
    }
}

/// Inputs shared by every size of an LI sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub spec: ModelSpec,
    pub ns: Vec<usize>,
    pub k: usize,
    pub p: u32,
    pub n_disorders: usize,
    pub form: PredictionForm,
    pub backend: Backend,
    pub master_seed: u64,
    pub workers: usize,
    /// Parameters outside the declared validated zone.
    pub exploratory: bool,
}

impl SweepSettings {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.ns.is_empty() {
            return Err(Error::param("ns", "need at least one system size"));
        }
        if self.k == 0 || self.ns.iter().any(|&n| n <= self.k) {
            return Err(Error::param("k", "need 1 ≤ k < N for every N"));
        }
        if self.p == 0 {
            return Err(Error::param("p", "must be at least 1"));
        }
        if self.n_disorders < 2 {
            return Err(Error::param("n_disorders", "must be at least 2"));
        }
        for &n in &self.ns {
            self.backend.resolve(self.spec.kind, n)?;
        }
        Ok(())
    }
}

/// RS inputs of the `(N − k)`-site truncated system.
pub fn truncated_inputs(spec: &ModelSpec, n: usize, k: usize) -> RsInputs {
    let shrink = ((n - k) as f64 / n as f64).sqrt();
    let alpha = spec.m_for(n) as f64 / (n - k) as f64;
    match spec.kind {
        ModelKind::SkIsing => RsInputs::SkIsing { beta: spec.beta * shrink, h: spec.h },
        ModelKind::SkBox => RsInputs::SkBox { beta: spec.beta * shrink, h: spec.h },
        ModelKind::Perceptron => RsInputs::Perceptron { alpha, u: spec.u, shrink },
        ModelKind::St => RsInputs::St { alpha, u: spec.u, kappa: spec.kappa, h: spec.h, shrink },
    }
}

/// RS inputs of the full `N`-site system.
pub fn full_inputs(spec: &ModelSpec, n: usize) -> RsInputs {
    let alpha = spec.m_for(n) as f64 / n as f64;
    match spec.kind {
        ModelKind::SkIsing => RsInputs::SkIsing { beta: spec.beta, h: spec.h },
        ModelKind::SkBox => RsInputs::SkBox { beta: spec.beta, h: spec.h },
        ModelKind::Perceptron => RsInputs::Perceptron { alpha, u: spec.u, shrink: 1.0 },
        ModelKind::St => RsInputs::St { alpha, u: spec.u, kappa: spec.kappa, h: spec.h, shrink: 1.0 },
    }
}

fn gaussians(rng: &mut ChaCha20Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Everything a single size of an LI sweep needs per disorder.
#[derive(Clone, Debug)]
pub struct LiContext {
    pub spec: ModelSpec,
    pub n: usize,
    pub k: usize,
    pub form: PredictionForm,
    pub estimator: Estimator,
    pub master_seed: u64,
    /// Fixed point of the truncated system.
    pub rs: RSSolution,
}

impl LiContext {
    pub fn new(settings: &SweepSettings, n: usize) -> Result<Self> {
        let estimator = settings.backend.resolve(settings.spec.kind, n)?;
        let rs = solve(&truncated_inputs(&settings.spec, n, settings.k), &Quadrature::default(), &SolverOptions::default())?;
        Ok(Self {
            spec: settings.spec.clone(),
            n,
            k: settings.k,
            form: settings.form,
            estimator,
            master_seed: settings.master_seed,
            rs,
        })
    }

    fn decompose(&self, disorder: &Disorder) -> Result<CavityDecomposition> {
        let sigma = (self.spec.kind == ModelKind::St).then(|| self.rs.get("sigma")).flatten();
        cavity_decompose_with(&self.spec, disorder, self.k, sigma)
    }

    fn z_draws(&self, d: u64) -> Option<Vec<f64>> {
        (self.form == PredictionForm::Limiting)
            .then(|| gaussians(&mut stream_rng(self.master_seed, d, StreamRole::ZDraws), self.k))
    }
}

/// Per-disorder outcome of an LI sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiRecord {
    pub n: usize,
    pub d: u64,
    /// TV between the `k`-marginal and its prediction (a lower bound for
    /// continuous spins).
    pub tv: f64,
    /// The same for the first cavity site alone.
    pub tv_first_site: f64,
    /// TV between the original and surrogate `k`-marginals.
    pub gap_tv: Option<f64>,
    /// Largest per-axis Kolmogorov distance (continuous spins).
    pub ks: Option<f64>,
    /// `⟨ϱ A_j·w⟩⁻` when it was computed.
    pub mean_coupling: Option<Vec<f64>>,
    pub moments: GibbsMoments,
}

fn histogram_axis_tv(a: &MarginalHistogram, b: &MarginalHistogram, j: usize) -> f64 {
    let (x, y) = (a.axis_masses(j), b.axis_masses(j));
    (0.5 * x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum::<f64>()).clamp(0.0, 1.0)
}

fn tables_tv(original: &crate::exact::MarginalTable, pred: &PredictedMarginal) -> Result<(f64, f64)> {
    let table = pred.table()?;
    Ok((tv_discrete(original, &table)?, tv_discrete(&original.project(1), &table.project(1))?))
}

/// One disorder of an LI sweep.
pub fn li_disorder(ctx: &LiContext, d: u64) -> Result<LiRecord> {
    let disorder = sweep_disorder(&ctx.spec, ctx.n, ctx.master_seed, d)?;
    let decomp = ctx.decompose(&disorder)?;
    let z = ctx.z_draws(d);
    match &ctx.estimator {
        Estimator::Exact => {
            let ce = cavity_exact(&decomp, ENUMERATION_CAP)?;
            let pred = predicted_product(&decomp, Some(&ctx.rs), ctx.form, z.as_deref(), Some(&ce.cavity_fields))?;
            let (tv, tv_first_site) = tables_tv(&ce.original, &pred)?;
            let opts = EnumerateOptions { aux: ctx.spec.kind == ModelKind::Perceptron, ..Default::default() };
            let summary = enumerate_with(&ctx.spec, &disorder, ctx.k, &opts)?;
            Ok(LiRecord {
                n: ctx.n,
                d,
                tv,
                tv_first_site,
                gap_tv: Some(tv_discrete(&ce.original, &ce.surrogate)?),
                ks: None,
                mean_coupling: Some(ce.mean_coupling),
                moments: moments_of_summary(&summary)?,
            })
        }
        Estimator::Chain(cfg) => {
            let r1 = stream_rng(ctx.master_seed, d, StreamRole::Replica1);
            let r2 = stream_rng(ctx.master_seed, d, StreamRole::Replica2);
            let stats = run_pair(&ctx.spec, &disorder, cfg, ctx.k, r1, r2, None)?;
            let fields = if ctx.form == PredictionForm::Partial {
                let mut a = stream_rng(ctx.master_seed, d, StreamRole::Auxiliary);
                let mut b = a.clone();
                a.set_stream(1);
                b.set_stream(2);
                let truncated = run_pair(&decomp.truncated_spec, &decomp.truncated, cfg, 1, a, b, None)?;
                Some(sampled_cavity_fields(&decomp, &truncated)?)
            } else {
                None
            };
            let pred = predicted_product(&decomp, Some(&ctx.rs), ctx.form, z.as_deref(), fields.as_deref())?;
            let mean_coupling =
                fields.map(|f| f.iter().zip(&decomp.site_terms).map(|(f, t)| f - t.linear).collect());
            let (tv, tv_first_site, ks) = match &stats.marginal {
                SampledMarginal::Table(t) => {
                    let (a, b) = tables_tv(t, &pred)?;
                    (a, b, None)
                }
                SampledMarginal::Histogram(h) => {
                    let mass = pred.histogram(&h.edges)?;
                    let tv = tv_continuous(h, &pred)?;
                    (tv, histogram_axis_tv(h, &mass, 0), Some(ks_distance(&stats.coords, &pred)?))
                }
            };
            Ok(LiRecord { n: ctx.n, d, tv, tv_first_site, gap_tv: None, ks, mean_coupling, moments: (&stats).into() })
        }
    }
}

/// Step-by-step decay check between consecutive sizes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub n_from: usize,
    pub n_to: usize,
    /// `value(n_from) − value(n_to)`.
    pub drop: f64,
    /// Standard error of the difference, treating sizes as independent.
    pub se: f64,
    pub passes: bool,
}

/// Requires each consecutive drop to exceed `sigmas` standard errors.
pub fn decay_steps(ns: &[usize], values: &[Estimate], sigmas: f64) -> Vec<StepCheck> {
    ns.windows(2)
        .zip(values.windows(2))
        .map(|(n, v)| {
            let drop = v[0].value - v[1].value;
            let se = v[0].se.hypot(v[1].se);
            StepCheck { n_from: n[0], n_to: n[1], drop, se, passes: drop > sigmas * se }
        })
        .collect()
}

/// Disorder-averaged local-independence statistics at one size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LIReport {
    pub model: ModelKind,
    pub n: usize,
    pub k: usize,
    pub p: u32,
    pub form: PredictionForm,
    pub backend: String,
    pub n_disorders: usize,
    pub n_used: usize,
    pub failures: Vec<(u64, String)>,
    /// `E_d TV^{2p}`.
    pub tv_moment_2p: Estimate,
    pub tv_mean: Estimate,
    pub tv_first_site_mean: Estimate,
    pub ks_mean: Option<Estimate>,
    pub var_r12: Estimate,
    pub var_r11: Estimate,
    /// `E_d TV(G, G₀)^{2p}` (exact backend).
    pub decomposition_gap: Option<Estimate>,
    /// Kolmogorov distance between the disorder spread of the cavity
    /// couplings and `N(0, ϱ²Υ)`, pooled over the `k` sites.
    pub field_ks: Option<f64>,
    pub projection_stats: Option<ProjectionStats>,
    /// TV is a binned lower bound (continuous spins).
    pub discretized: bool,
    pub exploratory: bool,
    pub seed: u64,
    /// Truncated-system RS parameters used by the prediction.
    pub rs_truncated: RSSolution,
    /// `ln C` of the abstract bound at `ε = 0.1`; `None` when it diverges.
    #[serde(default)]
    pub log_c_constant: Option<f64>,
}

fn mean_estimate(values: &[f64]) -> Estimate {
    let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
    jackknife(&rows, |m| m[0])
}

/// Gaussian cdf of variance `var`, or a unit step when `var` is zero.
fn centred_normal_cdf(var: f64) -> impl Fn(f64) -> f64 {
    let s = var.max(0.0).sqrt();
    move |x| if s > 0.0 { normal_cdf(x / s) } else if x >= 0.0 { 1.0 } else { 0.0 }
}

/// Aggregates the records of one size.
pub fn li_report(
    settings: &SweepSettings,
    ctx: &LiContext,
    records: &[LiRecord],
    failures: Vec<(u64, String)>,
) -> Result<LIReport> {
    if records.len() < 2 {
        return Err(Error::TooManyFailures { failed: failures.len(), total: settings.n_disorders });
    }
    let pw = 2 * settings.p as i32;
    let tv: Vec<f64> = records.iter().map(|r| r.tv).collect();
    let tv2p: Vec<f64> = tv.iter().map(|t| t.powi(pw)).collect();
    let first: Vec<f64> = records.iter().map(|r| r.tv_first_site).collect();
    let ks: Option<Vec<f64>> = records.iter().map(|r| r.ks).collect();
    let gap: Option<Vec<f64>> = records.iter().map(|r| r.gap_tv.map(|g| g.powi(pw))).collect();
    let moments: Vec<(u64, GibbsMoments)> = records.iter().map(|r| (r.d, r.moments.clone())).collect();
    let agg: DisorderAggregate = aggregate(ctx.n, &moments, failures.clone());

    let kind = settings.spec.kind;
    let field_ks = if kind.is_ising() {
        let couplings: Option<Vec<f64>> =
            records.iter().map(|r| r.mean_coupling.clone()).collect::<Option<Vec<_>>>().map(|v| v.concat());
        let upsilon = if kind.is_sk() { ctx.rs.get("q") } else { ctx.rs.get("r") };
        match (couplings, upsilon) {
            (Some(c), Some(u)) => {
                let varrho = if kind.is_sk() { match truncated_inputs(&ctx.spec, ctx.n, ctx.k) {
                    RsInputs::SkIsing { beta, .. } => beta,
                    _ => 1.0,
                } } else { 1.0 };
                Some(ks_against(&c, centred_normal_cdf(varrho * varrho * u)))
            }
            _ => None,
        }
    } else {
        None
    };

    Ok(LIReport {
        model: kind,
        n: ctx.n,
        k: ctx.k,
        p: settings.p,
        form: settings.form,
        backend: match ctx.estimator {
            Estimator::Exact => "exact".into(),
            Estimator::Chain(_) => "mcmc".into(),
        },
        n_disorders: settings.n_disorders,
        n_used: records.len(),
        failures,
        tv_moment_2p: mean_estimate(&tv2p),
        tv_mean: mean_estimate(&tv),
        tv_first_site_mean: mean_estimate(&first),
        ks_mean: ks.as_deref().map(mean_estimate),
        var_r12: agg.var_overlap,
        var_r11: agg.var_norm,
        decomposition_gap: gap.as_deref().map(mean_estimate),
        field_ks,
        projection_stats: None,
        discretized: !kind.is_ising(),
        exploratory: settings.exploratory,
        seed: settings.master_seed,
        rs_truncated: ctx.rs.clone(),
        log_c_constant: log_abstract_constant(&ctx.rs, ctx.k, settings.p, C_EPSILON)?,
    })
}

/// An LI sweep over all sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiSweep {
    pub reports: Vec<LIReport>,
    /// Log-log slope of `E_d TV^{2p}` against `N`, when defined.
    pub slope: Option<SlopeFit>,
    pub tv_steps: Vec<StepCheck>,
    pub var_r12_steps: Vec<StepCheck>,
    #[serde(skip)]
    pub records: Vec<Vec<LiRecord>>,
}

impl LiSweep {
    pub fn assemble(settings: &SweepSettings, reports: Vec<LIReport>, records: Vec<Vec<LiRecord>>) -> Self {
        let ns: Vec<usize> = reports.iter().map(|r| r.n).collect();
        let pw = 2 * settings.p as i32;
        let samples: Vec<Vec<f64>> = records.iter().map(|rs| rs.iter().map(|r| r.tv.powi(pw)).collect()).collect();
        let slope = if ns.len() >= 2 { fit_slope(&ns, &samples).ok() } else { None };
        let tv: Vec<Estimate> = reports.iter().map(|r| r.tv_moment_2p).collect();
        let var: Vec<Estimate> = reports.iter().map(|r| r.var_r12).collect();
        LiSweep { slope, tv_steps: decay_steps(&ns, &tv, 2.0), var_r12_steps: decay_steps(&ns, &var, 2.0), reports, records }
    }
}

/// Runs the LI statistics at every size in `settings.ns`.
pub fn li_sweep(settings: &SweepSettings) -> Result<LiSweep> {
    settings.validate()?;
    let mut reports = Vec::with_capacity(settings.ns.len());
    let mut all = Vec::with_capacity(settings.ns.len());
    for &n in &settings.ns {
        let ctx = LiContext::new(settings, n)?;
        let run = map_disorders(settings.n_disorders, settings.workers, |d| li_disorder(&ctx, d))?;
        let records: Vec<LiRecord> = run.records.into_iter().map(|(_, r)| r).collect();
        reports.push(li_report(settings, &ctx, &records, run.failures)?);
        all.push(records);
    }
    Ok(LiSweep::assemble(settings, reports, all))
}

/// Overlap and thin-shell variances under `ν_N = E_d G_N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStats {
    pub model: ModelKind,
    pub n: usize,
    pub n_disorders: usize,
    pub n_used: usize,
    pub failures: Vec<(u64, String)>,
    pub var_r12: Estimate,
    pub var_r11: Estimate,
    pub var_aux_overlap: Estimate,
    pub var_aux_norm: Estimate,
    /// Disorder mean of `⟨x_1⁴⟩` and `⟨x_1⁸⟩`.
    pub s_n: Estimate,
    pub t_n: Estimate,
    pub seed: u64,
}

pub fn concentration_stats(
    spec: &ModelSpec,
    n: usize,
    n_disorders: usize,
    backend: &Backend,
    master_seed: u64,
    workers: usize,
) -> Result<ConcentrationStats> {
    let estimator = backend.resolve(spec.kind, n)?;
    let agg = crate::sampler::disorder_average(spec, n, 1, n_disorders, &estimator, master_seed, workers)?;
    Ok(concentration_report(spec.kind, n_disorders, master_seed, &agg))
}

/// Reads the concentration statistics off a disorder aggregate.
pub fn concentration_report(model: ModelKind, n_disorders: usize, master_seed: u64, agg: &DisorderAggregate) -> ConcentrationStats {
    let col = |name: &str| {
        let c = &agg.columns[name];
        Estimate { value: c.mean, se: c.se }
    };
    ConcentrationStats {
        model,
        n: agg.n_sites,
        n_disorders,
        n_used: agg.n_used,
        failures: agg.failures.clone(),
        var_r12: agg.var_overlap,
        var_r11: agg.var_norm,
        var_aux_overlap: agg.var_aux_overlap,
        var_aux_norm: agg.var_aux_norm,
        s_n: col("fourth_moment"),
        t_n: col("eighth_moment"),
        seed: master_seed,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapPoint {
    pub n: usize,
    pub n_used: usize,
    /// `E_d TV(G_N^{(k)}, G_{N,0}^{(k)})^{2p}`.
    pub gap: Estimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRatio {
    pub n: usize,
    pub n_doubled: usize,
    /// `gap(2N)/gap(N)` with a delta-method standard error.
    pub ratio: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub model: ModelKind,
    pub k: usize,
    pub p: u32,
    pub n_disorders: usize,
    pub points: Vec<GapPoint>,
    pub ratios: Vec<GapRatio>,
    pub failures: Vec<(u64, String)>,
    pub seed: u64,
}

/// Checks that the decomposition gap can be computed exactly.
pub fn check_gap_inputs(spec: &ModelSpec, ns: &[usize], k: usize, p: u32, n_disorders: usize) -> Result<()> {
    spec.validate()?;
    if !spec.kind.is_ising() {
        return Err(Error::Unsupported(format!("decomposition gap needs an enumerable ±1 model, got {}", spec.kind)));
    }
    if p == 0 || n_disorders < 2 || k == 0 || ns.is_empty() || ns.iter().any(|&n| n <= k) {
        return Err(Error::param("decompose-gap", "need p ≥ 1, at least two disorders and 1 ≤ k < N"));
    }
    for &n in ns {
        Backend::Exact.resolve(spec.kind, n)?;
    }
    Ok(())
}

/// `TV(G_N^{(k)}, G_{N,0}^{(k)})^{2p}` for disorder `d`.
pub fn gap_disorder(spec: &ModelSpec, n: usize, k: usize, p: u32, master_seed: u64, d: u64) -> Result<f64> {
    let disorder = sweep_disorder(spec, n, master_seed, d)?;
    let decomp = cavity_decompose_with(spec, &disorder, k, None)?;
    let ce = cavity_exact(&decomp, ENUMERATION_CAP)?;
    Ok(tv_discrete(&ce.original, &ce.surrogate)?.powi(2 * p as i32))
}

/// Assembles the report from per-size gap values; ratios are given for
/// every pair `(N, 2N)` present.
pub fn gap_report(
    spec: &ModelSpec,
    k: usize,
    p: u32,
    n_disorders: usize,
    master_seed: u64,
    per_size: &[(usize, Vec<f64>)],
    failures: Vec<(u64, String)>,
) -> GapReport {
    let points: Vec<GapPoint> =
        per_size.iter().map(|(n, v)| GapPoint { n: *n, n_used: v.len(), gap: mean_estimate(v) }).collect();
    let ratios = points
        .iter()
        .filter_map(|a| points.iter().find(|b| b.n == 2 * a.n).map(|b| (a, b)))
        .map(|(a, b)| {
            let r = b.gap.value / a.gap.value;
            let rel = (b.gap.se / b.gap.value).hypot(a.gap.se / a.gap.value);
            GapRatio { n: a.n, n_doubled: b.n, ratio: Estimate { value: r, se: (r * rel).abs() } }
        })
        .collect();
    GapReport { model: spec.kind, k, p, n_disorders, points, ratios, failures, seed: master_seed }
}

/// Decomposition gap over `ns`.
pub fn decomposition_gap(
    spec: &ModelSpec,
    ns: &[usize],
    k: usize,
    p: u32,
    n_disorders: usize,
    master_seed: u64,
    workers: usize,
) -> Result<GapReport> {
    check_gap_inputs(spec, ns, k, p, n_disorders)?;
    let mut per_size = Vec::new();
    let mut failures = Vec::new();
    for &n in ns {
        let run = map_disorders(n_disorders, workers, |d| gap_disorder(spec, n, k, p, master_seed, d))?;
        per_size.push((n, run.records.iter().map(|(_, v)| *v).collect()));
        failures.extend(run.failures.into_iter().map(|(d, e)| (d, format!("N = {n}: {e}"))));
    }
    Ok(gap_report(spec, k, p, n_disorders, master_seed, &per_size, failures))
}

/// Squared discrepancies of one test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub function: TestFunction,
    /// `E_d E_Θ (⟨g(Θᵀx)⟩ − E_ξ g(Θᵀ⟨x⟩ + √(ρ−q) ξ))²`.
    pub ms_partial: Estimate,
    /// As above against `E_ξ g(√q z + √(ρ−q) ξ)`.
    pub ms_limiting: Estimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub model: ModelKind,
    pub n: usize,
    pub k: usize,
    pub n_disorders: usize,
    pub n_used: usize,
    pub rho: f64,
    pub q: f64,
    /// `E_d⟨(‖v‖²/dim − ρ)²⟩` and `E_d⟨(v¹·v²/dim − q)²⟩`.
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
    pub d2: f64,
    pub rows: Vec<ProjectionRow>,
    pub failures: Vec<(u64, String)>,
    pub seed: u64,
}

/// Per-disorder discrepancies, one entry per test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRecord {
    pub d: u64,
    pub partial: Vec<f64>,
    pub limiting: Vec<f64>,
    pub moments: GibbsMoments,
}

/// `(ρ, q)` of the projected vector: spins for SK, `(u′(S_m))_m` for the
/// perceptron, whose thin-shell and overlap values are `τ/α` and `r/α`.
pub fn projection_constants(spec: &ModelSpec, n: usize) -> Result<(f64, f64)> {
    let rs = solve(&full_inputs(spec, n), &Quadrature::default(), &SolverOptions::default())?;
    let (rho, q) = match spec.kind {
        ModelKind::SkIsing => (1.0, rs.require("q")?),
        ModelKind::Perceptron => {
            let alpha = spec.m_for(n) as f64 / n as f64;
            (rs.require("tau")? / alpha, rs.require("r")? / alpha)
        }
        other => return Err(Error::Unsupported(format!("projection test needs an enumerable ±1 model, got {other}"))),
    };
    if !(q < rho) {
        return Err(Error::param("projection", format!("degenerate √(ρ − q): q = {q} ≥ ρ = {rho}")));
    }
    Ok((rho, q))
}

/// One disorder of the projection test with a fresh `Θ` and `z`.
pub fn projection_disorder(
    spec: &ModelSpec,
    n: usize,
    k: usize,
    functions: &[TestFunction],
    (rho, q): (f64, f64),
    master_seed: u64,
    d: u64,
) -> Result<ProjectionRecord> {
    let disorder = sweep_disorder(spec, n, master_seed, d)?;
    let gardner = spec.kind == ModelKind::Perceptron;
    let dim = if gardner { disorder.m } else { n };
    let scale = 1.0 / (dim as f64).sqrt();
    let theta: Vec<f64> = gaussians(&mut stream_rng(master_seed, d, StreamRole::ThetaDraws), k * dim)
        .into_iter()
        .map(|g| g * scale)
        .collect();
    let z = gaussians(&mut stream_rng(master_seed, d, StreamRole::ZDraws), k);
    let probe = ProjectionProbe { k, theta: theta.clone(), functions: functions.to_vec() };
    let opts = EnumerateOptions { aux: gardner, probes: vec![probe], ..Default::default() };
    let s = enumerate_with(spec, &disorder, 1, &opts)?;
    let mean_v: &[f64] = match &s.aux {
        Some(a) => &a.mean,
        None => &s.site_means,
    };
    let centre: Vec<f64> =
        (0..k).map(|j| theta[j * dim..(j + 1) * dim].iter().zip(mean_v).map(|(t, v)| t * v).sum()).collect();
    let limit: Vec<f64> = z.iter().map(|z| q.sqrt() * z).collect();
    let spread = (rho - q).sqrt();
    let quad = Quadrature::default();
    let observed = &s.probe_values[0];
    let partial = functions.iter().zip(observed).map(|(f, o)| o - f.gaussian_product(&centre, spread, &quad)).collect();
    let limiting = functions.iter().zip(observed).map(|(f, o)| o - f.gaussian_product(&limit, spread, &quad)).collect();
    Ok(ProjectionRecord { d, partial, limiting, moments: moments_of_summary(&s)? })
}

/// Aggregates projection records of one size.
pub fn projection_report(
    spec: &ModelSpec,
    n: usize,
    k: usize,
    functions: &[TestFunction],
    (rho, q): (f64, f64),
    records: &[ProjectionRecord],
    failures: Vec<(u64, String)>,
    n_disorders: usize,
    master_seed: u64,
) -> ProjectionStats {
    let count = records.len() as f64;
    let avg = |f: &dyn Fn(&GibbsMoments) -> f64| records.iter().map(|r| f(&r.moments)).sum::<f64>() / count;
    // for the perceptron the stored aux moments are scaled by 1/N, not 1/M
    let (c1, c2) = if spec.kind == ModelKind::Perceptron {
        let alpha = spec.m_for(n) as f64 / n as f64;
        let (t, r) = (rho * alpha, q * alpha);
        (
            (avg(&|m| m.aux_norm_sq) - 2.0 * t * avg(&|m| m.aux_norm_mean) + t * t) / (alpha * alpha),
            (avg(&|m| m.aux_overlap_sq) - 2.0 * r * avg(&|m| m.aux_overlap_mean) + r * r) / (alpha * alpha),
        )
    } else {
        (
            avg(&|m| m.norm_sq) - 2.0 * rho * avg(&|m| m.norm_mean) + rho * rho,
            avg(&|m| m.overlap_sq) - 2.0 * q * avg(&|m| m.overlap_mean) + q * q,
        )
    };
    let (c1, c2) = (c1.max(0.0), c2.max(0.0));
    let nf = n as f64;
    let rate = |y: f64, c: f64| (3.0 * nf * nf * y + 4.0 * nf * c * y.sqrt() + 2.0 * nf * c * c).sqrt();
    let rows = functions
        .iter()
        .enumerate()
        .map(|(i, f)| ProjectionRow {
            function: *f,
            ms_partial: mean_estimate(&records.iter().map(|r| r.partial[i].powi(2)).collect::<Vec<_>>()),
            ms_limiting: mean_estimate(&records.iter().map(|r| r.limiting[i].powi(2)).collect::<Vec<_>>()),
        })
        .collect();
    ProjectionStats {
        model: spec.kind,
        n,
        k,
        n_disorders,
        n_used: records.len(),
        rho,
        q,
        c1,
        c2,
        d1: rate(c1, rho),
        d2: rate(c2, q),
        rows,
        failures,
        seed: master_seed,
    }
}

/// Projection test at each size of `ns`.
pub fn projection_test(
    spec: &ModelSpec,
    ns: &[usize],
    k: usize,
    functions: &[TestFunction],
    n_disorders: usize,
    master_seed: u64,
    workers: usize,
) -> Result<Vec<ProjectionStats>> {
    spec.validate()?;
    if functions.is_empty() || k == 0 || n_disorders < 2 {
        return Err(Error::param("projection", "need test functions, k ≥ 1 and at least two disorders"));
    }
    ns.iter()
        .map(|&n| {
            Backend::Exact.resolve(spec.kind, n)?;
            let consts = projection_constants(spec, n)?;
            let run = map_disorders(n_disorders, workers, |d| {
                projection_disorder(spec, n, k, functions, consts, master_seed, d)
            })?;
            let records: Vec<ProjectionRecord> = run.records.into_iter().map(|(_, r)| r).collect();
            Ok(projection_report(spec, n, k, functions, consts, &records, run.failures, n_disorders, master_seed))
        })
        .collect()
}

/// Header of the summary CSV.
pub const CSV_HEADER: &str = "model,N,k,p,form,n_disorders,statistic,value,se,seed";

/// One line of the summary CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub model: ModelKind,
    pub n: usize,
    pub k: usize,
    pub p: u32,
    pub form: String,
    pub n_disorders: usize,
    pub statistic: String,
    pub value: f64,
    pub se: f64,
    pub seed: u64,
}

impl CsvRow {
    pub fn line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:e},{:e},{}",
            self.model, self.n, self.k, self.p, self.form, self.n_disorders, self.statistic, self.value, self.se, self.seed
        )
    }
}

fn row(model: ModelKind, n: usize, k: usize, p: u32, form: &str, n_disorders: usize, seed: u64, statistic: &str, e: Estimate) -> CsvRow {
    CsvRow { model, n, k, p, form: form.to_string(), n_disorders, statistic: statistic.to_string(), value: e.value, se: e.se, seed }
}

impl LIReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let form = self.form.to_string();
        let mk = |s: &str, e: Estimate| row(self.model, self.n, self.k, self.p, &form, self.n_disorders, self.seed, s, e);
        let mut out = vec![
            mk("tv_moment_2p", self.tv_moment_2p),
            mk("tv_mean", self.tv_mean),
            mk("tv_first_site_mean", self.tv_first_site_mean),
            mk("var_r12", self.var_r12),
            mk("var_r11", self.var_r11),
        ];
        if let Some(e) = self.ks_mean {
            out.push(mk("ks_mean", e));
        }
        if let Some(e) = self.decomposition_gap {
            out.push(mk("decomposition_gap", e));
        }
        if let Some(v) = self.field_ks {
            out.push(mk("field_ks", Estimate { value: v, se: f64::NAN }));
        }
        if let Some(v) = self.log_c_constant {
            out.push(mk("log_c_constant", Estimate { value: v, se: f64::NAN }));
        }
        out
    }
}

impl ConcentrationStats {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mk = |s: &str, e: Estimate| row(self.model, self.n, 1, 1, "-", self.n_disorders, self.seed, s, e);
        vec![
            mk("var_r12", self.var_r12),
            mk("var_r11", self.var_r11),
            mk("var_aux_overlap", self.var_aux_overlap),
            mk("var_aux_norm", self.var_aux_norm),
            mk("s_n", self.s_n),
            mk("t_n", self.t_n),
        ]
    }
}

impl GapReport {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mut out: Vec<CsvRow> = self
            .points
            .iter()
            .map(|g| row(self.model, g.n, self.k, self.p, "-", self.n_disorders, self.seed, "decomposition_gap", g.gap))
            .collect();
        out.extend(self.ratios.iter().map(|r| {
            row(self.model, r.n, self.k, self.p, "-", self.n_disorders, self.seed, &format!("gap_ratio_{}", r.n_doubled), r.ratio)
        }));
        out
    }
}

impl ProjectionStats {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let mk = |form: &str, s: &str, e: Estimate| row(self.model, self.n, self.k, 1, form, self.n_disorders, self.seed, s, e);
        let bare = |v: f64| Estimate { value: v, se: f64::NAN };
        let mut out = Vec::new();
        for r in &self.rows {
            out.push(mk("partial", &format!("ms_discrepancy[{}]", r.function), r.ms_partial));
            out.push(mk("limiting", &format!("ms_discrepancy[{}]", r.function), r.ms_limiting));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("d1", self.d1), ("d2", self.d2)] {
            out.push(mk("-", name, bare(v)));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(spec: ModelSpec, ns: Vec<usize>, k: usize, n_disorders: usize, form: PredictionForm) -> SweepSettings {
        SweepSettings {
            spec,
            ns,
            k,
            p: 1,
            n_disorders,
            form,
            backend: Backend::Exact,
            master_seed: 17,
            workers: 1,
            exploratory: false,
        }
    }

    #[test]
    fn zero_beta_prediction_is_exact() {
        let s = settings(ModelSpec::sk_ising(0.0, 0.4), vec![8, 10], 2, 4, PredictionForm::Partial);
        let sweep = li_sweep(&s).unwrap();
        for r in &sweep.reports {
            assert!(r.tv_mean.value < 1e-10, "{}", r.tv_mean.value);
            assert_eq!(r.decomposition_gap.unwrap().value, 0.0);
        }
        let lim = settings(ModelSpec::sk_ising(0.0, 0.4), vec![8], 2, 4, PredictionForm::Limiting);
        assert!(li_sweep(&lim).unwrap().reports[0].tv_mean.value < 1e-10);
    }

    #[test]
    fn marginalisation_contracts_tv() {
        let s = settings(ModelSpec::sk_ising(0.5, 0.3), vec![10], 2, 6, PredictionForm::Partial);
        let sweep = li_sweep(&s).unwrap();
        for r in &sweep.records[0] {
            assert!(r.tv_first_site <= r.tv + 1e-15);
            assert!((0.0..=1.0).contains(&r.tv));
        }
    }

    #[test]
    fn single_site_gap_vanishes() {
        let spec = ModelSpec::sk_ising(0.5, 0.2);
        let g = decomposition_gap(&spec, &[6, 12], 1, 1, 3, 5, 1).unwrap();
        assert!(g.points.iter().all(|p| p.gap.value == 0.0));
        assert_eq!(g.ratios.len(), 1);
    }

    #[test]
    fn constant_test_function_gives_zero() {
        let spec = ModelSpec::sk_ising(0.3, 0.2);
        let f = [TestFunction::Constant { value: 0.7 }, TestFunction::Tanh];
        let stats = projection_test(&spec, &[8], 2, &f, 3, 4, 1).unwrap();
        assert_eq!(stats[0].rows[0].ms_partial.value, 0.0);
        assert_eq!(stats[0].rows[0].ms_limiting.value, 0.0);
        assert!(stats[0].rows[1].ms_partial.value > 0.0);
        assert!(stats[0].d1 > 0.0);
    }

    #[test]
    fn degenerate_overlap_rejected() {
        // strong field drives q to 1 = ρ
        let spec = ModelSpec::sk_ising(0.1, 40.0);
        assert!(projection_constants(&spec, 8).is_err());
    }

    #[test]
    fn backend_resolution() {
        let cfg = ChainConfig::default();
        assert_eq!(Backend::Auto(cfg.clone()).resolve(ModelKind::SkIsing, 26).unwrap(), Estimator::Exact);
        assert!(matches!(Backend::Auto(cfg.clone()).resolve(ModelKind::SkIsing, 27).unwrap(), Estimator::Chain(_)));
        assert!(matches!(Backend::Auto(cfg).resolve(ModelKind::SkBox, 8).unwrap(), Estimator::Chain(_)));
        assert!(Backend::Exact.resolve(ModelKind::St, 8).is_err());
    }

    #[test]
    fn csv_rows_have_fixed_columns() {
        let s = settings(ModelSpec::sk_ising(0.2, 0.1), vec![6], 1, 3, PredictionForm::Partial);
        let sweep = li_sweep(&s).unwrap();
        for r in sweep.reports[0].csv_rows() {
            assert_eq!(r.line().split(',').count(), CSV_HEADER.split(',').count());
        }
    }

    #[test]
    fn chain_backend_sk_box_reports_ks() {
        let mut s = settings(ModelSpec::sk_box(0.2, 0.1), vec![6], 1, 2, PredictionForm::Limiting);
        s.backend = Backend::Mcmc(ChainConfig { n_sweeps: 3000, burn_in: 300, ..Default::default() });
        let sweep = li_sweep(&s).unwrap();
        let r = &sweep.reports[0];
        assert!(r.discretized);
        assert!(r.ks_mean.unwrap().value < 0.2, "{:?}", r.ks_mean);
    }
}
