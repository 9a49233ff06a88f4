//! Predicted product laws for the `k` cavity coordinates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{cavity_fields, MarginalTable};
use crate::models::{CavityDecomposition, ModelKind};
use crate::numerics::normal_cdf;
use crate::rs::{Quadrature, RSSolution, RsInputs};
use crate::sampler::{MarginalHistogram, SampleStats};

/// Gauss-Legendre order used inside each histogram bin.
const BIN_ORDER: usize = 16;
/// Panels used to normalise a tilted density on `[-1, 1]`.
const NORM_PANELS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionForm {
    /// Cavity fields of the actual disorder.
    Partial,
    /// Cavity fields replaced by their Gaussian limit.
    Limiting,
}

impl std::fmt::Display for PredictionForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PredictionForm::Partial => "partial",
            PredictionForm::Limiting => "limiting",
        })
    }
}

impl std::str::FromStr for PredictionForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "partial" => Ok(PredictionForm::Partial),
            "limiting" => Ok(PredictionForm::Limiting),
            other => Err(Error::param("form", format!("expected partial or limiting, got `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PredictionKind {
    SkPartial,
    SkLimiting,
    SkboxPartial,
    SkboxLimiting,
    PercPartial,
    PercLimiting,
    StPartial,
    StLimiting,
}

impl PredictionKind {
    pub fn of(kind: ModelKind, form: PredictionForm) -> Self {
        use PredictionForm::*;
        match (kind, form) {
            (ModelKind::SkIsing, Partial) => Self::SkPartial,
            (ModelKind::SkIsing, Limiting) => Self::SkLimiting,
            (ModelKind::SkBox, Partial) => Self::SkboxPartial,
            (ModelKind::SkBox, Limiting) => Self::SkboxLimiting,
            (ModelKind::Perceptron, Partial) => Self::PercPartial,
            (ModelKind::Perceptron, Limiting) => Self::PercLimiting,
            (ModelKind::St, Partial) => Self::StPartial,
            (ModelKind::St, Limiting) => Self::StLimiting,
        }
    }
}

/// Law of one predicted coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SiteLaw {
    /// `P(σ) = e^{σ·field} / (2 cosh field)` on `±1`.
    Ising { field: f64 },
    /// Density `∝ exp(linear·x + quadratic·x²)` on `[-1, 1]`; `log_norm` is
    /// the log of its integral.
    Tilted { linear: f64, quadratic: f64, log_norm: f64 },
    Gaussian { mean: f64, var: f64 },
}

fn tilt_integral(linear: f64, quadratic: f64, lo: f64, hi: f64, shift: f64, quad: &Quadrature) -> f64 {
    let (c, r) = (0.5 * (hi + lo), 0.5 * (hi - lo));
    r * quad.legendre(|t| {
        let x = c + r * t;
        (linear * x + quadratic * x * x - shift).exp()
    })
}

impl SiteLaw {
    /// Builds a tilted law, normalising by composite Gauss-Legendre.
    pub fn tilted(linear: f64, quadratic: f64) -> Self {
        let quad = bin_quadrature();
        let shift = linear.abs() + quadratic.max(0.0);
        let w = 2.0 / NORM_PANELS as f64;
        let total: f64 = (0..NORM_PANELS)
            .map(|p| {
                let lo = -1.0 + w * p as f64;
                tilt_integral(linear, quadratic, lo, lo + w, shift, &quad)
            })
            .sum();
        SiteLaw::Tilted { linear, quadratic, log_norm: shift + total.ln() }
    }

    /// `[P(−1), P(+1)]` for Ising laws.
    pub fn pm_probs(&self) -> Option<[f64; 2]> {
        match *self {
            SiteLaw::Ising { field } => {
                let p_up = 1.0 / (1.0 + (-2.0 * field).exp());
                Some([1.0 - p_up, p_up])
            }
            _ => None,
        }
    }

    /// Mass of `(lo, hi]`; infinite ends are allowed.
    pub fn interval_mass(&self, lo: f64, hi: f64, quad: &Quadrature) -> f64 {
        match *self {
            SiteLaw::Ising { .. } => {
                let p = self.pm_probs().unwrap();
                let inside = |x: f64| lo < x && x <= hi;
                p[0] * inside(-1.0) as u8 as f64 + p[1] * inside(1.0) as u8 as f64
            }
            SiteLaw::Tilted { linear, quadratic, log_norm } => {
                let (a, b) = (lo.max(-1.0), hi.min(1.0));
                if a >= b {
                    return 0.0;
                }
                tilt_integral(linear, quadratic, a, b, log_norm, quad)
            }
            SiteLaw::Gaussian { mean, var } => {
                let s = var.sqrt();
                let f = |x: f64| if x.is_infinite() { if x > 0.0 { 1.0 } else { 0.0 } } else { normal_cdf((x - mean) / s) };
                f(hi) - f(lo)
            }
        }
    }

    pub fn cdf(&self, x: f64, quad: &Quadrature) -> f64 {
        self.interval_mass(f64::NEG_INFINITY, x, quad)
    }

    /// Total mass, `1` up to quadrature error.
    pub fn total_mass(&self, quad: &Quadrature) -> f64 {
        match self {
            SiteLaw::Tilted { .. } => {
                let w = 2.0 / NORM_PANELS as f64;
                (0..NORM_PANELS)
                    .map(|p| {
                        let lo = -1.0 + w * p as f64;
                        self.interval_mass(lo, lo + w, quad)
                    })
                    .sum()
            }
            _ => self.interval_mass(f64::NEG_INFINITY, f64::INFINITY, quad),
        }
    }
}

pub(crate) fn bin_quadrature() -> Quadrature {
    Quadrature::new(BIN_ORDER).expect("fixed order is valid")
}

/// Product law `⊗_j` of the predicted site laws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictedMarginal {
    pub kind: PredictionKind,
    pub sites: Vec<SiteLaw>,
    /// Truncated-system constants used (`beta_minus`, `q_minus`, ...).
    pub constants: BTreeMap<String, f64>,
}

impl PredictedMarginal {
    pub fn k(&self) -> usize {
        self.sites.len()
    }

    /// The `2^k` table for Ising laws (site 0 most significant).
    pub fn table(&self) -> Result<MarginalTable> {
        let factors: Option<Vec<[f64; 2]>> = self.sites.iter().map(|s| s.pm_probs()).collect();
        let factors = factors.ok_or_else(|| Error::Unsupported("table of a continuous prediction".into()))?;
        MarginalTable::product(&factors)
    }

    /// Masses on the grid of `edges`, the outer bins extending to the
    /// ends of the support as in [`MarginalHistogram::from_samples`].
    pub fn histogram(&self, edges: &[Vec<f64>]) -> Result<MarginalHistogram> {
        if edges.len() != self.k() {
            return Err(Error::DimensionMismatch { what: "histogram axes", expected: self.k(), got: edges.len() });
        }
        let quad = bin_quadrature();
        let axis: Vec<Vec<f64>> = self
            .sites
            .iter()
            .zip(edges)
            .map(|(law, e)| {
                let b = e.len() - 1;
                (0..b)
                    .map(|i| {
                        let lo = if i == 0 { f64::NEG_INFINITY } else { e[i] };
                        let hi = if i == b - 1 { f64::INFINITY } else { e[i + 1] };
                        law.interval_mass(lo, hi, &quad)
                    })
                    .collect()
            })
            .collect();
        MarginalHistogram::product(edges.to_vec(), &axis)
    }
}

/// RS inputs of the truncated `(N − k)`-site system of a decomposition.
pub fn truncated_rs_inputs(decomp: &CavityDecomposition) -> RsInputs {
    let spec = &decomp.parent_spec;
    match spec.kind {
        ModelKind::SkIsing => RsInputs::SkIsing { beta: decomp.truncated_spec.beta, h: spec.h },
        ModelKind::SkBox => RsInputs::SkBox { beta: decomp.truncated_spec.beta, h: spec.h },
        ModelKind::Perceptron => RsInputs::Perceptron { alpha: decomp.alpha_minus, u: spec.u, shrink: decomp.shrink },
        ModelKind::St => RsInputs::St {
            alpha: decomp.alpha_minus,
            u: spec.u,
            kappa: spec.kappa,
            h: spec.h,
            shrink: decomp.shrink,
        },
    }
}

/// `(Ξ, Υ)` of the cavity vector: thin-shell and overlap values of `w`.
pub(crate) fn xi_upsilon(kind: ModelKind, rs: &RSSolution) -> Result<(f64, f64)> {
    Ok(match kind {
        ModelKind::SkIsing => (1.0, rs.require("q")?),
        ModelKind::SkBox => (rs.require("rho")?, rs.require("q")?),
        ModelKind::Perceptron | ModelKind::St => (rs.require("tau")?, rs.require("r")?),
    })
}

fn constants_of(decomp: &CavityDecomposition, rs: Option<&RSSolution>) -> BTreeMap<String, f64> {
    let mut c = BTreeMap::new();
    let spec = &decomp.parent_spec;
    if spec.kind.is_sk() {
        c.insert("beta_minus".to_string(), decomp.truncated_spec.beta);
        c.insert("h".to_string(), spec.h);
    } else {
        c.insert("alpha_minus".to_string(), decomp.alpha_minus);
    }
    if spec.kind == ModelKind::St {
        c.insert("kappa".to_string(), spec.kappa);
        c.insert("h".to_string(), spec.h);
    }
    if let Some(rs) = rs {
        for (k, v) in &rs.params {
            c.insert(format!("{k}_minus"), *v);
        }
    }
    c
}

/// Predicted product law of the cavity coordinates.
///
/// Site `j` has density `∝ exp(x P_j + x² ϱ²(Ξ − Υ)/2 + f_j(x))` against
/// the reference measure, with `P_j = ⟨ϱ A_j·w⟩⁻` (partial) or
/// `ϱ √Υ z_j` (limiting). `fields`, when given, are the full cavity
/// fields `P_j + linear_j`; ±1 models compute them exactly when omitted.
pub fn predicted_product(
    decomp: &CavityDecomposition,
    rs: Option<&RSSolution>,
    form: PredictionForm,
    z_draws: Option<&[f64]>,
    fields: Option<&[f64]>,
) -> Result<PredictedMarginal> {
    let kind = decomp.parent_spec.kind;
    let k = decomp.k;
    if let Some(sol) = rs {
        if sol.kind != kind {
            return Err(Error::Unsupported(format!("RS solution for {} given for a {} prediction", sol.kind, kind)));
        }
    }
    // ±1 partial forms never need the RS constants
    let needs_rs = !(kind == ModelKind::SkIsing || kind == ModelKind::Perceptron) || form == PredictionForm::Limiting;
    if needs_rs && rs.is_none() {
        return Err(Error::Solver(format!("{kind} {form} prediction needs the truncated RS solution")));
    }
    let (xi, upsilon) = match rs {
        Some(sol) => xi_upsilon(kind, sol)?,
        None => (0.0, 0.0),
    };
    let varrho = decomp.varrho;
    let spread = 0.5 * varrho * varrho * (xi - upsilon);

    let p_fields: Vec<f64> = match form {
        PredictionForm::Partial => {
            let full = match fields {
                Some(f) => f.to_vec(),
                None if kind.is_ising() => cavity_fields(decomp)?,
                None => {
                    return Err(Error::Unsupported(format!(
                        "{kind} partial prediction needs sampled cavity fields"
                    )))
                }
            };
            if full.len() != k {
                return Err(Error::DimensionMismatch { what: "cavity fields", expected: k, got: full.len() });
            }
            full.iter().zip(&decomp.site_terms).map(|(f, t)| f - t.linear).collect()
        }
        PredictionForm::Limiting => {
            let z = z_draws.ok_or_else(|| Error::param("z_draws", "limiting form needs k Gaussian draws"))?;
            if z.len() != k {
                return Err(Error::DimensionMismatch { what: "z draws", expected: k, got: z.len() });
            }
            z.iter().map(|z| varrho * upsilon.max(0.0).sqrt() * z).collect()
        }
    };

    let sites = p_fields
        .iter()
        .zip(&decomp.site_terms)
        .map(|(p, t)| {
            let linear = p + t.linear;
            let quadratic = spread + t.quadratic;
            match kind {
                ModelKind::SkIsing | ModelKind::Perceptron => Ok(SiteLaw::Ising { field: linear }),
                ModelKind::SkBox => Ok(SiteLaw::tilted(linear, quadratic)),
                ModelKind::St => {
                    if !(quadratic < 0.0) {
                        return Err(Error::Solver(format!(
                            "ST prediction is not normalisable: 2κ + r − τ − σ = {} ≤ 0",
                            -2.0 * quadratic
                        )));
                    }
                    let var = -0.5 / quadratic;
                    Ok(SiteLaw::Gaussian { mean: var * linear, var })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictedMarginal { kind: PredictionKind::of(kind, form), sites, constants: constants_of(decomp, rs) })
}

/// Cavity fields `ϱ A_j·⟨w⟩⁻ + linear_j` from a chain run on the
/// truncated system.
pub fn sampled_cavity_fields(decomp: &CavityDecomposition, truncated: &SampleStats) -> Result<Vec<f64>> {
    let w: Vec<f64> = if decomp.parent_spec.kind.is_sk() {
        truncated.site_means.clone()
    } else {
        let s = decomp.alpha_minus.sqrt();
        truncated.constraint_means.iter().map(|v| s * v).collect()
    };
    let dim = decomp.cavity_vectors.first().map_or(0, |a| a.len());
    if w.len() != dim {
        return Err(Error::DimensionMismatch { what: "truncated means", expected: dim, got: w.len() });
    }
    Ok(decomp
        .cavity_vectors
        .iter()
        .zip(&decomp.site_terms)
        .map(|(a, t)| decomp.varrho * a.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>() + t.linear)
        .collect())
}

/// Smallest value over `P ∈ [-10, 10]` of
/// `∫ exp(x² ϱ² (Ξ − Υ)/2 + f(x) + x P) μ(dx)`, with `μ` the reference
/// probability of the model: uniform on `±1` or on `[-1, 1]`, and for ST
/// the centred Gaussian of variance `1/(2κ − σ⁻)`. The linear part of `f`
/// is absorbed into `P`.
pub fn e_ge_one_min(kind: ModelKind, rs: &RSSolution, varrho: f64, kappa: f64, grid: usize) -> Result<f64> {
    let (xi, upsilon) = xi_upsilon(kind, rs)?;
    let c = 0.5 * varrho * varrho * (xi - upsilon);
    let quad = Quadrature::default();
    let points = grid.max(2);
    let mut lowest = f64::INFINITY;
    for g in 0..points {
        let p = -10.0 + 20.0 * g as f64 / (points - 1) as f64;
        let value = match kind {
            ModelKind::SkIsing | ModelKind::Perceptron => 0.5 * ((c + p).exp() + (c - p).exp()),
            ModelKind::SkBox => 0.5 * tilt_integral(p, c, -1.0, 1.0, 0.0, &quad),
            ModelKind::St => {
                let prec = 2.0 * kappa - rs.require("sigma")?;
                if !(prec > 0.0) {
                    return Err(Error::Solver("ST reference measure needs 2κ − σ⁻ > 0".into()));
                }
                // E exp(c x² + p x), x ~ N(0, 1/prec), on a window around
                // the tilted mode
                let a = prec - 2.0 * c;
                if !(a > 0.0) {
                    return Err(Error::Solver("ST tilt is not integrable".into()));
                }
                let (mode, width) = (p / a, 1.0 / a.sqrt());
                let norm = (prec / (2.0 * std::f64::consts::PI)).sqrt();
                let shift = 0.5 * p * p / a;
                let panels = 24;
                let span = 24.0 * width;
                let w = span / panels as f64;
                let integral: f64 = (0..panels)
                    .map(|i| {
                        let lo = mode - 0.5 * span + w * i as f64;
                        let (cc, r) = (lo + 0.5 * w, 0.5 * w);
                        r * quad.legendre(|t| {
                            let x = cc + r * t;
                            (-0.5 * a * x * x + p * x - shift).exp()
                        })
                    })
                    .sum();
                norm * integral * shift.exp()
            }
        };
        lowest = lowest.min(value);
    }
    Ok(lowest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{cavity_decompose, sample_disorder, GardnerSize, ModelSpec, PotentialU};
    use crate::rs::{solve, SolverOptions};

    fn rs_for(decomp: &CavityDecomposition) -> RSSolution {
        solve(&truncated_rs_inputs(decomp), &Quadrature::default(), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn sk_zero_beta_partial_is_exact() {
        let spec = ModelSpec::sk_ising(0.0, 0.7);
        let d = sample_disorder(&spec, 8, 3).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        let p = predicted_product(&c, None, PredictionForm::Partial, None, None).unwrap();
        let site = [(-0.7f64).exp(), 0.7f64.exp()].map(|v| v / (2.0 * 0.7f64.cosh()));
        let t = p.table().unwrap();
        for (i, v) in t.probs.iter().enumerate() {
            let s = t.spins_of(i);
            let expect = site[(s[0] > 0.0) as usize] * site[(s[1] > 0.0) as usize];
            assert!((v - expect).abs() < 1e-15);
        }
        assert_eq!(p.kind, PredictionKind::SkPartial);
    }

    #[test]
    fn sk_partial_normalisation_against_direct_formula() {
        let spec = ModelSpec::sk_ising(0.25, 0.4);
        let d = sample_disorder(&spec, 14, 8).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        let p = predicted_product(&c, None, PredictionForm::Partial, None, None).unwrap();
        let fields = cavity_fields(&c).unwrap();
        // independent normalisation: Σ_σ Π_j e^{σ_j f_j} = Π_j 2 cosh f_j
        let z: f64 = fields.iter().map(|f| 2.0 * f.cosh()).product();
        let t = p.table().unwrap();
        for (i, v) in t.probs.iter().enumerate() {
            let s = t.spins_of(i);
            let w: f64 = s.iter().zip(&fields).map(|(s, f)| (s * f).exp()).product();
            assert!((v - w / z).abs() < 1e-12);
        }
        assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn st_free_limiting_is_exact_gaussian() {
        let spec = ModelSpec::st(GardnerSize::Fixed(6), PotentialU::zero(), 1.3, 0.0);
        let d = sample_disorder(&spec, 10, 1).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        let rs = rs_for(&c);
        let p = predicted_product(&c, Some(&rs), PredictionForm::Limiting, Some(&[0.4, -1.1]), None).unwrap();
        for s in &p.sites {
            match *s {
                SiteLaw::Gaussian { mean, var } => {
                    assert!(mean.abs() < 1e-15);
                    assert!((var - 1.0 / 2.6).abs() < 1e-12);
                }
                _ => panic!("expected a Gaussian"),
            }
        }
    }

    #[test]
    fn site_laws_are_normalised() {
        let quad = bin_quadrature();
        for law in [
            SiteLaw::Ising { field: 0.3 },
            SiteLaw::tilted(1.7, 0.4),
            SiteLaw::tilted(-6.0, 0.0),
            SiteLaw::Gaussian { mean: 0.2, var: 0.6 },
        ] {
            assert!((law.total_mass(&quad) - 1.0).abs() < 1e-10, "{law:?}");
        }
        // closed form for a pure exponential tilt
        let SiteLaw::Tilted { log_norm, .. } = SiteLaw::tilted(2.0, 0.0) else { unreachable!() };
        assert!((log_norm - (2f64.sinh()).ln()).abs() < 1e-12);
    }

    #[test]
    fn box_limiting_uses_rs_spread() {
        let spec = ModelSpec::sk_box(0.6, 0.2);
        let d = sample_disorder(&spec, 9, 1).unwrap();
        let c = cavity_decompose(&spec, &d, 1).unwrap();
        let rs = rs_for(&c);
        let p = predicted_product(&c, Some(&rs), PredictionForm::Limiting, Some(&[0.5]), None).unwrap();
        let bm = c.truncated_spec.beta;
        let (q, rho) = (rs.get("q").unwrap(), rs.get("rho").unwrap());
        match p.sites[0] {
            SiteLaw::Tilted { linear, quadratic, .. } => {
                assert!((linear - (bm * q.sqrt() * 0.5 + 0.2)).abs() < 1e-14);
                assert!((quadratic - 0.5 * bm * bm * (rho - q)).abs() < 1e-14);
            }
            _ => panic!(),
        }
        assert!(predicted_product(&c, None, PredictionForm::Limiting, Some(&[0.5]), None).is_err());
        assert!(predicted_product(&c, Some(&rs), PredictionForm::Partial, None, None).is_err());
    }

    #[test]
    fn mismatched_solution_rejected() {
        let spec = ModelSpec::sk_ising(0.3, 0.1);
        let d = sample_disorder(&spec, 8, 1).unwrap();
        let c = cavity_decompose(&spec, &d, 1).unwrap();
        let other = solve(&RsInputs::SkBox { beta: 0.3, h: 0.1 }, &Quadrature::default(), &SolverOptions::default()).unwrap();
        assert!(predicted_product(&c, Some(&other), PredictionForm::Limiting, Some(&[0.0]), None).is_err());
    }

    #[test]
    fn e_ge_one_for_each_model() {
        let q = Quadrature::default();
        let o = SolverOptions::default();
        let sk = solve(&RsInputs::SkIsing { beta: 0.5, h: 0.3 }, &q, &o).unwrap();
        assert!(e_ge_one_min(ModelKind::SkIsing, &sk, 0.5, 0.0, 101).unwrap() >= 1.0 - 1e-9);
        let bx = solve(&RsInputs::SkBox { beta: 0.5, h: 0.3 }, &q, &o).unwrap();
        assert!(e_ge_one_min(ModelKind::SkBox, &bx, 0.5, 0.0, 101).unwrap() >= 1.0 - 1e-9);
        let u = PotentialU::new(crate::models::Potential::NegLogCosh { amp: 0.5, slope: 1.0 });
        let st = solve(&RsInputs::St { alpha: 0.5, u, kappa: 2.0, h: 0.2, shrink: 1.0 }, &q, &o).unwrap();
        let v = e_ge_one_min(ModelKind::St, &st, 1.0, 2.0, 101).unwrap();
        // closed form at P = 0: (1 − (τ − r)/(2κ − σ))^{-1/2}
        let (r, tau, sigma) = (st.get("r").unwrap(), st.get("tau").unwrap(), st.get("sigma").unwrap());
        let at_zero = (1.0 - (tau - r) / (4.0 - sigma)).powf(-0.5);
        assert!((v - at_zero).abs() < 1e-10, "{v} vs {at_zero}");
        assert!(v >= 1.0 - 1e-9);
    }
}
