use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::potential::PotentialU;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelKind {
    /// Classical SK on `{±1}^N`.
    SkIsing,
    /// SK with spins in `[-1, 1]` (uniform reference measure tilted by `h`).
    SkBox,
    /// Ising perceptron.
    Perceptron,
    /// Shcherbina-Tirozzi model on `ℝ^N`.
    St,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SkIsing => "SK_ISING",
            ModelKind::SkBox => "SK_BOX",
            ModelKind::Perceptron => "PERCEPTRON",
            ModelKind::St => "ST",
        }
    }

    pub fn is_sk(self) -> bool {
        matches!(self, ModelKind::SkIsing | ModelKind::SkBox)
    }

    pub fn is_gardner(self) -> bool {
        matches!(self, ModelKind::Perceptron | ModelKind::St)
    }

    /// `±1` spins, hence enumerable.
    pub fn is_ising(self) -> bool {
        matches!(self, ModelKind::SkIsing | ModelKind::Perceptron)
    }

    pub fn domain(self) -> SpinDomain {
        match self {
            ModelKind::SkIsing | ModelKind::Perceptron => SpinDomain::PmOne,
            ModelKind::SkBox => SpinDomain::Box,
            ModelKind::St => SpinDomain::Real,
        }
    }

    pub fn code(self) -> u32 {
        match self {
            ModelKind::SkIsing => 1,
            ModelKind::SkBox => 2,
            ModelKind::Perceptron => 3,
            ModelKind::St => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            1 => ModelKind::SkIsing,
            2 => ModelKind::SkBox,
            3 => ModelKind::Perceptron,
            4 => ModelKind::St,
            _ => return None,
        })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "SK_ISING" | "SK" => Ok(ModelKind::SkIsing),
            "SK_BOX" => Ok(ModelKind::SkBox),
            "PERCEPTRON" => Ok(ModelKind::Perceptron),
            "ST" | "SHCHERBINA_TIROZZI" => Ok(ModelKind::St),
            other => Err(Error::param("kind", format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinDomain {
    PmOne,
    Box,
    Real,
}

impl SpinDomain {
    pub fn name(self) -> &'static str {
        match self {
            SpinDomain::PmOne => "PM_ONE",
            SpinDomain::Box => "BOX",
            SpinDomain::Real => "REAL",
        }
    }
}

/// Number of constraints of a Gardner model, fixed or proportional to `N`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GardnerSize {
    Fixed(usize),
    Ratio(f64),
}

impl GardnerSize {
    /// `M` for an `n`-site system; ratios round to nearest, minimum 1.
    pub fn m_for(&self, n: usize) -> usize {
        match *self {
            GardnerSize::Fixed(m) => m,
            GardnerSize::Ratio(alpha) => ((alpha * n as f64).round() as usize).max(1),
        }
    }
}

/// Parameters of one of the four models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Inverse temperature (SK kinds).
    pub beta: f64,
    /// External field; ST uses a per-site Gaussian field `h · g_i`.
    pub h: f64,
    /// Regulariser strength (ST).
    pub kappa: f64,
    /// Constraint count (Gardner kinds).
    pub size: Option<GardnerSize>,
    /// Potential (Gardner kinds).
    pub u: PotentialU,
}

impl ModelSpec {
    pub fn sk_ising(beta: f64, h: f64) -> Self {
        Self {
            kind: ModelKind::SkIsing,
            beta,
            h,
            kappa: 0.0,
            size: None,
            u: PotentialU::zero(),
        }
    }

    pub fn sk_box(beta: f64, h: f64) -> Self {
        Self {
            kind: ModelKind::SkBox,
            ..Self::sk_ising(beta, h)
        }
    }

    pub fn perceptron(size: GardnerSize, u: PotentialU) -> Self {
        Self {
            kind: ModelKind::Perceptron,
            beta: 0.0,
            h: 0.0,
            kappa: 0.0,
            size: Some(size),
            u,
        }
    }

    pub fn st(size: GardnerSize, u: PotentialU, kappa: f64, h: f64) -> Self {
        Self {
            kind: ModelKind::St,
            beta: 0.0,
            h,
            kappa,
            size: Some(size),
            u,
        }
    }

    pub fn m_for(&self, n: usize) -> usize {
        self.size.map(|s| s.m_for(n)).unwrap_or(0)
    }

    /// Range checks. `beta = 0` is admitted for SK kinds (the decoupled
    /// reference point); negative values are rejected.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, "must be finite"))
            }
        };
        finite("beta", self.beta)?;
        finite("h", self.h)?;
        finite("kappa", self.kappa)?;
        match self.kind {
            ModelKind::SkIsing | ModelKind::SkBox => {
                if self.beta < 0.0 {
                    return Err(Error::param("beta", format!("must be ≥ 0, got {}", self.beta)));
                }
            }
            ModelKind::Perceptron | ModelKind::St => {
                match self.size {
                    None => return Err(Error::param("M", "Gardner models need M or alpha")),
                    Some(GardnerSize::Fixed(0)) => {
                        return Err(Error::param("M", "must be at least 1"))
                    }
                    Some(GardnerSize::Ratio(a)) if !(a > 0.0 && a.is_finite()) => {
                        return Err(Error::param("alpha", format!("must be > 0, got {a}")))
                    }
                    _ => {}
                }
                if self.kind == ModelKind::Perceptron {
                    self.u.validate_perceptron()?;
                } else {
                    if self.kappa <= 0.0 {
                        return Err(Error::param(
                            "kappa",
                            format!("must be > 0, got {}", self.kappa),
                        ));
                    }
                    self.u.validate_st()?;
                }
            }
        }
        Ok(())
    }

    /// For ST: the lower bound on `κ` required by the local-independence
    /// theory at `k = 2`, `p = 1`, `ε = 0.1`, for an `n`-site system.
    pub fn st_kappa0(&self, n: usize) -> Option<f64> {
        if self.kind != ModelKind::St {
            return None;
        }
        let alpha = self.m_for(n) as f64 / n as f64;
        let d = self.u.validate_st().ok()?;
        Some(st_kappa0(alpha, d, self.h, 2, 1, 0.1))
    }

    /// A warning when an ST spec sits below `κ₀`; never an error.
    pub fn kappa_warning(&self, n: usize) -> Option<String> {
        let k0 = self.st_kappa0(n)?;
        (self.kappa < k0).then(|| {
            format!(
                "kappa = {} is below the validated threshold kappa0 = {k0:.4} (alpha = {:.3}); results are exploratory",
                self.kappa,
                self.m_for(n) as f64 / n as f64
            )
        })
    }
}

/// `max(48 k² p³ (1 + 8 ε̄²)(α D² + h²), √(150 (1 + h²)) α D⁴)` with
/// `ε̄ = 1/(2ε) − 1`.
pub fn st_kappa0(alpha: f64, d: f64, h: f64, k: usize, p: usize, eps: f64) -> f64 {
    let eps_bar = 1.0 / (2.0 * eps) - 1.0;
    let (k, p) = (k as f64, p as f64);
    let first = 48.0 * k * k * p.powi(3) * (1.0 + 8.0 * eps_bar * eps_bar) * (alpha * d * d + h * h);
    let second = (150.0 * (1.0 + h * h)).sqrt() * alpha * d.powi(4);
    first.max(second)
}

/// A point of the configuration space of some model.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinConfiguration {
    pub values: Vec<f64>,
    pub domain: SpinDomain,
}

impl SpinConfiguration {
    pub fn new(values: Vec<f64>, domain: SpinDomain) -> Result<Self> {
        let ok = match domain {
            SpinDomain::PmOne => values.iter().all(|&v| v == 1.0 || v == -1.0),
            SpinDomain::Box => values.iter().all(|&v| (-1.0..=1.0).contains(&v)),
            SpinDomain::Real => values.iter().all(|v| v.is_finite()),
        };
        if !ok {
            return Err(Error::param(
                "config",
                format!("values are not in the {} domain", domain.name()),
            ));
        }
        Ok(Self { values, domain })
    }

    pub fn pm_one(values: Vec<f64>) -> Result<Self> {
        Self::new(values, SpinDomain::PmOne)
    }

    /// `±1` configuration whose bit `i` of `bits` set means `x_i = +1`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        let values = (0..n)
            .map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 })
            .collect();
        Self {
            values,
            domain: SpinDomain::PmOne,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
