use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rs::Quadrature;

/// One-dimensional bounded Lipschitz function; a test function on `ℝ^k`
/// is the coordinatewise product `g(v) = Π_j φ(v_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TestFunction {
    Tanh,
    Cos { omega: f64 },
    /// `min(x², 1)`.
    ClippedQuadratic,
    Constant { value: f64 },
}

impl TestFunction {
    /// The default battery: `tanh`, `cos(ωx)` for `ω ∈ {0.5, 1, 2}`, and the
    /// clipped quadratic.
    pub fn battery() -> Vec<TestFunction> {
        vec![
            TestFunction::Tanh,
            TestFunction::Cos { omega: 0.5 },
            TestFunction::Cos { omega: 1.0 },
            TestFunction::Cos { omega: 2.0 },
            TestFunction::ClippedQuadratic,
        ]
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Tanh => x.tanh(),
            TestFunction::Cos { omega } => (omega * x).cos(),
            TestFunction::ClippedQuadratic => (x * x).min(1.0),
            TestFunction::Constant { value } => value,
        }
    }

    /// `g(v) = Π_j φ(v_j)`; a constant is returned as is, not raised to
    /// the `k`-th power.
    #[inline]
    pub fn eval_product(&self, v: &[f64]) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            _ => v.iter().map(|&x| self.eval(x)).product(),
        }
    }

    /// `E g(mean + spread·ξ)` for independent standard Gaussian `ξ_j`.
    pub fn gaussian_product(&self, mean: &[f64], spread: f64, quad: &Quadrature) -> f64 {
        match *self {
            TestFunction::Constant { value } => value,
            _ => mean
                .iter()
                .map(|&m| quad.gauss(|xi| self.eval(m + spread * xi)))
                .product(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TestFunction::Constant { .. })
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Tanh => write!(f, "tanh"),
            TestFunction::Cos { omega } => write!(f, "cos({omega})"),
            TestFunction::ClippedQuadratic => write!(f, "clipped_quadratic"),
            TestFunction::Constant { value } => write!(f, "constant({value})"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |name: &str| -> Option<Result<f64>> {
            let inner = s.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
            Some(inner.trim().parse::<f64>().map_err(|e| Error::param("test function", e.to_string())))
        };
        match s {
            "tanh" => return Ok(TestFunction::Tanh),
            "clipped_quadratic" => return Ok(TestFunction::ClippedQuadratic),
            _ => {}
        }
        if let Some(v) = arg("cos") {
            return Ok(TestFunction::Cos { omega: v? });
        }
        if let Some(v) = arg("constant") {
            return Ok(TestFunction::Constant { value: v? });
        }
        Err(Error::param("test function", format!("unknown `{s}`")))
    }
}
