use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grid points and half-width used to certify derivative bounds.
pub const GRID_POINTS: usize = 10_000;
pub const GRID_HALF_WIDTH: f64 = 10.0;

/// Smooth potential families available for the Gardner models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Potential {
    /// `u ≡ 0`.
    Zero,
    /// `u(x) = amp · tanh(slope · x + shift)`.
    Tanh { amp: f64, slope: f64, shift: f64 },
    /// `u(x) = -amp · log cosh(slope · x)`; nonpositive and concave for `amp ≥ 0`.
    NegLogCosh { amp: f64, slope: f64 },
    /// `u(x) = amp · exp(-x² / (2 width²))`.
    GaussBump { amp: f64, width: f64 },
}

fn log_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl Potential {
    /// `d`-th derivative, `d ≤ 4`.
    pub fn deriv(&self, d: usize, x: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::Tanh { amp, slope, shift } => {
                let t = (slope * x + shift).tanh();
                let s2 = 1.0 - t * t;
                let f = match d {
                    0 => t,
                    1 => s2,
                    2 => -2.0 * t * s2,
                    3 => -2.0 * s2 * (1.0 - 3.0 * t * t),
                    4 => s2 * t * (16.0 - 24.0 * t * t),
                    _ => panic!("derivative order {d} not supported"),
                };
                amp * slope.powi(d as i32) * f
            }
            Potential::NegLogCosh { amp, slope } => {
                let y = slope * x;
                let f = match d {
                    0 => -log_cosh(y),
                    _ => {
                        let t = y.tanh();
                        let s2 = 1.0 - t * t;
                        match d {
                            1 => -t,
                            2 => -s2,
                            3 => 2.0 * t * s2,
                            4 => 2.0 * s2 * (1.0 - 3.0 * t * t),
                            _ => panic!("derivative order {d} not supported"),
                        }
                    }
                };
                amp * slope.powi(d as i32) * f
            }
            Potential::GaussBump { amp, width } => {
                let y = x / width;
                let e = (-0.5 * y * y).exp();
                let y2 = y * y;
                let f = match d {
                    0 => 1.0,
                    1 => -y,
                    2 => y2 - 1.0,
                    3 => y * (3.0 - y2),
                    4 => y2 * y2 - 6.0 * y2 + 3.0,
                    _ => panic!("derivative order {d} not supported"),
                };
                amp * width.powi(-(d as i32)) * f * e
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Potential::Zero => true,
            Potential::Tanh { amp, .. }
            | Potential::NegLogCosh { amp, .. }
            | Potential::GaussBump { amp, .. } => amp == 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Potential::Zero => true,
            Potential::Tanh { amp, slope, shift } => {
                amp.is_finite() && slope.is_finite() && shift.is_finite()
            }
            Potential::NegLogCosh { amp, slope } => amp.is_finite() && slope.is_finite(),
            Potential::GaussBump { amp, width } => amp.is_finite() && width > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::param("u", format!("bad potential parameters {self:?}")))
        }
    }

    /// Parses `zero`, `tanh(a, b, c)`, `neg_log_cosh(a, b)`, `gauss_bump(a, w)`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = |msg: String| Error::param("u", msg);
        let (name, args) = match text.find('(') {
            None => (text, Vec::new()),
            Some(open) => {
                let inner = text[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| bad(format!("unbalanced parentheses in `{text}`")))?;
                let args = inner
                    .split(',')
                    .map(|s| s.trim())
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| bad(format!("`{s}` is not a number")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                (text[..open].trim(), args)
            }
        };
        let want = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(bad(format!("`{name}` takes {n} arguments, got {}", args.len())))
            }
        };
        let p = match name {
            "zero" => {
                want(0)?;
                Potential::Zero
            }
            "tanh" => {
                want(3)?;
                Potential::Tanh {
                    amp: args[0],
                    slope: args[1],
                    shift: args[2],
                }
            }
            "neg_log_cosh" => {
                want(2)?;
                Potential::NegLogCosh {
                    amp: args[0],
                    slope: args[1],
                }
            }
            "gauss_bump" => {
                want(2)?;
                Potential::GaussBump {
                    amp: args[0],
                    width: args[1],
                }
            }
            other => return Err(bad(format!("unknown potential family `{other}`"))),
        };
        p.validate()?;
        Ok(p)
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Potential::Zero => write!(f, "zero"),
            Potential::Tanh { amp, slope, shift } => write!(f, "tanh({amp}, {slope}, {shift})"),
            Potential::NegLogCosh { amp, slope } => write!(f, "neg_log_cosh({amp}, {slope})"),
            Potential::GaussBump { amp, width } => write!(f, "gauss_bump({amp}, {width})"),
        }
    }
}

/// A potential `u`, optionally composed with an argument rescaling
/// `ũ(y) = u(scale · y)` as used by truncated systems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialU {
    pub family: Potential,
    pub scale: f64,
}

impl PotentialU {
    pub fn new(family: Potential) -> Self {
        Self { family, scale: 1.0 }
    }

    pub fn zero() -> Self {
        Self::new(Potential::Zero)
    }

    /// `y ↦ self(shrink · y)`.
    pub fn shrunk(&self, shrink: f64) -> Self {
        Self {
            family: self.family,
            scale: self.scale * shrink,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.family.deriv(0, self.scale * x)
    }

    #[inline]
    pub fn d1(&self, x: f64) -> f64 {
        self.scale * self.family.deriv(1, self.scale * x)
    }

    #[inline]
    pub fn d2(&self, x: f64) -> f64 {
        self.scale * self.scale * self.family.deriv(2, self.scale * x)
    }

    pub fn deriv(&self, d: usize, x: f64) -> f64 {
        self.scale.powi(d as i32) * self.family.deriv(d, self.scale * x)
    }

    pub fn is_zero(&self) -> bool {
        self.family.is_zero()
    }

    fn grid() -> impl Iterator<Item = f64> {
        let step = 2.0 * GRID_HALF_WIDTH / (GRID_POINTS - 1) as f64;
        (0..GRID_POINTS).map(move |i| -GRID_HALF_WIDTH + step * i as f64)
    }

    /// Largest `|u^(d)|` over the certification grid.
    pub fn grid_sup(&self, d: usize) -> f64 {
        Self::grid()
            .map(|x| self.deriv(d, x).abs())
            .fold(0.0, f64::max)
    }

    /// `max_d grid_sup(d)` over the listed orders.
    pub fn bound(&self, orders: &[usize]) -> f64 {
        orders.iter().map(|&d| self.grid_sup(d)).fold(0.0, f64::max)
    }

    pub fn concave_on_grid(&self) -> bool {
        Self::grid().all(|x| self.d2(x) <= 0.0)
    }

    pub fn nonpositive_on_grid(&self) -> bool {
        Self::grid().all(|x| self.eval(x) <= 0.0)
    }

    /// `u(x) ≥ -bound · (1 + |x|)` on the grid.
    pub fn linear_growth_on_grid(&self, bound: f64) -> bool {
        Self::grid().all(|x| self.eval(x) >= -bound * (1.0 + x.abs()))
    }

    /// Checks `|u^(d)| ≤ D` for `0 ≤ d ≤ 3` and returns `D`.
    pub fn validate_perceptron(&self) -> Result<f64> {
        self.family.validate()?;
        let d = self.bound(&[0, 1, 2, 3]);
        if !d.is_finite() {
            return Err(Error::param("u", "derivative bound is not finite"));
        }
        Ok(d.max(f64::MIN_POSITIVE))
    }

    /// Checks the ST requirements (`u ≤ 0`, concave, bounded derivatives of
    /// orders 1–4, linear growth) and returns `D`.
    pub fn validate_st(&self) -> Result<f64> {
        self.family.validate()?;
        let d = self.bound(&[1, 2, 3, 4]).max(f64::MIN_POSITIVE);
        if !self.nonpositive_on_grid() {
            return Err(Error::param("u", "ST potential must satisfy u ≤ 0"));
        }
        if !self.concave_on_grid() {
            return Err(Error::param("u", "ST potential must be concave"));
        }
        if !self.linear_growth_on_grid(d) {
            return Err(Error::param("u", "ST potential violates u(x) ≥ -D(1+|x|)"));
        }
        Ok(d)
    }
}

impl fmt::Display for PotentialU {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 1.0 {
            write!(f, "{}", self.family)
        } else {
            write!(f, "{}∘×{}", self.family, self.scale)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn families() -> Vec<Potential> {
        vec![
            Potential::Tanh {
                amp: 0.7,
                slope: 1.3,
                shift: 0.2,
            },
            Potential::NegLogCosh {
                amp: 0.4,
                slope: 0.9,
            },
            Potential::GaussBump {
                amp: -0.5,
                width: 1.2,
            },
        ]
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-4;
        for p in families() {
            let u = PotentialU::new(p).shrunk(0.8);
            for &x in &[-2.3, -0.4, 0.0, 0.7, 1.9] {
                for d in 1..=4 {
                    let fd = (u.deriv(d - 1, x + h) - u.deriv(d - 1, x - h)) / (2.0 * h);
                    let exact = u.deriv(d, x);
                    assert!(
                        (fd - exact).abs() < 1e-6 * (1.0 + exact.abs()),
                        "{p:?} d={d} x={x}: fd {fd} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn neg_log_cosh_meets_st_assumptions() {
        let u = PotentialU::new(Potential::NegLogCosh { amp: 0.3, slope: 1.0 });
        let d = u.validate_st().unwrap();
        assert!(d >= 0.3 && d < 1.0);
    }

    #[test]
    fn tanh_is_rejected_for_st() {
        let u = PotentialU::new(Potential::Tanh {
            amp: 0.3,
            slope: 1.0,
            shift: 0.0,
        });
        assert!(u.validate_st().is_err());
        assert!(u.validate_perceptron().is_ok());
    }

    #[test]
    fn parse_roundtrip() {
        for p in families().into_iter().chain([Potential::Zero]) {
            let text = p.to_string();
            assert_eq!(Potential::parse(&text).unwrap(), p);
        }
        assert!(Potential::parse("tanh(1, 2)").is_err());
        assert!(Potential::parse("cubic(1)").is_err());
    }

    #[test]
    fn shrink_chain_rule() {
        let u = PotentialU::new(families()[0]);
        let s = (998.0f64 / 1000.0).sqrt();
        let ut = u.shrunk(s);
        for &y in &[-1.5, 0.3, 2.2] {
            assert!((ut.d1(y) - s * u.d1(s * y)).abs() < 1e-15);
        }
    }
}
