//! The constant `C` of the abstract local-independence bound, as a
//! diagnostic. Reported on the log scale, since it grows like `exp(a k²)`.
//!
//! With `S = Σ_j |x_j|` and `a = 4kp²ϱ²(D² + Ξ)(1 + 4ε̄²)`,
//! `C = E ∫ S exp(a S² + Σ_j f_j(x_j)) μ^{⊗k}(dx)`. Writing
//! `exp(a S²) = E_z exp(t S)`, `t = √(2a) z`, the integral factorises:
//! `C = E_z k F(t)^{k−1} F′(t)` with `F(t) = ∫ exp(t|x| + f(x)) μ(dx)`.

use crate::error::Result;
use crate::numerics::{normal_cdf, LogSumExp};
use crate::rs::{RSSolution, RsInputs};

use super::predict::xi_upsilon;

/// `ε` of the `N^{-(1/2 − ε)}` rate used for the reported constant.
pub const C_EPSILON: f64 = 0.1;

/// `a = 4kp²ϱ²(D² + Ξ)(1 + 4ε̄²)` for the truncated system behind `rs`.
pub fn exponent_coefficient(rs: &RSSolution, k: usize, p: u32, eps: f64) -> Result<f64> {
    let (xi, _) = xi_upsilon(rs.kind, rs)?;
    let (varrho, d_sq) = match &rs.inputs {
        RsInputs::SkIsing { beta, .. } | RsInputs::SkBox { beta, .. } => (*beta, 1.0),
        RsInputs::Perceptron { alpha, u, shrink } | RsInputs::St { alpha, u, shrink, .. } => {
            let d = shrink * u.grid_sup(1);
            (1.0, alpha * d * d)
        }
    };
    let eps_bar = 1.0 / (2.0 * eps) - 1.0;
    let p = p as f64;
    Ok(4.0 * k as f64 * p * p * varrho * varrho * (d_sq + xi) * (1.0 + 4.0 * eps_bar * eps_bar))
}

/// `ln C`, or `None` when the integral diverges (ST with `κ` too small).
pub fn log_abstract_constant(rs: &RSSolution, k: usize, p: u32, eps: f64) -> Result<Option<f64>> {
    let a = exponent_coefficient(rs, k, p, eps)?;
    let kf = k as f64;
    Ok(match &rs.inputs {
        RsInputs::SkIsing { h, .. } => Some(kf.ln() + a * kf * kf + kf * h.cosh().ln()),
        RsInputs::Perceptron { .. } => Some(kf.ln() + a * kf * kf),
        RsInputs::SkBox { h, .. } => {
            let h = *h;
            let top = (2.0 * a).sqrt() * kf + 40.0;
            Some(mixture(a, k, -40.0, top, 0.02, |t| box_logs(t, h)))
        }
        RsInputs::St { kappa, h, .. } => {
            // E_g exp(h g x) = exp(h² x²/2) folds the random field into the width
            let c = kappa - 0.5 * rs.require("sigma")? - 0.5 * h * h;
            let slack = 1.0 - a * kf / c;
            if !(c > 0.0 && slack > 0.0) {
                return Ok(None);
            }
            let width = 1.0 / slack.sqrt();
            Some(mixture(a, k, -40.0 * width, 40.0 * width, 0.05 * width, |t| gauss_logs(t, c)))
        }
    })
}

/// `ln E_z k F(t)^{k−1} F′(t)` by the trapezoid rule in `z`; `logs(t)`
/// returns `(ln F, ln F′)`.
fn mixture(a: f64, k: usize, lo: f64, hi: f64, step: f64, logs: impl Fn(f64) -> (f64, f64)) -> f64 {
    let scale = (2.0 * a).sqrt();
    let points = ((hi - lo) / step).ceil() as usize;
    let mut acc = LogSumExp::new();
    for i in 0..=points {
        let z = lo + (hi - lo) * i as f64 / points as f64;
        let (lf, ldf) = logs(scale * z);
        let e = -0.5 * z * z + (k - 1) as f64 * lf + ldf;
        if e.is_finite() {
            acc.push(e);
        }
    }
    let dz = (hi - lo) / points as f64;
    acc.value() + dz.ln() + (k as f64).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `ln(expm1(s)/s) = ln ∫_0^1 e^{sx} dx`.
fn log_phi0(s: f64) -> f64 {
    if s.abs() < 1e-8 {
        0.5 * s
    } else if s > 0.0 {
        s + (-(-s).exp_m1()).ln() - s.ln()
    } else {
        (-s.exp_m1()).ln() - (-s).ln()
    }
}

/// `ln ∫_0^1 x e^{sx} dx`.
fn log_phi1(s: f64) -> f64 {
    if s.abs() < 1e-3 {
        (0.5 + s / 3.0 + s * s / 8.0).ln()
    } else if s > 1.0 {
        s + ((s - 1.0 + (-s).exp()) / (s * s)).ln()
    } else {
        ((s.exp() * (s - 1.0) + 1.0) / (s * s)).ln()
    }
}

fn log_add(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// Uniform probability on `[-1, 1]` tilted by `h x`: by symmetry
/// `F(t) = ∫_0^1 e^{tx} cosh(hx) dx`.
fn box_logs(t: f64, h: f64) -> (f64, f64) {
    let half = 0.5f64.ln();
    (
        half + log_add(log_phi0(t + h), log_phi0(t - h)),
        half + log_add(log_phi1(t + h), log_phi1(t - h)),
    )
}

/// Lebesgue measure with weight `e^{-c x²}`:
/// `F(t) = 2√(π/c) e^{t²/4c} Φ(t/√(2c))`, `F′(t) = 1/c + t F(t)/(2c)`.
fn gauss_logs(t: f64, c: f64) -> (f64, f64) {
    let lf = (4.0 * std::f64::consts::PI / c).ln() * 0.5 + t * t / (4.0 * c) + normal_cdf(t / (2.0 * c).sqrt()).ln();
    let df = 1.0 / c + t * lf.exp() / (2.0 * c);
    (lf, if df > 0.0 { df.ln() } else { f64::NEG_INFINITY })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Potential, PotentialU};
    use crate::rs::{solve, Quadrature, SolverOptions};

    fn sol(inputs: RsInputs) -> RSSolution {
        solve(&inputs, &Quadrature::default(), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn box_mixture_matches_tensor_quadrature() {
        let rs = sol(RsInputs::SkBox { beta: 0.1, h: 0.4 });
        let k = 2;
        let a = exponent_coefficient(&rs, k, 1, 0.4).unwrap();
        let got = log_abstract_constant(&rs, k, 1, 0.4).unwrap().unwrap();
        // direct ∫∫ over [0,1]², 400 midpoints a side
        let m = 400;
        let mut acc = LogSumExp::new();
        for i in 0..m {
            for j in 0..m {
                let (x, y) = ((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
                let s = x + y;
                acc.push(s.ln() + a * s * s + (0.4 * x).cosh().ln() + (0.4 * y).cosh().ln());
            }
        }
        let direct = acc.value() - 2.0 * (m as f64).ln();
        assert!((got - direct).abs() < 1e-4, "{got} vs {direct}");
    }

    #[test]
    fn st_mixture_matches_closed_form_at_k1() {
        let u = PotentialU::new(Potential::NegLogCosh { amp: 0.05, slope: 1.0 });
        let rs = sol(RsInputs::St { alpha: 0.2, u, kappa: 400.0, h: 0.3, shrink: 1.0 });
        let a = exponent_coefficient(&rs, 1, 1, 0.1).unwrap();
        let c = 400.0 - 0.5 * rs.get("sigma").unwrap() - 0.045;
        // ∫ |x| e^{-(c − a) x²} dx = 1/(c − a)
        let want = -(c - a).ln();
        let got = log_abstract_constant(&rs, 1, 1, 0.1).unwrap().unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn st_below_threshold_diverges() {
        let u = PotentialU::new(Potential::NegLogCosh { amp: 0.5, slope: 1.0 });
        let rs = sol(RsInputs::St { alpha: 0.5, u, kappa: 2.0, h: 0.2, shrink: 1.0 });
        assert_eq!(log_abstract_constant(&rs, 2, 1, 0.1).unwrap(), None);
    }

    #[test]
    fn ising_mixture_agrees_with_the_sum() {
        let rs = sol(RsInputs::SkIsing { beta: 0.2, h: 0.5 });
        let a = exponent_coefficient(&rs, 3, 1, 0.1).unwrap();
        let closed = log_abstract_constant(&rs, 3, 1, 0.1).unwrap().unwrap();
        let via = mixture(a, 3, -40.0, (2.0 * a).sqrt() * 3.0 + 40.0, 0.02, |t| (t + 0.5f64.cosh().ln(), t + 0.5f64.cosh().ln()));
        assert!((closed - via).abs() < 1e-9 * closed.abs(), "{closed} vs {via}");
    }
}
