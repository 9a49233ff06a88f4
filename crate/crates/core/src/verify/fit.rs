//! Log-log slope of a statistic against system size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jackknife groups per size.
pub const JACKKNIFE_GROUPS: usize = 20;
/// Two-sided 97.5% quantile of Student's t with 19 degrees of freedom.
const T_19: f64 = 2.093;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl SlopeFit {
    pub fn excludes_zero(&self) -> bool {
        self.ci_high < 0.0 || self.ci_low > 0.0
    }
}

/// Ordinary least squares of `log y` on `log n`.
pub fn ols_loglog(ns: &[usize], ys: &[f64]) -> Result<(f64, f64)> {
    if ns.len() != ys.len() || ns.len() < 2 {
        return Err(Error::param("fit", "need at least two (N, value) pairs"));
    }
    if ys.iter().any(|y| !(*y > 0.0)) {
        return Err(Error::param("fit", "values must be positive for a log-log fit"));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Slope with a delete-a-group jackknife interval. `samples[i]` are the
/// per-disorder values at size `ns[i]`; the statistic is their mean.
pub fn fit_slope(ns: &[usize], samples: &[Vec<f64>]) -> Result<SlopeFit> {
    if ns.len() != samples.len() {
        return Err(Error::DimensionMismatch { what: "fit sizes", expected: ns.len(), got: samples.len() });
    }
    if samples.iter().any(|s| s.len() < JACKKNIFE_GROUPS) {
        return Err(Error::param("fit", format!("need at least {JACKKNIFE_GROUPS} disorders per size")));
    }
    let means: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let (slope, intercept) = ols_loglog(ns, &means)?;
    let g = JACKKNIFE_GROUPS;
    let mut leave = Vec::with_capacity(g);
    for drop in 0..g {
        let ys: Vec<f64> = samples
            .iter()
            .map(|s| {
                let (sum, cnt) = s
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| i * g / s.len() != drop)
                    .fold((0.0, 0usize), |(a, c), (_, v)| (a + v, c + 1));
                sum / cnt as f64
            })
            .collect();
        leave.push(ols_loglog(ns, &ys)?.0);
    }
    let bar = leave.iter().sum::<f64>() / g as f64;
    let var = (g - 1) as f64 / g as f64 * leave.iter().map(|s| (s - bar).powi(2)).sum::<f64>();
    let se = var.sqrt();
    Ok(SlopeFit { slope, intercept, se, ci_low: slope - T_19 * se, ci_high: slope + T_19 * se })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let ns = [8, 16, 32];
        let ys: Vec<f64> = ns.iter().map(|&n| 3.0 * (n as f64).powf(-0.5)).collect();
        let (s, b) = ols_loglog(&ns, &ys).unwrap();
        assert!((s + 0.5).abs() < 1e-12);
        assert!((b - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law_ci() {
        use crate::seed::rng_from_u64;
        use rand::Rng;
        let mut rng = rng_from_u64(3);
        let ns = [8, 12, 16, 20];
        let samples: Vec<Vec<f64>> = ns
            .iter()
            .map(|&n| (0..400).map(|_| (1.0 / n as f64) * rng.gen_range(0.5..1.5)).collect())
            .collect();
        let f = fit_slope(&ns, &samples).unwrap();
        assert!(f.ci_low < -1.0 && -1.0 < f.ci_high, "{f:?}");
        assert!(f.excludes_zero());
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(ols_loglog(&[1, 2], &[1.0, 0.0]).is_err());
        assert!(ols_loglog(&[1], &[1.0]).is_err());
    }
}
