//! Small numerical building blocks shared by the exact, sampling and
//! verification layers.

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn scale(&mut self, factor: f64) {
        self.sum *= factor;
        self.comp *= factor;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Pairwise (cascade) summation; the result does not depend on how the
/// input was produced, only on its order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Streaming accumulator of `log Σ exp(e_t)` that keeps a running reference
/// exponent. Companion accumulators registered with the same reference are
/// rescaled through [`ScaledSums`].
#[derive(Clone, Debug)]
pub struct LogSumExp {
    reference: f64,
    total: Compensated,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            reference: f64::NEG_INFINITY,
            total: Compensated::new(),
        }
    }
}

impl LogSumExp {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: f64) {
        if e > self.reference {
            let factor = (self.reference - e).exp();
            self.total.scale(factor);
            self.reference = e;
        }
        self.total.add((e - self.reference).exp());
    }

    pub fn value(&self) -> f64 {
        self.reference + self.total.value().ln()
    }
}

/// A bank of compensated sums of `w_t · v_t` where `w_t = exp(e_t - ref)`.
/// The reference is only raised when an exponent exceeds it by more than
/// [`ScaledSums::HEADROOM`], so rescaling is rare.
#[derive(Clone, Debug)]
pub struct ScaledSums {
    reference: f64,
    pub sums: Vec<Compensated>,
}

impl ScaledSums {
    pub const HEADROOM: f64 = 40.0;

    pub fn new(len: usize) -> Self {
        Self {
            reference: f64::NEG_INFINITY,
            sums: vec![Compensated::new(); len],
        }
    }

    /// Returns the weight `exp(e - ref)` to be used for this term, after
    /// raising the reference if needed.
    #[inline]
    pub fn weight(&mut self, e: f64) -> f64 {
        if e > self.reference + Self::HEADROOM || self.reference == f64::NEG_INFINITY {
            if self.reference.is_finite() {
                let factor = (self.reference - e).exp();
                for s in &mut self.sums {
                    s.scale(factor);
                }
            }
            self.reference = e;
        }
        (e - self.reference).exp()
    }

    #[inline]
    pub fn add(&mut self, slot: usize, x: f64) {
        self.sums[slot].add(x);
    }

    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn value(&self, slot: usize) -> f64 {
        self.sums[slot].value()
    }
}

/// In-place fast Walsh-Hadamard transform (unnormalised). After the call,
/// `a[s] = Σ_t a_in[t] · (-1)^{popcount(s & t)}`.
pub fn fwht(a: &mut [f64]) {
    let n = a.len();
    assert!(n.is_power_of_two(), "fwht length must be a power of two");
    let mut h = 1;
    while h < n {
        for block in a.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `log(2 cosh x)` without overflow.
pub fn log_2cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p()
}

/// Sample mean and unbiased variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_mean(xs);
    if n < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, pairwise_sum(&dev) / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_recovers_small_terms() {
        let mut c = Compensated::new();
        c.add(1e16);
        for _ in 0..1000 {
            c.add(1.0);
        }
        c.add(-1e16);
        assert_eq!(c.value(), 1000.0);
    }

    #[test]
    fn logsumexp_matches_direct() {
        let es = [-3.0, 700.0, 2.5, 699.0, -1000.0];
        let mut l = LogSumExp::new();
        for &e in &es {
            l.push(e);
        }
        let direct = 700.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((l.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn fwht_of_delta_is_character() {
        let mut a = vec![0.0; 8];
        a[5] = 1.0;
        fwht(&mut a);
        for (s, v) in a.iter().enumerate() {
            let sign = if (s & 5).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(*v, sign);
        }
    }

    #[test]
    fn log_2cosh_large_argument() {
        assert!((log_2cosh(1000.0) - 1000.0).abs() < 1e-12);
        assert!((log_2cosh(0.3) - (2.0 * 0.3f64.cosh()).ln()).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.3) + normal_cdf(-1.3) - 1.0).abs() < 1e-15);
    }
}
