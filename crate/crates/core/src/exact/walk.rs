//! Reflected-binary Gray-code walk over `{±1}^n` with incremental energy.
//!
//! Bit `i` of the state word is site `i`; a set bit means `x_i = +1`. The
//! walk starts at all `-1` and at step `t` flips bit `trailing_zeros(t)`.

use crate::models::{Disorder, ModelKind, ModelSpec, PotentialU};

/// Steps between full recomputations of the incremental quantities.
pub const RESYNC_PERIOD: u64 = 1 << 16;

pub(crate) trait GrayState {
    /// Current `-H(x)`.
    fn log_weight(&self) -> f64;
    fn flip(&mut self, site: usize);
    /// Recomputes everything from the spin vector.
    fn resync(&mut self);
    fn spins(&self) -> &[f64];
    /// Constraint fields and potential, for Gardner states.
    fn gardner_view(&self) -> Option<(&[f64], &PotentialU)> {
        None
    }
}

pub(crate) fn gray_walk<S: GrayState, F: FnMut(u64, &S)>(state: &mut S, n: usize, mut visit: F) {
    debug_assert!(state.spins().iter().all(|&x| x == -1.0));
    let mut bits = 0u64;
    visit(bits, state);
    let total = 1u64 << n;
    for t in 1..total {
        let site = t.trailing_zeros() as usize;
        bits ^= 1 << site;
        state.flip(site);
        if t % RESYNC_PERIOD == 0 {
            state.resync();
        }
        visit(bits, state);
    }
}

/// SK-type state; maintains the local fields `L_i = Σ_j J_ij x_j`.
pub(crate) struct SkState {
    n: usize,
    /// `β/√N · g`, dense symmetric.
    coupling: Vec<f64>,
    h: f64,
    x: Vec<f64>,
    local: Vec<f64>,
    energy: f64,
}

impl SkState {
    pub fn new(spec: &ModelSpec, disorder: &Disorder) -> Self {
        let n = disorder.n_sites;
        let scale = spec.beta / (n as f64).sqrt();
        let mut s = Self {
            n,
            coupling: disorder.couplings.iter().map(|g| g * scale).collect(),
            h: spec.h,
            x: vec![-1.0; n],
            local: vec![0.0; n],
            energy: 0.0,
        };
        s.resync();
        s
    }
}

impl GrayState for SkState {
    #[inline]
    fn log_weight(&self) -> f64 {
        self.energy
    }

    #[inline]
    fn flip(&mut self, i: usize) {
        let xi = self.x[i];
        self.energy -= 2.0 * xi * (self.local[i] + self.h);
        let d = -2.0 * xi;
        let row = &self.coupling[i * self.n..(i + 1) * self.n];
        for (l, j) in self.local.iter_mut().zip(row) {
            *l += d * j;
        }
        self.x[i] = -xi;
    }

    fn resync(&mut self) {
        let n = self.n;
        let mut pair = 0.0;
        for i in 0..n {
            let row = &self.coupling[i * n..(i + 1) * n];
            let l: f64 = row.iter().zip(&self.x).map(|(j, x)| j * x).sum();
            self.local[i] = l;
            pair += self.x[i] * l;
        }
        self.energy = 0.5 * pair + self.h * self.x.iter().sum::<f64>();
    }

    fn spins(&self) -> &[f64] {
        &self.x
    }
}

/// Perceptron state; maintains `S_m = N^{-1/2} Σ_i g_{i,m} x_i`.
pub(crate) struct GardnerState {
    m: usize,
    /// `g / √N`, row-major `N × M`.
    scaled: Vec<f64>,
    u: PotentialU,
    x: Vec<f64>,
    fields: Vec<f64>,
    energy: f64,
}

impl GardnerState {
    pub fn new(spec: &ModelSpec, disorder: &Disorder) -> Self {
        debug_assert_eq!(spec.kind, ModelKind::Perceptron);
        let n = disorder.n_sites;
        let inv = 1.0 / (n as f64).sqrt();
        let mut s = Self {
            m: disorder.m,
            scaled: disorder.gardner.iter().map(|g| g * inv).collect(),
            u: spec.u,
            x: vec![-1.0; n],
            fields: vec![0.0; disorder.m],
            energy: 0.0,
        };
        s.resync();
        s
    }
}

impl GrayState for GardnerState {
    #[inline]
    fn log_weight(&self) -> f64 {
        self.energy
    }

    #[inline]
    fn flip(&mut self, i: usize) {
        let d = -2.0 * self.x[i];
        let row = &self.scaled[i * self.m..(i + 1) * self.m];
        let mut e = 0.0;
        for (s, g) in self.fields.iter_mut().zip(row) {
            *s += d * g;
            e += self.u.eval(*s);
        }
        self.energy = e;
        self.x[i] = -self.x[i];
    }

    fn resync(&mut self) {
        self.fields.iter_mut().for_each(|s| *s = 0.0);
        for (i, &xi) in self.x.iter().enumerate() {
            let row = &self.scaled[i * self.m..(i + 1) * self.m];
            for (s, g) in self.fields.iter_mut().zip(row) {
                *s += xi * g;
            }
        }
        self.energy = self.fields.iter().map(|&s| self.u.eval(s)).sum();
    }

    fn spins(&self) -> &[f64] {
        &self.x
    }

    fn gardner_view(&self) -> Option<(&[f64], &PotentialU)> {
        Some((&self.fields, &self.u))
    }
}

/// Index of the `k`-marginal cell of a state word: site 0 is the most
/// significant digit, `-1 < +1`.
#[inline]
pub(crate) fn marginal_index(bits: u64, k: usize, reverse: &[usize]) -> usize {
    reverse[(bits & ((1u64 << k) - 1)) as usize]
}

/// Lookup from the low `k` state bits to the marginal index.
pub(crate) fn reverse_table(k: usize) -> Vec<usize> {
    (0..1usize << k)
        .map(|b| (0..k).fold(0, |acc, j| acc | ((b >> j) & 1) << (k - 1 - j)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::energy::log_weight;
    use crate::models::{sample_disorder, GardnerSize, Potential};

    fn check_walk<S: GrayState>(mut state: S, spec: &ModelSpec, d: &Disorder) {
        let n = d.n_sites;
        let mut seen = vec![false; 1 << n];
        gray_walk(&mut state, n, |bits, s| {
            assert!(!seen[bits as usize]);
            seen[bits as usize] = true;
            let x: Vec<f64> = (0..n).map(|i| if bits >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
            assert_eq!(s.spins(), &x[..]);
            assert!((s.log_weight() - log_weight(spec, d, &x)).abs() < 1e-12);
        });
        assert!(seen.iter().all(|&v| v));
    }

    #[test]
    fn sk_walk_tracks_energy() {
        let spec = ModelSpec::sk_ising(0.8, 0.3);
        let d = sample_disorder(&spec, 9, 4).unwrap();
        check_walk(SkState::new(&spec, &d), &spec, &d);
    }

    #[test]
    fn gardner_walk_tracks_energy() {
        let u = PotentialU::new(Potential::Tanh { amp: 0.7, slope: 1.3, shift: 0.1 });
        let spec = ModelSpec::perceptron(GardnerSize::Fixed(4), u);
        let d = sample_disorder(&spec, 8, 2).unwrap();
        check_walk(GardnerState::new(&spec, &d), &spec, &d);
    }

    #[test]
    fn reverse_table_orders_site_zero_first() {
        let r = reverse_table(2);
        // bits (b1 b0): site0 = b0 is the high digit
        assert_eq!(r, vec![0, 2, 1, 3]);
    }
}
