//! Single-site Markov chains for every model kind.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Disorder, ModelKind, ModelSpec, PotentialU};

/// Sweeps between full recomputations of the incremental fields.
const RESYNC_SWEEPS: u64 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial Metropolis step for ST; tuned during burn-in.
    pub proposal_std: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { n_sweeps: 20_000, burn_in: 2_000, thin: 1, proposal_std: 0.5, seed: 0 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sweeps == 0 {
            return Err(Error::param("n_sweeps", "must be positive"));
        }
        if self.burn_in == 0 || self.burn_in >= self.n_sweeps {
            return Err(Error::param("burn_in", "must satisfy 0 < burn_in < n_sweeps"));
        }
        if self.thin == 0 {
            return Err(Error::param("thin", "must be ≥ 1"));
        }
        if !(self.proposal_std > 0.0 && self.proposal_std.is_finite()) {
            return Err(Error::param("proposal_std", "must be a positive real"));
        }
        Ok(())
    }

    pub fn kept(&self) -> usize {
        (self.n_sweeps - self.burn_in).div_ceil(self.thin)
    }
}

/// One replica: spins plus the incrementally maintained fields.
///
/// SK kinds keep `L_i = Σ_j J_ij x_j`; Gardner kinds keep
/// `S_m = N^{-1/2} Σ_i g_{i,m} x_i`.
pub struct Chain {
    kind: ModelKind,
    n: usize,
    m: usize,
    h: f64,
    kappa: f64,
    u: PotentialU,
    /// `J` (SK, `N × N`) or `g/√N` (Gardner, `N × M`).
    scaled: Vec<f64>,
    field: Vec<f64>,
    x: Vec<f64>,
    local: Vec<f64>,
    rng: ChaCha20Rng,
    step: f64,
    proposed: u64,
    accepted: u64,
    sweeps: u64,
}

impl Chain {
    /// Starts from an independent draw of the reference measure (a centred
    /// Gaussian of variance `1/(2κ)` for ST).
    pub fn new(spec: &ModelSpec, disorder: &Disorder, proposal_std: f64, mut rng: ChaCha20Rng) -> Result<Self> {
        spec.validate()?;
        if disorder.kind != spec.kind {
            return Err(Error::Unsupported(format!(
                "disorder was drawn for {} but the spec is {}",
                disorder.kind, spec.kind
            )));
        }
        let n = disorder.n_sites;
        let scaled = if spec.kind.is_sk() {
            let s = spec.beta / (n as f64).sqrt();
            disorder.couplings.iter().map(|g| g * s).collect()
        } else {
            let s = 1.0 / (n as f64).sqrt();
            disorder.gardner.iter().map(|g| g * s).collect()
        };
        let x = (0..n)
            .map(|_| match spec.kind {
                ModelKind::SkIsing | ModelKind::Perceptron => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                ModelKind::SkBox => rng.gen_range(-1.0..=1.0),
                ModelKind::St => rng.sample::<f64, _>(StandardNormal) / (2.0 * spec.kappa).sqrt(),
            })
            .collect();
        let mut c = Self {
            kind: spec.kind,
            n,
            m: disorder.m,
            h: spec.h,
            kappa: spec.kappa,
            u: spec.u,
            scaled,
            field: disorder.field.clone(),
            x,
            local: vec![0.0; if spec.kind.is_sk() { n } else { disorder.m }],
            rng,
            step: proposal_std,
            proposed: 0,
            accepted: 0,
            sweeps: 0,
        };
        c.resync();
        Ok(c)
    }

    pub fn spins(&self) -> &[f64] {
        &self.x
    }

    /// Constraint fields `S_m` (Gardner kinds) or local fields (SK kinds).
    pub fn fields(&self) -> &[f64] {
        &self.local
    }

    pub fn potential(&self) -> &PotentialU {
        &self.u
    }

    pub fn proposal_std(&self) -> f64 {
        self.step
    }

    pub fn set_proposal_std(&mut self, s: f64) {
        self.step = s;
    }

    /// `(accepted, proposed)` Metropolis moves since the last reset.
    pub fn acceptance_counts(&self) -> (u64, u64) {
        (self.accepted, self.proposed)
    }

    pub fn reset_acceptance(&mut self) {
        self.accepted = 0;
        self.proposed = 0;
    }

    fn resync(&mut self) {
        if self.kind.is_sk() {
            let n = self.n;
            for i in 0..n {
                let row = &self.scaled[i * n..(i + 1) * n];
                self.local[i] = row.iter().zip(&self.x).map(|(j, x)| j * x).sum();
            }
        } else {
            let m = self.m;
            self.local.iter_mut().for_each(|s| *s = 0.0);
            for (i, &xi) in self.x.iter().enumerate() {
                for (s, g) in self.local.iter_mut().zip(&self.scaled[i * m..(i + 1) * m]) {
                    *s += xi * g;
                }
            }
        }
    }

    fn set_spin(&mut self, i: usize, new: f64) {
        let d = new - self.x[i];
        if d == 0.0 {
            return;
        }
        if self.kind.is_sk() {
            let n = self.n;
            // J is symmetric, so row i holds column i
            for (l, j) in self.local.iter_mut().zip(&self.scaled[i * n..(i + 1) * n]) {
                *l += d * j;
            }
        } else {
            let m = self.m;
            for (s, g) in self.local.iter_mut().zip(&self.scaled[i * m..(i + 1) * m]) {
                *s += d * g;
            }
        }
        self.x[i] = new;
    }

    /// Change of `Σ_m u(S_m)` when site `i` moves by `d`.
    fn gardner_delta(&self, i: usize, d: f64) -> f64 {
        let m = self.m;
        let row = &self.scaled[i * m..(i + 1) * m];
        self.local
            .iter()
            .zip(row)
            .map(|(&s, g)| self.u.eval(s + d * g) - self.u.eval(s))
            .sum()
    }

    /// One heat-bath or Metropolis update of site `i`.
    pub fn update_site(&mut self, i: usize) {
        match self.kind {
            ModelKind::SkIsing => {
                let f = self.local[i] + self.h;
                let p_up = 1.0 / (1.0 + (-2.0 * f).exp());
                let new = if self.rng.gen::<f64>() < p_up { 1.0 } else { -1.0 };
                self.set_spin(i, new);
            }
            ModelKind::SkBox => {
                let a = self.local[i] + self.h;
                let u: f64 = self.rng.gen();
                self.set_spin(i, sample_exp_tilt(a, u));
            }
            ModelKind::Perceptron => {
                let xi = self.x[i];
                let m = self.m;
                let row = &self.scaled[i * m..(i + 1) * m];
                // log w(+1) − log w(−1)
                let delta: f64 = self
                    .local
                    .iter()
                    .zip(row)
                    .map(|(&s, g)| self.u.eval(s + (1.0 - xi) * g) - self.u.eval(s - (1.0 + xi) * g))
                    .sum();
                let p_up = 1.0 / (1.0 + (-delta).exp());
                let new = if self.rng.gen::<f64>() < p_up { 1.0 } else { -1.0 };
                self.set_spin(i, new);
            }
            ModelKind::St => {
                let xi = self.x[i];
                let d = self.step * self.rng.sample::<f64, _>(StandardNormal);
                let new = xi + d;
                let delta = self.gardner_delta(i, d) - self.kappa * (new * new - xi * xi) + self.h * self.field[i] * d;
                self.proposed += 1;
                if delta >= 0.0 || self.rng.gen::<f64>() < delta.exp() {
                    self.accepted += 1;
                    self.set_spin(i, new);
                }
            }
        }
    }

    /// Systematic-scan sweep over all sites.
    pub fn sweep(&mut self) {
        for i in 0..self.n {
            self.update_site(i);
        }
        self.sweeps += 1;
        if self.sweeps % RESYNC_SWEEPS == 0 {
            self.resync();
        }
    }
}

/// Inverse-CDF draw from the density `∝ e^{a x}` on `[-1, 1]` given a
/// uniform `u ∈ [0, 1)`.
pub fn sample_exp_tilt(a: f64, u: f64) -> f64 {
    if a.abs() < 1e-12 {
        return 2.0 * u - 1.0;
    }
    // solved for a positive tilt, which keeps the exponential bounded;
    // a negative tilt is the mirror image
    let b = a.abs();
    let w = if a > 0.0 { u } else { 1.0 - u };
    let x = (1.0 + (w + (1.0 - w) * (-2.0 * b).exp()).ln() / b).clamp(-1.0, 1.0);
    if a > 0.0 {
        x
    } else {
        -x
    }
}
