use serde::Serialize;

use super::disorder::Disorder;
use super::energy::{check_inputs, gardner_fields, log_weight};
use super::spec::{GardnerSize, ModelKind, ModelSpec, SpinConfiguration};
use crate::error::{Error, Result};
use crate::rs::{self, Quadrature, SolverOptions};

pub const MAX_CAVITY_SITES: usize = 4;

/// Per-site term `f_j(x) = linear · x + quadratic · x²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SiteTerm {
    pub linear: f64,
    pub quadratic: f64,
}

impl SiteTerm {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.linear * x + self.quadratic * x * x
    }
}

/// Split of an `N`-site instance into `k` cavity sites and a truncated
/// `(N − k)`-site system over sites `k..N`:
///
/// `−H_{N,0}(x) = −H⁻(y) + Σ_j x_j ϱ A_j·w(y) + Σ_j f_j(x_j)`.
///
/// For SK kinds `w(y) = y`; for Gardner kinds `w_m = √α⁻ ũ′(S⁻_m)` with
/// `ϱ = 1`.
#[derive(Clone, Debug)]
pub struct CavityDecomposition {
    pub k: usize,
    pub parent_spec: ModelSpec,
    pub parent: Disorder,
    pub truncated_spec: ModelSpec,
    pub truncated: Disorder,
    /// `A_j`, `k` rows of length `N − k` (SK) or `M` (Gardner).
    pub cavity_vectors: Vec<Vec<f64>>,
    pub varrho: f64,
    pub site_terms: Vec<SiteTerm>,
    /// `√((N − k)/N)`.
    pub shrink: f64,
    /// `M/(N − k)` for Gardner kinds.
    pub alpha_minus: f64,
    /// `σ⁻` of the truncated ST system (zero otherwise).
    pub sigma_minus: f64,
}

/// Decomposes with the default RS settings for the ST `σ⁻` term.
pub fn cavity_decompose(spec: &ModelSpec, disorder: &Disorder, k: usize) -> Result<CavityDecomposition> {
    let sigma = if spec.kind == ModelKind::St {
        let n = disorder.n_sites;
        check_k(k, n)?;
        let alpha_minus = disorder.m as f64 / (n - k) as f64;
        let shrink = ((n - k) as f64 / n as f64).sqrt();
        let sol = rs::solve_st(
            alpha_minus,
            &spec.u,
            spec.kappa,
            spec.h,
            shrink,
            &Quadrature::default(),
            &SolverOptions::default(),
        )?;
        Some(sol.get("sigma").unwrap_or(0.0))
    } else {
        None
    };
    cavity_decompose_with(spec, disorder, k, sigma)
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k > MAX_CAVITY_SITES {
        return Err(Error::param("k", format!("at most {MAX_CAVITY_SITES} cavity sites are supported, got {k}")));
    }
    if k >= n {
        return Err(Error::param("k", format!("must be below N = {n}, got {k}")));
    }
    Ok(())
}

/// As [`cavity_decompose`] with an explicit `σ⁻` for ST.
pub fn cavity_decompose_with(
    spec: &ModelSpec,
    disorder: &Disorder,
    k: usize,
    st_sigma: Option<f64>,
) -> Result<CavityDecomposition> {
    if disorder.kind != spec.kind {
        return Err(Error::Unsupported(format!(
            "disorder was drawn for {} but the spec is {}",
            disorder.kind, spec.kind
        )));
    }
    let n = disorder.n_sites;
    check_k(k, n)?;
    let nt = n - k;
    let shrink = (nt as f64 / n as f64).sqrt();
    let truncated = disorder.truncated(k);
    let mut truncated_spec = *spec;
    let (cavity_vectors, varrho, site_terms, alpha_minus, sigma_minus);
    match spec.kind {
        ModelKind::SkIsing | ModelKind::SkBox => {
            truncated_spec.beta = spec.beta * shrink;
            let inv = 1.0 / (nt as f64).sqrt();
            cavity_vectors = (0..k)
                .map(|j| (k..n).map(|i| disorder.coupling(j, i) * inv).collect())
                .collect();
            varrho = truncated_spec.beta;
            site_terms = vec![SiteTerm { linear: spec.h, quadratic: 0.0 }; k];
            alpha_minus = 0.0;
            sigma_minus = 0.0;
        }
        ModelKind::Perceptron | ModelKind::St => {
            let m = disorder.m;
            truncated_spec.u = spec.u.shrunk(shrink);
            truncated_spec.size = Some(GardnerSize::Fixed(m));
            let inv = 1.0 / (m as f64).sqrt();
            cavity_vectors = (0..k)
                .map(|j| disorder.gardner_row(j).iter().map(|g| g * inv).collect())
                .collect();
            varrho = 1.0;
            alpha_minus = m as f64 / nt as f64;
            if spec.kind == ModelKind::St {
                let sigma = st_sigma.ok_or_else(|| {
                    Error::param("sigma", "ST decomposition needs the truncated RS sigma")
                })?;
                sigma_minus = sigma;
                site_terms = (0..k)
                    .map(|j| SiteTerm {
                        linear: spec.h * disorder.field[j],
                        quadratic: -spec.kappa + 0.5 * sigma,
                    })
                    .collect();
            } else {
                sigma_minus = 0.0;
                site_terms = vec![SiteTerm { linear: 0.0, quadratic: 0.0 }; k];
            }
        }
    }
    Ok(CavityDecomposition {
        k,
        parent_spec: *spec,
        parent: disorder.clone(),
        truncated_spec,
        truncated,
        cavity_vectors,
        varrho,
        site_terms,
        shrink,
        alpha_minus,
        sigma_minus,
    })
}

impl CavityDecomposition {
    pub fn n_parent(&self) -> usize {
        self.parent.n_sites
    }

    /// `w(y)`: `y` itself for SK kinds, `√α⁻ ũ′(S⁻)` for Gardner kinds.
    pub fn w_vector(&self, y: &[f64]) -> Vec<f64> {
        if self.parent_spec.kind.is_sk() {
            y.to_vec()
        } else {
            let scale = self.alpha_minus.sqrt();
            gardner_fields(&self.truncated, y)
                .into_iter()
                .map(|s| scale * self.truncated_spec.u.d1(s))
                .collect()
        }
    }

    /// `ϱ A_j·w(y)` for every cavity site.
    pub fn coupling_terms(&self, y: &[f64]) -> Vec<f64> {
        let w = self.w_vector(y);
        self.cavity_vectors
            .iter()
            .map(|a| self.varrho * a.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>())
            .collect()
    }

    /// `(β/√N) Σ_{j<j′≤k} g_{jj′} x_j x_j′`, the interaction dropped from
    /// the SK surrogate. Zero for Gardner kinds.
    pub fn intra_term(&self, x: &[f64]) -> f64 {
        if !self.parent_spec.kind.is_sk() {
            return 0.0;
        }
        let scale = self.parent_spec.beta / (self.n_parent() as f64).sqrt();
        let mut acc = 0.0;
        for j in 0..self.k {
            for jp in j + 1..self.k {
                acc += self.parent.coupling(j, jp) * x[j] * x[jp];
            }
        }
        scale * acc
    }

    /// Unchecked surrogate `−H_{N,0}` on a full configuration `x = (σ, y)`.
    pub(crate) fn surrogate_log_weight(&self, x: &[f64]) -> f64 {
        let (sigma, y) = x.split_at(self.k);
        let mut e = log_weight(&self.truncated_spec, &self.truncated, y);
        for ((s, c), f) in sigma.iter().zip(self.coupling_terms(y)).zip(&self.site_terms) {
            e += s * c + f.eval(*s);
        }
        e
    }
}

/// `−H_{N,0}(x)`, the decomposable surrogate of the parent Hamiltonian.
pub fn decomposed_energy(decomp: &CavityDecomposition, config: &SpinConfiguration) -> Result<f64> {
    check_inputs(&decomp.parent_spec, &decomp.parent, config)?;
    Ok(decomp.surrogate_log_weight(&config.values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::disorder::sample_disorder;
    use crate::models::energy::energy;
    use crate::models::potential::{Potential, PotentialU};
    use crate::models::spec::SpinDomain;
    use rand::{Rng, SeedableRng};

    fn smooth_u() -> PotentialU {
        PotentialU::new(Potential::Tanh { amp: 0.6, slope: 1.0, shift: 0.2 })
    }

    #[test]
    fn sk_varrho() {
        let spec = ModelSpec::sk_ising(0.4, 0.0);
        let d = sample_disorder(&spec, 10, 3).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        assert!((c.varrho - 0.357770876).abs() < 1e-9);
        assert!(c.varrho < spec.beta);
        assert!((c.varrho - spec.beta * c.shrink).abs() < 1e-15);
    }

    #[test]
    fn k_bounds() {
        let spec = ModelSpec::sk_ising(0.4, 0.0);
        let d = sample_disorder(&spec, 6, 3).unwrap();
        assert!(cavity_decompose(&spec, &d, 0).is_err());
        assert!(cavity_decompose(&spec, &d, 5).is_err());
        let d = sample_disorder(&spec, 3, 3).unwrap();
        assert!(cavity_decompose(&spec, &d, 3).is_err());
    }

    #[test]
    fn sk_reassembly() {
        let spec = ModelSpec::sk_ising(0.7, 0.35);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for seed in 0..20 {
            let d = sample_disorder(&spec, 11, seed).unwrap();
            for k in 1..=4 {
                let c = cavity_decompose(&spec, &d, k).unwrap();
                let bits: u64 = rng.gen::<u64>() & ((1 << 11) - 1);
                let x = SpinConfiguration::from_bits(bits, 11);
                let full = energy(&spec, &d, &x).unwrap();
                let sur = decomposed_energy(&c, &x).unwrap();
                // independent reassembly with β·a_j·y, a_j = g_{j,i}/√N
                let (sig, y) = x.values.split_at(k);
                let ty = SpinConfiguration::pm_one(y.to_vec()).unwrap();
                let mut re = energy(&c.truncated_spec, &c.truncated, &ty).unwrap();
                for j in 0..k {
                    let ay: f64 = (k..11).map(|i| d.coupling(j, i) * x.values[i]).sum::<f64>()
                        / 11f64.sqrt();
                    re += sig[j] * spec.beta * ay + spec.h * sig[j];
                }
                let mut intra = 0.0;
                for j in 0..k {
                    for jp in j + 1..k {
                        intra += d.coupling(j, jp) * sig[j] * sig[jp];
                    }
                }
                re += spec.beta / 11f64.sqrt() * intra;
                assert!((full - re).abs() < 1e-12);
                assert!((full - sur - c.intra_term(&x.values)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sk_box_reassembly() {
        let spec = ModelSpec::sk_box(0.5, -0.2);
        let d = sample_disorder(&spec, 7, 9).unwrap();
        let c = cavity_decompose(&spec, &d, 3).unwrap();
        let x = SpinConfiguration::new(vec![0.1, -0.9, 0.4, 1.0, -0.3, 0.0, 0.77], SpinDomain::Box)
            .unwrap();
        let gap = energy(&spec, &d, &x).unwrap() - decomposed_energy(&c, &x).unwrap();
        assert!((gap - c.intra_term(&x.values)).abs() < 1e-12);
    }

    #[test]
    fn gardner_chain_rule_and_identity() {
        let spec = ModelSpec::perceptron(GardnerSize::Fixed(5), smooth_u());
        let d = sample_disorder(&spec, 9, 4).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        let x = SpinConfiguration::from_bits(0b101100111, 9);
        let y = &x.values[2..];
        let s_minus = gardner_fields(&c.truncated, y);
        // S⁰_m: parent-normalised field of y alone
        let s0: Vec<f64> = (0..5)
            .map(|m| (2..9).map(|i| d.gardner[i * 5 + m] * x.values[i]).sum::<f64>() / 3.0)
            .collect();
        for m in 0..5 {
            let lhs = c.truncated_spec.u.d1(s_minus[m]);
            let rhs = c.shrink * spec.u.d1(s0[m]);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let terms = c.coupling_terms(y);
        for j in 0..2 {
            let direct: f64 = (0..5).map(|m| d.gardner[j * 5 + m] / 3.0 * spec.u.d1(s0[m])).sum();
            assert!((terms[j] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn gardner_zero_u_is_truncated_energy() {
        let spec = ModelSpec::perceptron(GardnerSize::Fixed(3), PotentialU::zero());
        let d = sample_disorder(&spec, 6, 2).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        let x = SpinConfiguration::from_bits(0b110101, 6);
        assert_eq!(decomposed_energy(&c, &x).unwrap(), 0.0);
    }

    #[test]
    fn st_site_term_uses_sigma() {
        let u = PotentialU::new(Potential::NegLogCosh { amp: 0.05, slope: 1.0 });
        let spec = ModelSpec::st(GardnerSize::Fixed(4), u, 2.0, 0.3);
        let d = sample_disorder(&spec, 8, 5).unwrap();
        let c = cavity_decompose_with(&spec, &d, 2, Some(-0.04)).unwrap();
        assert!((c.site_terms[0].quadratic - (-2.0 - 0.02)).abs() < 1e-15);
        assert!((c.site_terms[1].linear - 0.3 * d.field[1]).abs() < 1e-15);
        assert!(cavity_decompose_with(&spec, &d, 2, None).is_err());
    }

    #[test]
    fn perceptron_taylor_gap_shrinks() {
        // Fixed M: at fixed α the second-order diagonal term is O(1) (constant
        // in σ for ±1 spins) and only the remainder decays.
        let spec = ModelSpec::perceptron(GardnerSize::Fixed(6), smooth_u());
        let mean_gap = |n: usize| {
            let mut acc = 0.0;
            for seed in 0..100 {
                let d = sample_disorder(&spec, n, 1000 + seed).unwrap();
                let c = cavity_decompose(&spec, &d, 2).unwrap();
                let x = SpinConfiguration::from_bits(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15), n);
                acc += (energy(&spec, &d, &x).unwrap() - decomposed_energy(&c, &x).unwrap()).abs();
            }
            acc / 100.0
        };
        let ratio = mean_gap(24) / mean_gap(12);
        assert!((0.35..0.65).contains(&ratio), "ratio {ratio}");
    }
}
