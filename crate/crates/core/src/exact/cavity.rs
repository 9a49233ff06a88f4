use serde::Serialize;

use super::enumerate::{check_enumerable, ENUMERATION_CAP};
use super::table::MarginalTable;
use super::split::sk_cavity_split;
use super::walk::{gray_walk, GardnerState, GrayState, SkState, RESYNC_PERIOD};
use crate::error::Result;
use crate::models::{CavityDecomposition, ModelKind};
use crate::numerics::ScaledSums;

/// Everything one walk over the truncated system yields about the `k`
/// cavity sites.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CavityExact {
    pub k: usize,
    pub log_partition_truncated: f64,
    /// `⟨ϱ A_j·w⟩⁻`.
    pub mean_coupling: Vec<f64>,
    /// `⟨ϱ A_j·w⟩⁻` plus the linear site coefficient: the argument of the
    /// predicted two-point factor.
    pub cavity_fields: Vec<f64>,
    /// `G_N^{(k)}`.
    pub original: MarginalTable,
    /// `G_{N,0}^{(k)}`, the marginal under the surrogate Hamiltonian.
    pub surrogate: MarginalTable,
    pub log_partition: f64,
    pub log_partition_surrogate: f64,
}

/// The cavity fields `β a_j·⟨y⟩⁻ + h` (SK) or `a_j·⟨U⟩⁻` (Perceptron),
/// computed exactly on the truncated system.
pub fn cavity_fields(decomp: &CavityDecomposition) -> Result<Vec<f64>> {
    Ok(cavity_exact(decomp, ENUMERATION_CAP)?.cavity_fields)
}

/// Single Gray-code pass over the `2^{N-k}` truncated configurations.
/// Parent and surrogate `k`-marginals are obtained by summing the cavity
/// weights against the truncated Gibbs weights.
pub fn cavity_exact(decomp: &CavityDecomposition, cap: usize) -> Result<CavityExact> {
    check_enumerable(&decomp.truncated_spec, &decomp.truncated, 0, cap)?;
    match decomp.parent_spec.kind {
        ModelKind::SkIsing => {
            if let Some(ce) = sk_cavity_split(decomp) {
                return Ok(ce);
            }
            let state = SkState::new(&decomp.truncated_spec, &decomp.truncated);
            Ok(walk(state, decomp))
        }
        ModelKind::Perceptron => {
            let state = GardnerState::new(&decomp.truncated_spec, &decomp.truncated);
            Ok(walk(state, decomp))
        }
        _ => unreachable!("checked by check_enumerable"),
    }
}

pub(super) fn walk<S: GrayState>(mut state: S, decomp: &CavityDecomposition) -> CavityExact {
    let k = decomp.k;
    let nt = decomp.truncated.n_sites;
    let cells = 1usize << k;
    let is_sk = decomp.parent_spec.kind.is_sk();
    // slots: Z⁻, ⟨c_j⟩ (k), surrogate cells, original cells (Gardner only)
    let surr = 1 + k;
    let orig = surr + cells;
    let mut sums = ScaledSums::new(orig + if is_sk { 0 } else { cells });

    // SK couplings c_j = ϱ A_j·y are tracked incrementally.
    let scaled_a: Vec<Vec<f64>> = decomp
        .cavity_vectors
        .iter()
        .map(|a| a.iter().map(|v| v * decomp.varrho).collect())
        .collect();
    let recompute = |y: &[f64], c: &mut [f64]| {
        for (cj, a) in c.iter_mut().zip(&scaled_a) {
            *cj = a.iter().zip(y).map(|(p, q)| p * q).sum();
        }
    };
    let mut c = vec![0.0; k];
    let mut prev_bits = 0u64;
    let mut visits = 0u64;

    // Gardner: parent fields S_m = shrink·S⁻_m + N^{-1/2} Σ_j g_{j,m} σ_j.
    let parent_u = decomp.parent_spec.u;
    let m = decomp.truncated.m;
    let inv_sqrt_n = 1.0 / (decomp.n_parent() as f64).sqrt();
    let cavity_shift: Vec<Vec<f64>> = (0..cells)
        .map(|idx| {
            (0..m)
                .map(|mm| {
                    (0..k)
                        .map(|j| {
                            let s = if (idx >> (k - 1 - j)) & 1 == 1 { 1.0 } else { -1.0 };
                            s * decomp.parent.gardner_row(j)[mm] * inv_sqrt_n
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let w_scale = decomp.alpha_minus.sqrt();

    let mut factors = vec![[0.0f64; 2]; k];
    gray_walk(&mut state, nt, |bits, s| {
        let y = s.spins();
        if is_sk {
            if visits % RESYNC_PERIOD == 0 {
                recompute(y, &mut c);
            } else {
                let i = (bits ^ prev_bits).trailing_zeros() as usize;
                let d = 2.0 * y[i];
                for (cj, a) in c.iter_mut().zip(&scaled_a) {
                    *cj += d * a[i];
                }
            }
            prev_bits = bits;
            visits += 1;
        } else if let Some((fields, u)) = s.gardner_view() {
            for (cj, a) in c.iter_mut().zip(&decomp.cavity_vectors) {
                *cj = w_scale * a.iter().zip(fields).map(|(p, f)| p * u.d1(*f)).sum::<f64>();
            }
        }
        let e = s.log_weight();
        let w = sums.weight(e);
        sums.add(0, w);
        for j in 0..k {
            sums.add(1 + j, c[j] * w);
            let f = &decomp.site_terms[j];
            factors[j] = [(-c[j] + f.eval(-1.0)).exp(), (c[j] + f.eval(1.0)).exp()];
        }
        for idx in 0..cells {
            let mut p = w;
            for (j, fj) in factors.iter().enumerate() {
                p *= fj[(idx >> (k - 1 - j)) & 1];
            }
            sums.add(surr + idx, p);
        }
        if let Some((fields, _)) = s.gardner_view() {
            for (idx, shift) in cavity_shift.iter().enumerate() {
                let mut full = 0.0;
                for (f, sh) in fields.iter().zip(shift) {
                    full += parent_u.eval(decomp.shrink * f + sh);
                }
                sums.add(orig + idx, w * (full - e).exp());
            }
        }
    });

    let surrogate_w: Vec<f64> = (0..cells).map(|i| sums.value(surr + i)).collect();
    let original_w = (!is_sk).then(|| (0..cells).map(|i| sums.value(orig + i)).collect());
    let coupling_sums: Vec<f64> = (0..k).map(|j| sums.value(1 + j)).collect();
    assemble(decomp, sums.reference(), sums.value(0), &coupling_sums, surrogate_w, original_w)
}

/// Normalises the scaled cell sums of a walk. SK originals are recovered
/// from the surrogate cells through the intra-cavity term.
pub(super) fn assemble(
    decomp: &CavityDecomposition,
    reference: f64,
    z_minus: f64,
    coupling_sums: &[f64],
    surrogate_w: Vec<f64>,
    original_w: Option<Vec<f64>>,
) -> CavityExact {
    let k = decomp.k;
    let mean_coupling: Vec<f64> = coupling_sums.iter().map(|s| s / z_minus).collect();
    let cavity_fields = mean_coupling
        .iter()
        .zip(&decomp.site_terms)
        .map(|(c, f)| c + f.linear)
        .collect();
    let original_w = original_w.unwrap_or_else(|| {
        let probe = MarginalTable::uniform(k);
        surrogate_w
            .iter()
            .enumerate()
            .map(|(i, t)| t * decomp.intra_term(&probe.spins_of(i)).exp())
            .collect()
    });
    let zs: f64 = surrogate_w.iter().sum();
    let zo: f64 = original_w.iter().sum();
    CavityExact {
        k,
        log_partition_truncated: reference + z_minus.ln(),
        mean_coupling,
        cavity_fields,
        original: MarginalTable { k, probs: original_w.iter().map(|v| v / zo).collect() },
        surrogate: MarginalTable { k, probs: surrogate_w.iter().map(|v| v / zs).collect() },
        log_partition: reference + zo.ln(),
        log_partition_surrogate: reference + zs.ln(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{enumerate, naive_enumerate};
    use crate::models::{cavity_decompose, decomposed_energy, sample_disorder, GardnerSize, ModelSpec, Potential, PotentialU, SpinConfiguration};

    #[test]
    fn sk_matches_full_enumeration() {
        for seed in 0..4 {
            let spec = ModelSpec::sk_ising(0.8, 0.3);
            let d = sample_disorder(&spec, 11, seed).unwrap();
            for k in 1..=3 {
                let c = cavity_decompose(&spec, &d, k).unwrap();
                let ce = cavity_exact(&c, 26).unwrap();
                let full = enumerate(&spec, &d, k).unwrap();
                assert!((ce.log_partition - full.log_partition).abs() < 1e-12);
                for (a, b) in ce.original.probs.iter().zip(&full.marginal.probs) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sk_fields_from_truncated_means() {
        let spec = ModelSpec::sk_ising(0.3, 0.4);
        let d = sample_disorder(&spec, 12, 9).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        let fields = cavity_fields(&c).unwrap();
        let tr = enumerate(&c.truncated_spec, &c.truncated, 0).unwrap();
        for j in 0..2 {
            let direct: f64 = (2..12)
                .map(|i| d.coupling(j, i) / 12f64.sqrt() * tr.site_means[i - 2])
                .sum::<f64>()
                * 0.3
                + 0.4;
            assert!((fields[j] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_beta_fields_equal_h() {
        let spec = ModelSpec::sk_ising(0.0, 0.25);
        let d = sample_disorder(&spec, 8, 1).unwrap();
        let c = cavity_decompose(&spec, &d, 2).unwrap();
        assert_eq!(cavity_fields(&c).unwrap(), vec![0.25, 0.25]);
    }

    #[test]
    fn surrogate_marginal_matches_brute_force() {
        let u = PotentialU::new(Potential::Tanh { amp: 0.8, slope: 1.0, shift: 0.1 });
        let cases = [
            ModelSpec::sk_ising(0.9, -0.2),
            ModelSpec::perceptron(GardnerSize::Fixed(4), u),
        ];
        for spec in cases {
            let d = sample_disorder(&spec, 9, 4).unwrap();
            let c = cavity_decompose(&spec, &d, 2).unwrap();
            let ce = cavity_exact(&c, 26).unwrap();
            let mut w = vec![0.0; 4];
            for b in 0..1u64 << 9 {
                let x = SpinConfiguration::from_bits(b, 9);
                let idx = ((b & 1) << 1 | (b >> 1 & 1)) as usize;
                w[idx] += decomposed_energy(&c, &x).unwrap().exp();
            }
            let z: f64 = w.iter().sum();
            for (a, b) in ce.surrogate.probs.iter().zip(&w) {
                assert!((a - b / z).abs() < 1e-12, "{spec:?}");
            }
            let full = naive_enumerate(&spec, &d, 2).unwrap();
            for (a, b) in ce.original.probs.iter().zip(&full.marginal.probs) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!((ce.log_partition - full.log_partition).abs() < 1e-12);
        }
    }

    #[test]
    fn k1_sk_has_no_gap() {
        let spec = ModelSpec::sk_ising(0.9, 0.1);
        let d = sample_disorder(&spec, 10, 2).unwrap();
        let ce = cavity_exact(&cavity_decompose(&spec, &d, 1).unwrap(), 26).unwrap();
        assert_eq!(ce.original, ce.surrogate);
    }
}
