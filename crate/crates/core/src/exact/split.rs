//! Block enumeration of SK cavity quantities.
//!
//! The truncated sites are split into a low block of at most [`LOW_BITS`]
//! sites, tabulated once, and a high block walked in Gray order. For a fixed
//! high configuration every low-block sum is a dot product against a
//! precomputed table, so the cost per state is a few multiply-adds and no
//! exponentials.

use super::cavity::{assemble, CavityExact};
use crate::models::CavityDecomposition;
use crate::numerics::ScaledSums;

pub(crate) const LOW_BITS: usize = 10;
/// Largest admissible `Σ_i |b_i|` of the cross field on the low block;
/// beyond it the per-block products could underflow.
const MAX_CROSS_SPREAD: f64 = 300.0;
const RESYNC: u64 = 1 << 12;

/// Dot product with four independent accumulators so it vectorises.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn spin(bits: usize, i: usize) -> f64 {
    if (bits >> i) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `None` when the couplings are too strong for the scaled products.
pub(crate) fn sk_cavity_split(decomp: &CavityDecomposition) -> Option<CavityExact> {
    let k = decomp.k;
    let cells = 1usize << k;
    let t = &decomp.truncated;
    let nt = t.n_sites;
    let low = nt.min(LOW_BITS);
    let high = nt - low;
    let n_low = 1usize << low;
    let scale = decomp.truncated_spec.beta / (nt as f64).sqrt();
    let h = decomp.truncated_spec.h;
    let j = |a: usize, b: usize| scale * t.coupling(a, b);

    let spread: f64 = (0..low).map(|i| (low..nt).map(|b| j(i, b).abs()).sum::<f64>()).sum();
    if !(spread <= MAX_CROSS_SPREAD) {
        return None;
    }

    let a: Vec<Vec<f64>> = decomp
        .cavity_vectors
        .iter()
        .map(|v| v.iter().map(|x| x * decomp.varrho).collect())
        .collect();
    let cell_sign = |s: usize, jj: usize| if (s >> (k - 1 - jj)) & 1 == 1 { 1.0 } else { -1.0 };

    // low-block tables
    let mut e_low = vec![0.0; n_low];
    let mut c_low = vec![vec![0.0; n_low]; k];
    for l in 0..n_low {
        let mut e = 0.0;
        for i in 0..low {
            let yi = spin(l, i);
            e += h * yi;
            for b in i + 1..low {
                e += j(i, b) * yi * spin(l, b);
            }
        }
        e_low[l] = e;
        for (jj, row) in a.iter().enumerate() {
            c_low[jj][l] = (0..low).map(|i| row[i] * spin(l, i)).sum();
        }
    }
    let e_max = e_low.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let base: Vec<f64> = e_low.iter().map(|e| (e - e_max).exp()).collect();
    let coupled: Vec<Vec<f64>> = c_low
        .iter()
        .map(|c| c.iter().zip(&base).map(|(c, b)| c * b).collect())
        .collect();
    let mut offsets = vec![0.0; cells];
    let mut cell_tab = vec![vec![0.0; n_low]; cells];
    for s in 0..cells {
        let arg: Vec<f64> = (0..n_low)
            .map(|l| (0..k).map(|jj| cell_sign(s, jj) * c_low[jj][l]).sum())
            .collect();
        offsets[s] = arg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for l in 0..n_low {
            cell_tab[s][l] = base[l] * (arg[l] - offsets[s]).exp();
        }
    }
    let site_log: Vec<f64> = (0..cells)
        .map(|s| {
            decomp
                .site_terms
                .iter()
                .enumerate()
                .map(|(jj, f)| f.eval(cell_sign(s, jj)))
                .sum()
        })
        .collect();

    // high-block walk state
    let mut y = vec![-1.0; nt];
    let mut local = vec![0.0; nt];
    let mut e_high = 0.0;
    let mut c_high = vec![0.0; k];
    let resync = |y: &[f64], local: &mut [f64], c_high: &mut [f64]| -> f64 {
        let mut e = 0.0;
        for a_ in low..nt {
            local[a_] = (low..nt).map(|b| j(a_, b) * y[b]).sum();
            e += 0.5 * y[a_] * local[a_] + h * y[a_];
        }
        for i in 0..low {
            local[i] = (low..nt).map(|b| j(i, b) * y[b]).sum();
        }
        for (c, row) in c_high.iter_mut().zip(&a) {
            *c = (low..nt).map(|b| row[b] * y[b]).sum();
        }
        e
    };

    let surr = 1 + k;
    let mut sums = ScaledSums::new(surr + cells);
    let mut p = vec![0.0; n_low];
    let mut ef = vec![0.0; low];
    let mut block = vec![0.0; cells];
    let mut q = vec![0.0; k];
    let steps = 1u64 << high;
    for step in 0..steps {
        if step > 0 {
            let site = low + step.trailing_zeros() as usize;
            let ya = y[site];
            e_high -= 2.0 * ya * (local[site] + h);
            let d = -2.0 * ya;
            for (b, l) in local.iter_mut().enumerate() {
                *l += d * j(b, site);
            }
            for (c, row) in c_high.iter_mut().zip(&a) {
                *c += d * row[site];
            }
            y[site] = -ya;
        }
        if step % RESYNC == 0 {
            e_high = resync(&y, &mut local, &mut c_high);
        }

        // p[l] = exp(b·y_low(l) − |b|₁) with b the cross field
        let cross = &local[..low];
        let (bsum, babs) = cross.iter().fold((0.0, 0.0), |(s, a), b| (s + b, a + b.abs()));
        for (e, b) in ef.iter_mut().zip(cross) {
            *e = (2.0 * b).exp();
        }
        p[0] = (-bsum - babs).exp();
        for (i, f) in ef.iter().enumerate() {
            let (lo, hi) = p.split_at_mut(1 << i);
            for (dst, src) in hi[..1 << i].iter_mut().zip(lo.iter()) {
                *dst = src * f;
            }
        }
        let z = dot(&p, &base);
        for (qj, tab) in q.iter_mut().zip(&coupled) {
            *qj = dot(&p, tab);
        }
        for (bs, tab) in block.iter_mut().zip(&cell_tab) {
            *bs = dot(&p, tab);
        }

        let w = sums.weight(e_high + babs + e_max);
        sums.add(0, w * z);
        for jj in 0..k {
            sums.add(1 + jj, w * (c_high[jj] * z + q[jj]));
        }
        for s in 0..cells {
            let arg: f64 = (0..k).map(|jj| cell_sign(s, jj) * c_high[jj]).sum::<f64>() + offsets[s] + site_log[s];
            sums.add(surr + s, w * arg.exp() * block[s]);
        }
    }

    let surrogate_w: Vec<f64> = (0..cells).map(|s| sums.value(surr + s)).collect();
    let coupling_sums: Vec<f64> = (0..k).map(|jj| sums.value(1 + jj)).collect();
    Some(assemble(decomp, sums.reference(), sums.value(0), &coupling_sums, surrogate_w, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::cavity::walk;
    use crate::exact::walk::SkState;
    use crate::models::{cavity_decompose, sample_disorder, ModelSpec};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn agrees_with_plain_walk() {
        // covers a low block only (nt ≤ 10) and a split walk
        for (n, seed) in [(6, 1), (11, 2), (15, 3)] {
            for k in 1..=3 {
                let spec = ModelSpec::sk_ising(0.9, -0.35);
                let d = sample_disorder(&spec, n, seed).unwrap();
                let c = cavity_decompose(&spec, &d, k).unwrap();
                let fast = sk_cavity_split(&c).unwrap();
                let slow = walk(SkState::new(&c.truncated_spec, &c.truncated), &c);
                assert!(close(fast.log_partition, slow.log_partition));
                assert!(close(fast.log_partition_truncated, slow.log_partition_truncated));
                for (a, b) in fast.cavity_fields.iter().zip(&slow.cavity_fields) {
                    assert!(close(*a, *b));
                }
                for (a, b) in fast.original.probs.iter().zip(&slow.original.probs) {
                    assert!(close(*a, *b));
                }
                for (a, b) in fast.surrogate.probs.iter().zip(&slow.surrogate.probs) {
                    assert!(close(*a, *b));
                }
            }
        }
    }

    #[test]
    fn strong_coupling_declines() {
        let spec = ModelSpec::sk_ising(200.0, 0.0);
        let d = sample_disorder(&spec, 14, 5).unwrap();
        let c = cavity_decompose(&spec, &d, 1).unwrap();
        assert!(sk_cavity_split(&c).is_none());
    }
}
