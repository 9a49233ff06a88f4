use std::io::{Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use super::spec::{ModelKind, ModelSpec};
use crate::error::{Error, Result};
use crate::seed::rng_from_u64;

pub const MAX_SITES: usize = 4096;
pub const DISORDER_MAGIC: [u8; 8] = *b"GLDISORD";
pub const HEADER_LEN: usize = 32;

/// One frozen realisation of all Gaussian randomness of a model instance.
///
/// Storage is dense and row-major. `couplings[i * n + j] = g_{ij}` for SK
/// kinds (symmetric, zero diagonal); `gardner[i * m + mu] = g_{i,mu}` for
/// Gardner kinds; `field[i] = g_i` for ST.
#[derive(Clone, Debug, PartialEq)]
pub struct Disorder {
    pub kind: ModelKind,
    pub n_sites: usize,
    pub m: usize,
    pub couplings: Vec<f64>,
    pub gardner: Vec<f64>,
    pub field: Vec<f64>,
    pub seed: u64,
}

impl Disorder {
    #[inline]
    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.n_sites + j]
    }

    #[inline]
    pub fn gardner_row(&self, i: usize) -> &[f64] {
        &self.gardner[i * self.m..(i + 1) * self.m]
    }

    /// Exact sub-block over sites `k..n` (no fresh randomness).
    pub fn truncated(&self, k: usize) -> Disorder {
        let n = self.n_sites;
        let nt = n - k;
        let couplings = if self.couplings.is_empty() {
            Vec::new()
        } else {
            let mut c = Vec::with_capacity(nt * nt);
            for i in k..n {
                c.extend_from_slice(&self.couplings[i * n + k..i * n + n]);
            }
            c
        };
        let gardner = if self.gardner.is_empty() {
            Vec::new()
        } else {
            self.gardner[k * self.m..].to_vec()
        };
        let field = if self.field.is_empty() {
            Vec::new()
        } else {
            self.field[k..].to_vec()
        };
        Disorder {
            kind: self.kind,
            n_sites: nt,
            m: self.m,
            couplings,
            gardner,
            field,
            seed: self.seed,
        }
    }

    /// Writes the flat little-endian binary form: a 32-byte header
    /// (magic, kind, N, M, reserved, seed) followed by the f64 payload.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[..8].copy_from_slice(&DISORDER_MAGIC);
        header[8..12].copy_from_slice(&self.kind.code().to_le_bytes());
        header[12..16].copy_from_slice(&(self.n_sites as u32).to_le_bytes());
        header[16..20].copy_from_slice(&(self.m as u32).to_le_bytes());
        header[24..32].copy_from_slice(&self.seed.to_le_bytes());
        w.write_all(&header)?;
        for block in [&self.couplings, &self.gardner, &self.field] {
            for v in block.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Disorder> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if header[..8] != DISORDER_MAGIC {
            return Err(Error::DisorderFormat("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let kind = ModelKind::from_code(u32_at(8))
            .ok_or_else(|| Error::DisorderFormat(format!("unknown kind code {}", u32_at(8))))?;
        let n = u32_at(12) as usize;
        let m = u32_at(16) as usize;
        let seed = u64::from_le_bytes(header[24..32].try_into().unwrap());
        if n == 0 || n > MAX_SITES {
            return Err(Error::DisorderFormat(format!("bad site count {n}")));
        }
        let (nc, ng, nf) = payload_lens(kind, n, m);
        let mut read_block = |len: usize| -> Result<Vec<f64>> {
            let mut bytes = vec![0u8; len * 8];
            r.read_exact(&mut bytes)?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let couplings = read_block(nc)?;
        let gardner = read_block(ng)?;
        let field = read_block(nf)?;
        Ok(Disorder {
            kind,
            n_sites: n,
            m,
            couplings,
            gardner,
            field,
            seed,
        })
    }
}

fn payload_lens(kind: ModelKind, n: usize, m: usize) -> (usize, usize, usize) {
    match kind {
        ModelKind::SkIsing | ModelKind::SkBox => (n * n, 0, 0),
        ModelKind::Perceptron => (0, n * m, 0),
        ModelKind::St => (0, n * m, n),
    }
}

/// Draws the disorder of an `n_sites` instance of `spec` from `seed`.
///
/// SK couplings are drawn for `i < j` in row-major order; Gardner entries in
/// row-major `(i, mu)` order; ST site fields last.
pub fn sample_disorder(spec: &ModelSpec, n_sites: usize, seed: u64) -> Result<Disorder> {
    if n_sites == 0 {
        return Err(Error::param("n_sites", "must be positive"));
    }
    if n_sites > MAX_SITES {
        return Err(Error::param(
            "n_sites",
            format!("{n_sites} exceeds the supported maximum {MAX_SITES}"),
        ));
    }
    let m = spec.m_for(n_sites);
    if spec.kind.is_gardner() && m == 0 {
        return Err(Error::param("M", "must be at least 1"));
    }
    if spec.kind == ModelKind::St && m > 10 * n_sites {
        return Err(Error::param(
            "M",
            format!("ST requires M ≤ 10·N, got M = {m} for N = {n_sites}"),
        ));
    }
    let mut rng = rng_from_u64(seed);
    let mut gauss = || -> f64 { rng.sample(StandardNormal) };
    let n = n_sites;
    let mut couplings = Vec::new();
    let mut gardner = Vec::new();
    let mut field = Vec::new();
    match spec.kind {
        ModelKind::SkIsing | ModelKind::SkBox => {
            couplings = vec![0.0; n * n];
            for i in 0..n {
                for j in i + 1..n {
                    let g = gauss();
                    couplings[i * n + j] = g;
                    couplings[j * n + i] = g;
                }
            }
        }
        ModelKind::Perceptron | ModelKind::St => {
            gardner = (0..n * m).map(|_| gauss()).collect();
            if spec.kind == ModelKind::St {
                field = (0..n).map(|_| gauss()).collect();
            }
        }
    }
    Ok(Disorder {
        kind: spec.kind,
        n_sites: n,
        m: if spec.kind.is_gardner() { m } else { 0 },
        couplings,
        gardner,
        field,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::potential::{Potential, PotentialU};
    use crate::models::spec::GardnerSize;

    #[test]
    fn two_site_sk_structure() {
        let d = sample_disorder(&ModelSpec::sk_ising(1.0, 0.0), 2, 7).unwrap();
        assert_eq!(d.couplings.len(), 4);
        assert_eq!(d.coupling(0, 0), 0.0);
        assert_eq!(d.coupling(1, 1), 0.0);
        assert_eq!(d.coupling(0, 1), d.coupling(1, 0));
        assert_ne!(d.coupling(0, 1), 0.0);
    }

    #[test]
    fn deterministic() {
        let spec = ModelSpec::st(
            GardnerSize::Ratio(0.5),
            PotentialU::new(Potential::NegLogCosh { amp: 0.1, slope: 1.0 }),
            1.0,
            0.2,
        );
        let a = sample_disorder(&spec, 20, 99).unwrap();
        let b = sample_disorder(&spec, 20, 99).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_disorder(&spec, 20, 100).unwrap());
    }

    #[test]
    fn large_sample_moments() {
        let d = sample_disorder(&ModelSpec::sk_ising(1.0, 0.0), 500, 1).unwrap();
        let n = d.n_sites;
        let vals: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| d.coupling(i, j))
            .collect();
        let cnt = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / cnt;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (cnt - 1.0);
        assert!(mean.abs() < 5.0 / cnt.sqrt(), "mean {mean}");
        // sd of the sample variance of N(0,1) is √(2/n)
        assert!((var - 1.0).abs() < 5.0 * (2.0 / cnt).sqrt(), "var {var}");
    }

    #[test]
    fn st_rejects_too_many_constraints() {
        let spec = ModelSpec::st(
            GardnerSize::Fixed(101),
            PotentialU::new(Potential::NegLogCosh { amp: 0.1, slope: 1.0 }),
            1.0,
            0.0,
        );
        let err = sample_disorder(&spec, 10, 1).unwrap_err();
        assert!(err.to_string().contains("M ≤ 10·N"));
    }

    #[test]
    fn binary_roundtrip_and_header() {
        let spec = ModelSpec::st(
            GardnerSize::Fixed(3),
            PotentialU::new(Potential::NegLogCosh { amp: 0.1, slope: 1.0 }),
            1.0,
            0.2,
        );
        let d = sample_disorder(&spec, 4, 5).unwrap();
        let mut buf = Vec::new();
        d.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 8 * (4 * 3 + 4));
        assert_eq!(&buf[..8], b"GLDISORD");
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 4);
        assert_eq!(Disorder::read_binary(&buf[..]).unwrap(), d);
        buf[0] = b'X';
        assert!(Disorder::read_binary(&buf[..]).is_err());
    }

    #[test]
    fn truncation_is_subblock() {
        let d = sample_disorder(&ModelSpec::sk_ising(1.0, 0.0), 6, 3).unwrap();
        let t = d.truncated(2);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.coupling(i, j), d.coupling(i + 2, j + 2));
            }
        }
    }
}
