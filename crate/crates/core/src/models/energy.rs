use super::disorder::Disorder;
use super::spec::{ModelKind, ModelSpec, SpinConfiguration};
use crate::error::{Error, Result};

pub(crate) fn check_inputs(
    spec: &ModelSpec,
    disorder: &Disorder,
    config: &SpinConfiguration,
) -> Result<()> {
    let expected = spec.kind.domain();
    if config.domain != expected {
        return Err(Error::DomainMismatch {
            model: spec.kind.name(),
            expected: expected.name(),
            got: config.domain.name(),
        });
    }
    if disorder.kind != spec.kind {
        return Err(Error::Unsupported(format!(
            "disorder was drawn for {} but the spec is {}",
            disorder.kind, spec.kind
        )));
    }
    if config.len() != disorder.n_sites {
        return Err(Error::DimensionMismatch {
            what: "configuration length",
            expected: disorder.n_sites,
            got: config.len(),
        });
    }
    Ok(())
}

/// `S_m = N^{-1/2} Σ_i g_{i,m} x_i` for every constraint `m`.
pub fn gardner_fields(disorder: &Disorder, x: &[f64]) -> Vec<f64> {
    let inv = 1.0 / (disorder.n_sites as f64).sqrt();
    let mut s = vec![0.0; disorder.m];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (sm, g) in s.iter_mut().zip(disorder.gardner_row(i)) {
            *sm += g * xi;
        }
    }
    s.iter_mut().for_each(|v| *v *= inv);
    s
}

/// `-H(x)` for the model, i.e. the log Gibbs weight up to `log Z`.
///
/// * SK kinds: `β/√N Σ_{i<j} g_ij x_i x_j + h Σ_i x_i`
/// * Perceptron: `Σ_m u(S_m)`
/// * ST: `Σ_m u(S_m) − κ‖x‖² + h Σ_i g_i x_i`
pub fn energy(spec: &ModelSpec, disorder: &Disorder, config: &SpinConfiguration) -> Result<f64> {
    check_inputs(spec, disorder, config)?;
    Ok(log_weight(spec, disorder, &config.values))
}

/// Unchecked `-H(x)`.
pub(crate) fn log_weight(spec: &ModelSpec, disorder: &Disorder, x: &[f64]) -> f64 {
    let n = disorder.n_sites;
    match spec.kind {
        ModelKind::SkIsing | ModelKind::SkBox => {
            let scale = spec.beta / (n as f64).sqrt();
            let mut pair = 0.0;
            for i in 0..n {
                let row = &disorder.couplings[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for j in i + 1..n {
                    acc += row[j] * x[j];
                }
                pair += x[i] * acc;
            }
            scale * pair + spec.h * x.iter().sum::<f64>()
        }
        ModelKind::Perceptron | ModelKind::St => {
            let s = gardner_fields(disorder, x);
            let mut e: f64 = s.iter().map(|&v| spec.u.eval(v)).sum();
            if spec.kind == ModelKind::St {
                e -= spec.kappa * x.iter().map(|v| v * v).sum::<f64>();
                e += spec.h * x.iter().zip(&disorder.field).map(|(a, g)| a * g).sum::<f64>();
            }
            e
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::disorder::sample_disorder;
    use crate::models::potential::{Potential, PotentialU};
    use crate::models::spec::{GardnerSize, SpinDomain};

    #[test]
    fn two_spin_sk() {
        let spec = ModelSpec::sk_ising(1.0, 0.0);
        let mut d = sample_disorder(&spec, 2, 7).unwrap();
        d.couplings = vec![0.0, 1.0, 1.0, 0.0];
        let x = SpinConfiguration::pm_one(vec![1.0, 1.0]).unwrap();
        let e = energy(&spec, &d, &x).unwrap();
        assert!((e - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn st_with_zero_potential_is_regulariser() {
        let spec = ModelSpec::st(GardnerSize::Fixed(4), PotentialU::zero(), 1.0, 0.0);
        let d = sample_disorder(&spec, 5, 11).unwrap();
        let x = SpinConfiguration::new(vec![0.3, -1.2, 2.0, 0.0, 0.7], SpinDomain::Real).unwrap();
        let norm: f64 = x.values.iter().map(|v| v * v).sum();
        assert!((energy(&spec, &d, &x).unwrap() + norm).abs() < 1e-14);
    }

    #[test]
    fn perceptron_matches_termwise_sum() {
        let u = PotentialU::new(Potential::Tanh {
            amp: 0.8,
            slope: 1.1,
            shift: -0.3,
        });
        let spec = ModelSpec::perceptron(GardnerSize::Fixed(2), u);
        let d = sample_disorder(&spec, 3, 21).unwrap();
        let x = [1.0, -1.0, 1.0];
        let mut naive = 0.0;
        for m in 0..2 {
            let mut s = 0.0;
            for i in 0..3 {
                s += d.gardner[i * 2 + m] * x[i];
            }
            naive += 0.8 * (1.1 * s / 3f64.sqrt() - 0.3).tanh();
        }
        let cfg = SpinConfiguration::pm_one(x.to_vec()).unwrap();
        assert!((energy(&spec, &d, &cfg).unwrap() - naive).abs() < 1e-14);
    }

    #[test]
    fn domain_and_dimension_errors() {
        let spec = ModelSpec::sk_ising(1.0, 0.0);
        let d = sample_disorder(&spec, 3, 1).unwrap();
        let boxed = SpinConfiguration::new(vec![0.5, 0.5, 0.5], SpinDomain::Box).unwrap();
        assert!(matches!(energy(&spec, &d, &boxed), Err(Error::DomainMismatch { .. })));
        let short = SpinConfiguration::pm_one(vec![1.0, 1.0]).unwrap();
        assert!(matches!(energy(&spec, &d, &short), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn gauge_invariance_at_zero_field() {
        let spec = ModelSpec::sk_ising(0.9, 0.0);
        let d = sample_disorder(&spec, 7, 5).unwrap();
        let x = SpinConfiguration::from_bits(0b1011001, 7);
        let e = energy(&spec, &d, &x).unwrap();
        for flip in 0..7 {
            let mut d2 = d.clone();
            for j in 0..7 {
                d2.couplings[flip * 7 + j] *= -1.0;
                d2.couplings[j * 7 + flip] *= -1.0;
            }
            let mut x2 = x.clone();
            x2.values[flip] *= -1.0;
            assert!((energy(&spec, &d2, &x2).unwrap() - e).abs() < 1e-13);
        }
    }
}
