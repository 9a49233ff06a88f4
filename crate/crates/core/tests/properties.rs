use proptest::prelude::*;

use glasslab::exact::{enumerate, naive_enumerate, overlap_moments, MarginalTable};
use glasslab::models::{
    cavity_decompose, decomposed_energy, energy, sample_disorder, GardnerSize, ModelSpec, Potential, PotentialU,
    SpinConfiguration, SpinDomain,
};
use glasslab::rs::{solve, solve_sk, Quadrature, RsInputs, SolverOptions};
use glasslab::seed::{seed_stream, StreamRole};
use glasslab::verify::{e_ge_one_min, predicted_product, truncated_rs_inputs, tv_discrete, PredictionForm, SiteLaw};

fn table(k: usize, w: &[f64]) -> MarginalTable {
    MarginalTable::from_weights(k, w[..1 << k].to_vec()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn st_spec(alpha: f64, kappa: f64, h: f64) -> ModelSpec {
    ModelSpec::st(GardnerSize::Ratio(alpha), PotentialU::new(Potential::NegLogCosh { amp: 0.5, slope: 1.0 }), kappa, h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tv_is_a_metric(
        k in 1usize..=3,
        a in prop::collection::vec(0.0f64..1.0, 8),
        b in prop::collection::vec(0.0f64..1.0, 8),
        c in prop::collection::vec(0.0f64..1.0, 8),
    ) {
        prop_assume!(a[..1 << k].iter().sum::<f64>() > 1e-3);
        prop_assume!(b[..1 << k].iter().sum::<f64>() > 1e-3);
        prop_assume!(c[..1 << k].iter().sum::<f64>() > 1e-3);
        let (a, b, c) = (table(k, &a), table(k, &b), table(k, &c));
        let ab = tv_discrete(&a, &b).unwrap();
        prop_assert!((ab - tv_discrete(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!(tv_discrete(&a, &a).unwrap() <= 1e-12);
        prop_assert!(ab <= tv_discrete(&a, &c).unwrap() + tv_discrete(&c, &b).unwrap() + 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn gauge_flip_preserves_energy(seed in any::<u64>(), beta in 0.0f64..2.0, n in 2usize..12, bits in any::<u64>(), flip in 0usize..12) {
        let flip = flip % n;
        let spec = ModelSpec::sk_ising(beta, 0.0);
        let d = sample_disorder(&spec, n, seed).unwrap();
        let x = SpinConfiguration::from_bits(bits & ((1 << n) - 1), n);
        let mut d2 = d.clone();
        for j in 0..n {
            d2.couplings[flip * n + j] *= -1.0;
            d2.couplings[j * n + flip] *= -1.0;
        }
        let mut x2 = x.clone();
        x2.values[flip] *= -1.0;
        let e = energy(&spec, &d, &x).unwrap();
        prop_assert!((energy(&spec, &d2, &x2).unwrap() - e).abs() <= 1e-12 * e.abs().max(1.0));
    }

    #[test]
    fn cavity_reassembly(seed in any::<u64>(), beta in 0.0f64..1.5, h in -1.0f64..1.0, n in 5usize..14, k in 1usize..=4, bits in any::<u64>()) {
        let spec = ModelSpec::sk_ising(beta, h);
        let d = sample_disorder(&spec, n, seed).unwrap();
        let c = cavity_decompose(&spec, &d, k).unwrap();
        let x = SpinConfiguration::from_bits(bits & ((1 << n) - 1), n);
        let full = energy(&spec, &d, &x).unwrap();
        let sur = decomposed_energy(&c, &x).unwrap();
        prop_assert!((full - sur - c.intra_term(&x.values)).abs() <= 1e-12 * full.abs().max(1.0));
    }

    #[test]
    fn gray_walk_matches_naive(seed in any::<u64>(), beta in 0.0f64..1.5, h in -1.0f64..1.0, n in 2usize..=10) {
        let spec = ModelSpec::sk_ising(beta, h);
        let d = sample_disorder(&spec, n, seed).unwrap();
        let k = n.min(2);
        let (g, r) = (enumerate(&spec, &d, k).unwrap(), naive_enumerate(&spec, &d, k).unwrap());
        prop_assert!(rel(g.log_partition, r.log_partition) <= 1e-12);
        for (a, b) in g.site_means.iter().zip(&r.site_means) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in g.marginal.probs.iter().zip(&r.marginal.probs) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((g.marginal.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let m = overlap_moments(&g).unwrap();
        prop_assert!(m.mean_r12_sq - m.mean_r12 * m.mean_r12 >= -1e-12);
    }

    #[test]
    fn zero_field_means_vanish(seed in any::<u64>(), beta in 0.0f64..2.0, n in 2usize..=12) {
        let spec = ModelSpec::sk_ising(beta, 0.0);
        let d = sample_disorder(&spec, n, seed).unwrap();
        let s = enumerate(&spec, &d, 1).unwrap();
        prop_assert!(s.site_means.iter().all(|m| m.abs() <= 1e-12));
    }

    #[test]
    fn st_log_weight_is_strongly_concave(
        seed in any::<u64>(),
        kappa in 0.6f64..3.0,
        x in prop::collection::vec(-4.0f64..4.0, 6),
        y in prop::collection::vec(-4.0f64..4.0, 6),
    ) {
        let spec = st_spec(0.5, kappa, 0.3);
        let d = sample_disorder(&spec, 6, seed).unwrap();
        let lw = |v: Vec<f64>| energy(&spec, &d, &SpinConfiguration::new(v, SpinDomain::Real).unwrap()).unwrap();
        let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
        let half_gap: f64 = x.iter().zip(&y).map(|(a, b)| 0.25 * (a - b) * (a - b)).sum();
        let (lx, ly, lm) = (lw(x), lw(y), lw(mid));
        prop_assert!(lm >= 0.5 * (lx + ly) + kappa * half_gap - 1e-9);
    }

    #[test]
    fn stream_keys_separate_roles(master in any::<u64>(), index in any::<u64>()) {
        let keys: Vec<[u8; 32]> = StreamRole::ALL.iter().map(|r| seed_stream(master, index, *r as u8)).collect();
        for i in 0..keys.len() {
            prop_assert_eq!(keys[i], seed_stream(master, index, StreamRole::ALL[i] as u8));
            for j in i + 1..keys.len() {
                prop_assert_ne!(keys[i], keys[j]);
            }
        }
    }

    #[test]
    fn sk_cavity_integral_at_least_one(beta in 0.0f64..0.6, h in 0.0f64..1.5) {
        let rs = solve_sk(beta, h, &Quadrature::default(), &SolverOptions::default()).unwrap();
        let lowest = e_ge_one_min(glasslab::models::ModelKind::SkIsing, &rs, beta, 0.0, 41).unwrap();
        prop_assert!(lowest >= 1.0 - 1e-9);
    }
}

#[test]
fn quadrature_refinement_is_below_tolerance() {
    let (coarse, fine) = (Quadrature::new(41).unwrap(), Quadrature::new(81).unwrap());
    let opts = SolverOptions::default();
    let u = PotentialU::new(Potential::NegLogCosh { amp: 0.5, slope: 1.0 });
    let cases = [
        RsInputs::SkIsing { beta: 0.25, h: 0.3 },
        RsInputs::SkBox { beta: 0.25, h: 0.3 },
        RsInputs::Perceptron { alpha: 0.5, u: PotentialU::new(Potential::Tanh { amp: 0.3, slope: 0.5, shift: 0.0 }), shrink: 1.0 },
        RsInputs::Perceptron { alpha: 0.5, u: PotentialU::new(Potential::GaussBump { amp: -0.4, width: 1.0 }), shrink: 1.0 },
        RsInputs::St { alpha: 0.5, u, kappa: 2.0, h: 0.2, shrink: 1.0 },
    ];
    for inputs in &cases {
        let a = solve(inputs, &coarse, &opts).unwrap();
        let b = solve(inputs, &fine, &opts).unwrap();
        for (name, v) in &a.params {
            let w = b.params[name];
            assert!((v - w).abs() < 1e-8, "{name}: {v} vs {w}");
        }
    }
    // poles of tanh at ±iπ/2 slow Hermite convergence; unit slope settles by 61
    let steep = RsInputs::Perceptron { alpha: 0.5, u: PotentialU::new(Potential::Tanh { amp: 0.3, slope: 1.0, shift: 0.0 }), shrink: 1.0 };
    let a = solve(&steep, &Quadrature::new(61).unwrap(), &opts).unwrap();
    let b = solve(&steep, &fine, &opts).unwrap();
    for (name, v) in &a.params {
        assert!((v - b.params[name]).abs() < 1e-8, "{name}");
    }
}

#[test]
fn st_limiting_variance_is_the_solver_value() {
    let spec = st_spec(0.5, 1.5, 0.2);
    let d = sample_disorder(&spec, 12, 4).unwrap();
    let c = cavity_decompose(&spec, &d, 2).unwrap();
    let rs = solve(&truncated_rs_inputs(&c), &Quadrature::default(), &SolverOptions::default()).unwrap();
    let p = predicted_product(&c, Some(&rs), PredictionForm::Limiting, Some(&[0.3, -0.8]), None).unwrap();
    for s in &p.sites {
        match *s {
            SiteLaw::Gaussian { var, .. } => assert_eq!(var, rs.get("V2").unwrap()),
            _ => panic!("expected a Gaussian"),
        }
    }
}

#[test]
fn sites_are_exchangeable_on_average() {
    // E⟨x_0 x_1⟩ against E⟨x_2 x_3⟩ over 2000 disorders
    let spec = ModelSpec::sk_ising(0.6, 0.3);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for d in 0..2000 {
        let dis = sample_disorder(&spec, 8, d).unwrap();
        let s = enumerate(&spec, &dis, 1).unwrap();
        a.push(s.pair(0, 1).unwrap() + s.site_means[0]);
        b.push(s.pair(2, 3).unwrap() + s.site_means[2]);
    }
    let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!(mean.abs() <= 4.0 * (var / n).sqrt(), "{mean} vs se {}", (var / n).sqrt());
}
