use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::quadrature::Quadrature;
use crate::error::{Error, Result};
use crate::models::{ModelKind, PotentialU};

/// Iteration controls shared by all solvers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate, `x ← (1 − λ) x + λ F(x)`.
    pub damping: f64,
    pub q0: f64,
    pub rho0: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000, damping: 0.5, q0: 0.5, rho0: 0.75 }
    }
}

impl SolverOptions {
    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("tol", "must be > 0"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::param("damping", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.q0) {
            return Err(Error::param("q0", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Parameters of one RS system. `shrink` composes the potential with
/// `y ↦ shrink · y`; truncated systems pass `α⁻ = M/(N − k)` together with
/// `shrink = √((N − k)/N)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RsInputs {
    SkIsing { beta: f64, h: f64 },
    SkBox { beta: f64, h: f64 },
    Perceptron { alpha: f64, u: PotentialU, shrink: f64 },
    St { alpha: f64, u: PotentialU, kappa: f64, h: f64, shrink: f64 },
}

impl RsInputs {
    pub fn kind(&self) -> ModelKind {
        match self {
            RsInputs::SkIsing { .. } => ModelKind::SkIsing,
            RsInputs::SkBox { .. } => ModelKind::SkBox,
            RsInputs::Perceptron { .. } => ModelKind::Perceptron,
            RsInputs::St { .. } => ModelKind::St,
        }
    }
}

/// A reached fixed point with its certification data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RSSolution {
    pub kind: ModelKind,
    pub inputs: RsInputs,
    pub params: BTreeMap<String, f64>,
    pub residual_inf: f64,
    pub iterations: usize,
    pub converged: bool,
    pub quad_order: usize,
    pub tol: f64,
    /// Starting overlap, i.e. the basin the iteration was seeded in.
    pub q0: f64,
}

impl RSSolution {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.params.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::Solver(format!("RS solution for {} has no `{name}`", self.kind)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Moments of `u′`, `u′²`, `u″` under the tilt `e^{u(θ)}` with
/// `θ = center + spread·ξ`.
#[derive(Clone, Copy, Debug, Default)]
struct Tilted {
    d1: f64,
    d1_sq: f64,
    d2: f64,
}

fn tilted(u: &PotentialU, center: f64, spread: f64, quad: &Quadrature) -> Tilted {
    if u.is_zero() {
        return Tilted::default();
    }
    let top = quad
        .hermite_nodes
        .iter()
        .map(|&xi| u.eval(center + spread * xi))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut a, mut b, mut c) = (0.0, 0.0, 0.0, 0.0);
    for (&xi, &w) in quad.hermite_nodes.iter().zip(&quad.hermite_weights) {
        let theta = center + spread * xi;
        let e = w * (u.eval(theta) - top).exp();
        let d1 = u.d1(theta);
        z += e;
        a += e * d1;
        b += e * d1 * d1;
        c += e * u.d2(theta);
    }
    Tilted { d1: a / z, d1_sq: b / z, d2: c / z }
}

fn sk_map(beta: f64, h: f64, q: f64, quad: &Quadrature) -> f64 {
    let s = beta * q.max(0.0).sqrt();
    quad.gauss(|z| (s * z + h).tanh().powi(2))
}

fn sk_box_map(beta: f64, h: f64, q: f64, rho: f64, quad: &Quadrature) -> (f64, f64) {
    let s = beta * q.max(0.0).sqrt();
    let c = 0.5 * beta * beta * (rho - q).max(0.0);
    let mut q_new = 0.0;
    let mut rho_new = 0.0;
    for (&z, &wz) in quad.hermite_nodes.iter().zip(&quad.hermite_weights) {
        let a = s * z + h;
        let top = quad
            .legendre_nodes
            .iter()
            .map(|&x| a * x + c * x * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut zz, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for (&x, &wx) in quad.legendre_nodes.iter().zip(&quad.legendre_weights) {
            let e = wx * (a * x + c * x * x - top).exp();
            zz += e;
            m1 += e * x;
            m2 += e * x * x;
        }
        q_new += wz * (m1 / zz).powi(2);
        rho_new += wz * m2 / zz;
    }
    (q_new, rho_new)
}

/// `(r, τ)` from `q` with `θ = √q z + √(1 − q) ξ`.
fn perceptron_rt(alpha: f64, u: &PotentialU, q: f64, quad: &Quadrature) -> (f64, f64) {
    let q = q.clamp(0.0, 1.0);
    let (sq, sp) = (q.sqrt(), (1.0 - q).sqrt());
    let mut r = 0.0;
    let mut tau = 0.0;
    for (&z, &w) in quad.hermite_nodes.iter().zip(&quad.hermite_weights) {
        let t = tilted(u, sq * z, sp, quad);
        r += w * t.d1 * t.d1;
        tau += w * t.d1_sq;
    }
    (alpha * r, alpha * tau)
}

fn perceptron_q(r: f64, quad: &Quadrature) -> f64 {
    let s = r.max(0.0).sqrt();
    quad.gauss(|z| (s * z).tanh().powi(2))
}

/// `(r, τ, σ)` from `(ρ, q)` with `θ = √q z + √(ρ − q) ξ`.
fn st_rts(alpha: f64, u: &PotentialU, rho: f64, q: f64, quad: &Quadrature) -> (f64, f64, f64) {
    let (sq, sp) = (q.max(0.0).sqrt(), (rho - q).max(0.0).sqrt());
    let (mut r, mut tau, mut sigma) = (0.0, 0.0, 0.0);
    for (&z, &w) in quad.hermite_nodes.iter().zip(&quad.hermite_weights) {
        let t = tilted(u, sq * z, sp, quad);
        r += w * t.d1 * t.d1;
        tau += w * t.d1_sq;
        sigma += w * t.d2;
    }
    (alpha * r, alpha * tau, alpha * sigma)
}

/// `(ρ, q, R)` from `(r, τ, σ)`.
fn st_closed(kappa: f64, h: f64, r: f64, tau: f64, sigma: f64) -> (f64, f64, f64) {
    let big_r = 2.0 * kappa + r - sigma - tau;
    let q = (r + h * h) / (big_r * big_r);
    (1.0 / big_r + q, q, big_r)
}

fn finite_or(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Solver(format!("{what}: non-finite iterate (quadrature underflow?)")))
    }
}

const MAX_HALVINGS: usize = 40;

/// `q = E tanh²(β√q z + h)`.
pub fn solve_sk(beta: f64, h: f64, quad: &Quadrature, opts: &SolverOptions) -> Result<RSSolution> {
    opts.check()?;
    if !(beta >= 0.0) {
        return Err(Error::param("beta", "must be ≥ 0"));
    }
    let mut q = opts.q0;
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let f = sk_map(beta, h, q, quad);
        defect = (f - q).abs();
        if defect < opts.tol {
            // one undamped step lands closer to the fixed point
            let polished = (sk_map(beta, h, f, quad) - f).abs();
            if polished <= defect {
                q = f;
                defect = polished;
            }
            break;
        }
        q = (1.0 - opts.damping) * q + opts.damping * f;
        iterations += 1;
    }
    finite_or(&[q], "SK")?;
    Ok(RSSolution {
        kind: ModelKind::SkIsing,
        inputs: RsInputs::SkIsing { beta, h },
        params: params(&[("q", q)]),
        residual_inf: defect,
        iterations,
        converged: defect < opts.tol,
        quad_order: quad.order(),
        tol: opts.tol,
        q0: opts.q0,
    })
}

/// Joint `(q, ρ)` system of the `[-1, 1]` model.
pub fn solve_sk_box(beta: f64, h: f64, quad: &Quadrature, opts: &SolverOptions) -> Result<RSSolution> {
    opts.check()?;
    if !(beta >= 0.0) {
        return Err(Error::param("beta", "must be ≥ 0"));
    }
    let (mut q, mut rho) = (opts.q0, opts.rho0.max(opts.q0));
    let mut damping = opts.damping;
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (fq, frho) = sk_box_map(beta, h, q, rho, quad);
        defect = (fq - q).abs().max((frho - rho).abs());
        if defect < opts.tol {
            if frho >= fq {
                let (gq, grho) = sk_box_map(beta, h, fq, frho, quad);
                let polished = (gq - fq).abs().max((grho - frho).abs());
                if polished <= defect {
                    q = fq;
                    rho = frho;
                    defect = polished;
                }
            }
            break;
        }
        let mut halvings = 0;
        loop {
            let nq = (1.0 - damping) * q + damping * fq;
            let nrho = (1.0 - damping) * rho + damping * frho;
            if nrho >= nq {
                q = nq;
                rho = nrho;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Solver(format!(
                    "SK_BOX: rho < q persists at iteration {iterations} (q = {nq}, rho = {nrho})"
                )));
            }
            damping *= 0.5;
        }
        iterations += 1;
    }
    finite_or(&[q, rho], "SK_BOX")?;
    Ok(RSSolution {
        kind: ModelKind::SkBox,
        inputs: RsInputs::SkBox { beta, h },
        params: params(&[("q", q), ("rho", rho)]),
        residual_inf: defect,
        iterations,
        converged: defect < opts.tol,
        quad_order: quad.order(),
        tol: opts.tol,
        q0: opts.q0,
    })
}

/// Joint `(q, r)` iteration; `τ` is evaluated at the reached point.
pub fn solve_perceptron(
    alpha: f64,
    u: &PotentialU,
    shrink: f64,
    quad: &Quadrature,
    opts: &SolverOptions,
) -> Result<RSSolution> {
    opts.check()?;
    check_gardner(alpha, shrink)?;
    let ut = u.shrunk(shrink);
    let (mut q, mut r) = (opts.q0, 0.0);
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (fr, _) = perceptron_rt(alpha, &ut, q, quad);
        let fq = perceptron_q(r, quad);
        finite_or(&[fr, fq], "PERCEPTRON")?;
        if fr < 0.0 {
            return Err(Error::Solver(format!("PERCEPTRON: negative r = {fr}")));
        }
        defect = (fq - q).abs().max((fr - r).abs());
        if defect < opts.tol {
            let (gr, _) = perceptron_rt(alpha, &ut, fq, quad);
            let gq = perceptron_q(fr, quad);
            let polished = (gq - fq).abs().max((gr - fr).abs());
            if polished <= defect {
                q = fq;
                r = fr;
                defect = polished;
            }
            break;
        }
        q = (1.0 - opts.damping) * q + opts.damping * fq;
        r = (1.0 - opts.damping) * r + opts.damping * fr;
        iterations += 1;
    }
    let (_, tau) = perceptron_rt(alpha, &ut, q, quad);
    Ok(RSSolution {
        kind: ModelKind::Perceptron,
        inputs: RsInputs::Perceptron { alpha, u: *u, shrink },
        params: params(&[("q", q), ("r", r), ("tau", tau)]),
        residual_inf: defect,
        iterations,
        converged: defect < opts.tol,
        quad_order: quad.order(),
        tol: opts.tol,
        q0: opts.q0,
    })
}

fn check_gardner(alpha: f64, shrink: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", "must be > 0"));
    }
    if !(shrink > 0.0 && shrink <= 1.0) {
        return Err(Error::param("shrink", "must lie in (0, 1]"));
    }
    Ok(())
}

/// Five-parameter system `(r, τ, σ, ρ, q)`; also reports `R` and `V2 = 1/R`.
pub fn solve_st(
    alpha: f64,
    u: &PotentialU,
    kappa: f64,
    h: f64,
    shrink: f64,
    quad: &Quadrature,
    opts: &SolverOptions,
) -> Result<RSSolution> {
    opts.check()?;
    check_gardner(alpha, shrink)?;
    if !(kappa > 0.0) {
        return Err(Error::param("kappa", "must be > 0"));
    }
    let ut = u.shrunk(shrink);
    let (mut r, mut tau, mut sigma) = (0.0, 0.0, 0.0);
    let mut q = opts.q0;
    let mut rho = opts.rho0.max(q);
    let mut damping = opts.damping;
    let mut defect = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let (fr, ftau, fsigma) = st_rts(alpha, &ut, rho, q, quad);
        finite_or(&[fr, ftau, fsigma], "ST")?;
        let big_r = 2.0 * kappa + r - sigma - tau;
        let closed = (big_r > 0.0).then(|| st_closed(kappa, h, r, tau, sigma));
        defect = [fr - r, ftau - tau, fsigma - sigma]
            .iter()
            .map(|d| d.abs())
            .fold(0.0, f64::max);
        if let Some((frho, fq, _)) = closed {
            defect = defect.max((frho - rho).abs()).max((fq - q).abs());
        } else {
            defect = f64::INFINITY;
        }
        if defect < opts.tol {
            let (crho, cq, _) = st_closed(kappa, h, fr, ftau, fsigma);
            let polished = st_defect(alpha, &ut, kappa, h, [fr, ftau, fsigma, crho, cq], quad);
            if polished <= defect {
                (r, tau, sigma, rho, q) = (fr, ftau, fsigma, crho, cq);
                defect = polished;
            }
            break;
        }
        let mut halvings = 0;
        loop {
            let nr = (1.0 - damping) * r + damping * fr;
            let ntau = (1.0 - damping) * tau + damping * ftau;
            let nsigma = (1.0 - damping) * sigma + damping * fsigma;
            let (crho, cq, cbig_r) = st_closed(kappa, h, nr, ntau, nsigma);
            if cbig_r > 0.0 {
                r = nr;
                tau = ntau;
                sigma = nsigma;
                rho = (1.0 - damping) * rho + damping * crho;
                q = (1.0 - damping) * q + damping * cq;
                break;
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(Error::Solver(format!(
                    "ST: R = 2κ + r − σ − τ stays ≤ 0 at iteration {iterations} (r = {nr}, tau = {ntau}, sigma = {nsigma})"
                )));
            }
            damping *= 0.5;
        }
        iterations += 1;
    }
    let big_r = 2.0 * kappa + r - sigma - tau;
    Ok(RSSolution {
        kind: ModelKind::St,
        inputs: RsInputs::St { alpha, u: *u, kappa, h, shrink },
        params: params(&[
            ("r", r),
            ("tau", tau),
            ("sigma", sigma),
            ("rho", rho),
            ("q", q),
            ("R", big_r),
            ("V2", 1.0 / big_r),
        ]),
        residual_inf: defect,
        iterations,
        converged: defect < opts.tol,
        quad_order: quad.order(),
        tol: opts.tol,
        q0: opts.q0,
    })
}

fn st_defect(alpha: f64, ut: &PotentialU, kappa: f64, h: f64, x: [f64; 5], quad: &Quadrature) -> f64 {
    let [r, tau, sigma, rho, q] = x;
    let (fr, ftau, fsigma) = st_rts(alpha, ut, rho, q, quad);
    let (frho, fq, big_r) = st_closed(kappa, h, r, tau, sigma);
    if big_r <= 0.0 {
        return f64::INFINITY;
    }
    [fr - r, ftau - tau, fsigma - sigma, frho - rho, fq - q]
        .iter()
        .map(|d| d.abs())
        .fold(0.0, f64::max)
}

/// Dispatches on the inputs.
pub fn solve(inputs: &RsInputs, quad: &Quadrature, opts: &SolverOptions) -> Result<RSSolution> {
    match *inputs {
        RsInputs::SkIsing { beta, h } => solve_sk(beta, h, quad, opts),
        RsInputs::SkBox { beta, h } => solve_sk_box(beta, h, quad, opts),
        RsInputs::Perceptron { alpha, u, shrink } => solve_perceptron(alpha, &u, shrink, quad, opts),
        RsInputs::St { alpha, u, kappa, h, shrink } => {
            solve_st(alpha, &u, kappa, h, shrink, quad, opts)
        }
    }
}

/// `‖x − F(x)‖_∞` over every equation of the system, recomputed with the
/// refined rule of order `2Q + 1`.
pub fn residual(inputs: &RsInputs, params: &BTreeMap<String, f64>, quad: &Quadrature) -> Result<f64> {
    let fine = quad.refined()?;
    let get = |name: &str| {
        params
            .get(name)
            .copied()
            .ok_or_else(|| Error::param("params", format!("missing `{name}` for {}", inputs.kind())))
    };
    let defect = match *inputs {
        RsInputs::SkIsing { beta, h } => {
            let q = get("q")?;
            (sk_map(beta, h, q, &fine) - q).abs()
        }
        RsInputs::SkBox { beta, h } => {
            let (q, rho) = (get("q")?, get("rho")?);
            let (fq, frho) = sk_box_map(beta, h, q, rho, &fine);
            (fq - q).abs().max((frho - rho).abs())
        }
        RsInputs::Perceptron { alpha, u, shrink } => {
            let (q, r, tau) = (get("q")?, get("r")?, get("tau")?);
            let ut = u.shrunk(shrink);
            let (fr, ftau) = perceptron_rt(alpha, &ut, q, &fine);
            let fq = perceptron_q(r, &fine);
            (fq - q).abs().max((fr - r).abs()).max((ftau - tau).abs())
        }
        RsInputs::St { alpha, u, kappa, h, shrink } => {
            let (r, tau, sigma, rho, q) =
                (get("r")?, get("tau")?, get("sigma")?, get("rho")?, get("q")?);
            st_defect(alpha, &u.shrunk(shrink), kappa, h, [r, tau, sigma, rho, q], &fine)
        }
    };
    Ok(defect)
}
