use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_ORDER: usize = 61;

/// Gauss rules for `E f(z)`, `z ~ N(0, 1)` (probabilists' Hermite) and for
/// `∫_{-1}^{1} f(x) dx` (Legendre), both of order `Q`.
#[derive(Clone, Debug, Serialize)]
pub struct Quadrature {
    pub hermite_nodes: Vec<f64>,
    pub hermite_weights: Vec<f64>,
    pub legendre_nodes: Vec<f64>,
    pub legendre_weights: Vec<f64>,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("default order is valid")
    }
}

impl Quadrature {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::param("quad_order", "must be at least 2"));
        }
        let (hermite_nodes, hermite_weights) = gauss_hermite_normal(order)?;
        let (legendre_nodes, legendre_weights) = gauss_legendre(order)?;
        Ok(Self { hermite_nodes, hermite_weights, legendre_nodes, legendre_weights })
    }

    pub fn order(&self) -> usize {
        self.hermite_nodes.len()
    }

    /// The rule used for certification, order `2Q + 1`.
    pub fn refined(&self) -> Result<Self> {
        Self::new(2 * self.order() + 1)
    }

    /// `E f(z)` for a standard Gaussian `z`.
    #[inline]
    pub fn gauss<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.hermite_nodes
            .iter()
            .zip(&self.hermite_weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// `∫_{-1}^{1} f(x) dx`.
    #[inline]
    pub fn legendre<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.legendre_nodes
            .iter()
            .zip(&self.legendre_weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Golub-Welsch: nodes are the eigenvalues of the Jacobi matrix of the
/// probabilists' Hermite recurrence (zero diagonal, off-diagonal `√j`),
/// weights the squared first components of its eigenvectors. Only the
/// first row of the eigenvector matrix is carried through the QL sweeps.
fn gauss_hermite_normal(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = (1..=n).map(|j| if j < n { (j as f64).sqrt() } else { 0.0 }).collect();
    let mut z = vec![0.0; n];
    z[0] = 1.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Solver(format!("Gauss-Hermite eigenvalue {l} of {n} did not converge")));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut pairs: Vec<(f64, f64)> = d.into_iter().zip(z.into_iter().map(|v| v * v)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    // exact symmetry about the origin
    for i in 0..n / 2 {
        let x = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[n - 1 - i]);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((nodes, weights))
}

fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        let mut converged = false;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j - 1) as f64 * z * p2 - (j - 1) as f64 * p3) / j as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Solver(format!("Gauss-Legendre node {i} of {n} did not converge")));
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    Ok((x, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_moments() {
        for q in [21, 41, 61, 81, 123, 201] {
            let quad = Quadrature::new(q).unwrap();
            assert!((quad.hermite_weights.iter().sum::<f64>() - 1.0).abs() < 1e-12, "Q={q}");
            assert!(quad.gauss(|z| z).abs() < 1e-12);
            assert!((quad.gauss(|z| z * z) - 1.0).abs() < 1e-10);
            assert!((quad.gauss(|z| z.powi(4)) - 3.0).abs() < 1e-10);
            assert!((quad.gauss(|z| z.powi(6)) - 15.0).abs() < 1e-9);
        }
    }

    #[test]
    fn hermite_against_mgf() {
        let quad = Quadrature::default();
        // E e^{tz} = e^{t²/2}
        for t in [0.3, 1.0, 2.5] {
            assert!((quad.gauss(|z| (t * z).exp()) / (0.5 * t * t).exp() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_polynomials_and_exp() {
        let quad = Quadrature::new(21).unwrap();
        assert!((quad.legendre(|_| 1.0) - 2.0).abs() < 1e-14);
        assert!((quad.legendre(|x| x.powi(10)) - 2.0 / 11.0).abs() < 1e-14);
        let exact = 2.0 * 3f64.sinh() / 3.0;
        assert!((quad.legendre(|x| (3.0 * x).exp()) - exact).abs() < 1e-12);
    }

    #[test]
    fn nodes_sorted_and_symmetric() {
        let quad = Quadrature::new(8).unwrap();
        for v in [&quad.hermite_nodes, &quad.legendre_nodes] {
            assert!(v.windows(2).all(|p| p[0] < p[1]));
            for i in 0..8 {
                assert!((v[i] + v[7 - i]).abs() < 1e-14);
            }
        }
    }
}
