use nalgebra::Schur;

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, C64, ONE, ZERO};

/// The characteristic (indicial) polynomial
/// `Delta(mu) = sum_j nu_j mu (mu-1) ... (mu-j+1)` with `nu_n = 1`, `nu_{n-1} = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharPoly {
    pub n: usize,
    /// `nu_0 .. nu_{n-2}`.
    pub nu: Vec<C64>,
    /// Monomial coefficients, `coeffs[i]` multiplies `mu^i`; `coeffs[n] = 1`.
    pub coeffs: Vec<C64>,
}

impl CharPoly {
    pub fn eval(&self, mu: C64) -> C64 {
        self.coeffs.iter().rev().fold(ZERO, |acc, a| acc * mu + a)
    }

    pub fn deriv(&self, mu: C64) -> C64 {
        self.coeffs.iter().enumerate().skip(1).rev().fold(ZERO, |acc, (i, a)| acc * mu + a * i as f64)
    }
}

pub fn build_char_poly(nu: &[C64], n: usize) -> Result<CharPoly> {
    if n < 2 || nu.len() != n - 1 {
        return Err(Error::WrongCoefficientCount { expected: n.saturating_sub(1), got: nu.len() });
    }
    let mut coeffs = vec![ZERO; n + 1];
    // running product mu (mu-1) ... (mu-j+1), monomial coefficients
    let mut prod = vec![ONE];
    for j in 0..=n {
        let weight = if j == n {
            ONE
        } else if j == n - 1 {
            ZERO
        } else {
            nu[j]
        };
        for (i, a) in prod.iter().enumerate() {
            coeffs[i] += weight * a;
        }
        let mut next = vec![ZERO; prod.len() + 1];
        for (i, a) in prod.iter().enumerate() {
            next[i + 1] += *a;
            next[i] -= *a * j as f64;
        }
        prod = next;
    }
    Ok(CharPoly { n, nu: nu.to_vec(), coeffs })
}

/// Roots of the characteristic polynomial together with the derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct CharData {
    pub n: usize,
    pub nu: Vec<C64>,
    /// Roots sorted by real part, ties by imaginary part.
    pub mu: Vec<C64>,
    /// `n - 1 - Re(mu_n - mu_1)`.
    pub theta: f64,
    pub poly: CharPoly,
}

impl CharData {
    pub fn delta(&self, mu: C64) -> C64 {
        self.poly.eval(mu)
    }

    /// Root sum; equals `n(n-1)/2` by Vieta since `nu_{n-1} = 0`.
    pub fn root_sum(&self) -> C64 {
        self.mu.iter().sum()
    }
}

const ROOT_TOL: f64 = 1e-9;

/// Companion-matrix eigenvalues polished by Newton, sorted and checked
/// against the standing admissibility assumptions.
pub fn compute_char_roots(poly: &CharPoly) -> Result<CharData> {
    let n = poly.n;
    let mut comp = CMatrix::zeros(n, n);
    for i in 1..n {
        comp[(i, i - 1)] = ONE;
    }
    for i in 0..n {
        comp[(i, n - 1)] = -poly.coeffs[i];
    }
    let (_, t) = Schur::new(comp).unpack();
    let mut mu: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    for z in mu.iter_mut() {
        for _ in 0..8 {
            let d = poly.deriv(*z);
            if d.norm() < 1e-300 {
                break;
            }
            let step = poly.eval(*z) / d;
            *z -= step;
            if step.norm() < 1e-16 * (1.0 + z.norm()) {
                break;
            }
        }
    }
    mu.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));

    for i in 0..n {
        for j in i + 1..n {
            if (mu[j].re - mu[i].re).abs() < ROOT_TOL * (1.0 + mu[i].norm()) {
                return Err(Error::EqualRealParts { i: i + 1, j: j + 1 });
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = (mu[j] - mu[i]) / n as f64;
            if d.im.abs() < ROOT_TOL && (d.re - d.re.round()).abs() < ROOT_TOL {
                return Err(Error::RootsDifferByMultipleOfN { i: i + 1, j: j + 1 });
            }
        }
    }
    for (i, z) in mu.iter().enumerate() {
        for m in 0..n.saturating_sub(2) {
            if (z - m as f64).norm() < ROOT_TOL {
                return Err(Error::RootInForbiddenIntegerSet { index: i + 1, value: m as f64 });
            }
        }
    }
    let theta = n as f64 - 1.0 - (mu[n - 1].re - mu[0].re);
    Ok(CharData { n, nu: poly.nu.clone(), mu, theta, poly: poly.clone() })
}
