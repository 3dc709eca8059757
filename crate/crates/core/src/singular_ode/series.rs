use crate::error::{Error, Result};
use crate::linalg::{cpow, det, falling, CMatrix, C64, ONE, ZERO};

use super::charpoly::CharData;

/// Default bound on `|rho x|` for series evaluation.
pub const DEFAULT_R_MAX: f64 = 40.0;

/// Coefficients of one Frobenius solution `C_j(x, lambda) = x^{mu_j} sum_k c_jk (rho x)^{nk}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSolution {
    /// 1-based index `j`.
    pub index: usize,
    pub mu: C64,
    pub coeffs: Vec<C64>,
    pub tol: f64,
}

impl SeriesSolution {
    pub fn c0(&self) -> C64 {
        self.coeffs[0]
    }

    pub fn truncation(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// The Frobenius basis `C_1 .. C_n` of the unperturbed equation.
#[derive(Debug, Clone, PartialEq)]
pub struct FrobeniusBasis {
    pub cd: CharData,
    pub series: Vec<SeriesSolution>,
    pub r_max: f64,
}

/// Vandermonde determinant `det[mu_j^{nu-1}]`.
pub fn vandermonde(mu: &[C64]) -> C64 {
    let n = mu.len();
    det(&CMatrix::from_fn(n, n, |j, v| mu[j].powi(v as i32)))
}

/// Builds `C_1 .. C_n` with `c_j0 = 1` for `j < n` and
/// `c_n0 = 1 / det[mu_j^{nu-1}]`, truncated so that the tail stays below
/// `tol` relative to the largest term for `|rho x| <= r_max`.
pub fn build_series(cd: &CharData, tol: f64) -> FrobeniusBasis {
    build_series_with_budget(cd, tol, DEFAULT_R_MAX)
}

pub fn build_series_with_budget(cd: &CharData, tol: f64, r_max: f64) -> FrobeniusBasis {
    let n = cd.n;
    let vdm = vandermonde(&cd.mu);
    let rn = r_max.powi(n as i32);
    let series = (0..n)
        .map(|j| {
            let mu = cd.mu[j];
            let c0 = if j + 1 == n { ONE / vdm } else { ONE };
            let mut coeffs = vec![c0];
            let mut peak = c0.norm();
            let mut term = c0.norm();
            let mut k = 0usize;
            loop {
                k += 1;
                let d = cd.delta(mu + (k * n) as f64);
                let next = coeffs[k - 1] / d;
                coeffs.push(next);
                let ratio = rn / d.norm();
                term *= ratio;
                peak = peak.max(term);
                if (ratio < 0.5 && term < tol * peak * 0.5) || k > 4000 {
                    break;
                }
            }
            SeriesSolution { index: j + 1, mu, coeffs, tol }
        })
        .collect();
    FrobeniusBasis { cd: cd.clone(), series, r_max }
}

impl FrobeniusBasis {
    pub fn n(&self) -> usize {
        self.cd.n
    }

    fn check_budget(&self, z: C64, lambda: C64) -> Result<()> {
        let v = lambda.norm().powf(1.0 / self.n() as f64) * z.norm();
        if v > self.r_max {
            return Err(Error::OutOfConvergenceBudget { value: v, limit: self.r_max });
        }
        Ok(())
    }

    /// `C_j^{(nu)}(x, lambda)` for `nu = 0 .. n-1`, `x > 0` (1-based `j`).
    pub fn eval_c(&self, j: usize, x: f64, lambda: C64) -> Result<Vec<C64>> {
        self.eval_c_complex(j, C64::new(x, 0.0), lambda)
    }

    /// Same as [`eval_c`](Self::eval_c) at a complex point of the cut plane,
    /// with principal `z^{mu}`.
    pub fn eval_c_complex(&self, j: usize, z: C64, lambda: C64) -> Result<Vec<C64>> {
        self.check_budget(z, lambda)?;
        let n = self.n();
        let s = &self.series[j - 1];
        let zn = z.powi(n as i32) * lambda;
        let mut out = vec![ZERO; n];
        // x^{mu - nu} pieces
        let base: Vec<C64> = (0..n).map(|nu| cpow(z, s.mu - nu as f64)).collect();
        let mut pw = ONE;
        for (k, ck) in s.coeffs.iter().enumerate() {
            let a = s.mu + (n * k) as f64;
            let t = ck * pw;
            for nu in 0..n {
                out[nu] += t * falling(a, nu) * base[nu];
            }
            pw *= zn;
        }
        Ok(out)
    }

    /// Matrix `W[nu][j] = C_j^{(nu)}(x, lambda)`.
    pub fn wronskian_matrix(&self, x: f64, lambda: C64) -> Result<CMatrix> {
        let n = self.n();
        let mut m = CMatrix::zeros(n, n);
        for j in 0..n {
            let v = self.eval_c(j + 1, x, lambda)?;
            for nu in 0..n {
                m[(nu, j)] = v[nu];
            }
        }
        Ok(m)
    }

    pub fn wronskian(&self, x: f64, lambda: C64) -> Result<C64> {
        Ok(det(&self.wronskian_matrix(x, lambda)?))
    }
}
