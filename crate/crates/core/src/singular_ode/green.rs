use crate::error::Result;
use crate::linalg::{det, rpow, CMatrix, C64, ZERO};

use super::series::FrobeniusBasis;

/// `C*_j(t, lambda)`: the `(n-1)`-row determinant of `C_k^{(nu)}(t)`,
/// `nu = 0..n-2`, over `k != n-j+1` (1-based `j`).
pub fn c_star(basis: &FrobeniusBasis, j: usize, t: f64, lambda: C64) -> Result<C64> {
    let n = basis.n();
    let w = basis.wronskian_matrix(t, lambda)?;
    Ok(c_star_from(&w, n, n - j + 1))
}

fn c_star_from(w: &CMatrix, n: usize, skip: usize) -> C64 {
    let m = CMatrix::from_fn(n - 1, n - 1, |nu, col| {
        let k = if col + 1 >= skip { col + 1 } else { col };
        w[(nu, k)]
    });
    det(&m)
}

/// Weights `a_j(t) = (-1)^{n-j} C*_{n-j+1}(t)` such that
/// `d^nu/dx^nu g(x,t) = sum_j a_j(t) C_j^{(nu)}(x)`.
pub fn green_weights(basis: &FrobeniusBasis, t: f64, lambda: C64) -> Result<Vec<C64>> {
    let n = basis.n();
    let w = basis.wronskian_matrix(t, lambda)?;
    Ok(green_weights_from(&w, n))
}

pub(crate) fn green_weights_from(w: &CMatrix, n: usize) -> Vec<C64> {
    (1..=n)
        .map(|j| {
            let sign = if (n - j) % 2 == 0 { 1.0 } else { -1.0 };
            c_star_from(w, n, j) * sign
        })
        .collect()
}

/// `d^nu/dx^nu g(x, t, lambda)`, the Cauchy Green's function of the
/// unperturbed operator, for `0 < t <= x`.
pub fn green_g(basis: &FrobeniusBasis, x: f64, t: f64, lambda: C64, nu: usize) -> Result<C64> {
    let a = green_weights(basis, t, lambda)?;
    let mut s = ZERO;
    for (j, aj) in a.iter().enumerate() {
        s += aj * basis.eval_c(j + 1, x, lambda)?[nu];
    }
    Ok(s)
}

/// The ratio `|d^nu g| / sum_j |x^{mu_j-nu} t^{n-1-mu_j}|`, whose supremum over
/// `|rho x| <= C0`, `t <= x` is the constant of the small-argument bound.
pub fn green_bound_ratio(basis: &FrobeniusBasis, x: f64, t: f64, lambda: C64, nu: usize) -> Result<f64> {
    let n = basis.n() as f64;
    let g = green_g(basis, x, t, lambda, nu)?.norm();
    let denom: f64 = basis.cd.mu.iter().map(|m| (rpow(x, *m - nu as f64) * rpow(t, n - 1.0 - *m)).norm()).sum();
    Ok(g / denom)
}
