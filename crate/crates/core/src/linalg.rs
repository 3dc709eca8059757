//! Small dense complex linear algebra and combinatorial helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn det(m: &CMatrix) -> C64 {
    if m.nrows() == 0 {
        return ONE;
    }
    m.clone().lu().determinant()
}

/// Solves `a x = b`; `None` if the factorization is singular.
pub fn solve(a: &CMatrix, b: &CVector) -> Option<CVector> {
    a.clone().lu().solve(b)
}

/// 2-norm condition number via singular values. Infinite for singular input.
pub fn cond(a: &CMatrix) -> f64 {
    if a.nrows() == 0 {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Falling factorial `z (z-1) ... (z-m+1)`; equals 1 for `m = 0`.
pub fn falling(z: C64, m: usize) -> C64 {
    (0..m).fold(ONE, |acc, k| acc * (z - k as f64))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `x^mu` for real `x > 0`.
pub fn rpow(x: f64, mu: C64) -> C64 {
    (mu * x.ln()).exp()
}

/// Principal power `z^mu` with `arg z` in `(-pi, pi]`.
pub fn cpow(z: C64, mu: C64) -> C64 {
    if z == ZERO {
        return if mu == ZERO { ONE } else { ZERO };
    }
    (mu * z.ln()).exp()
}

/// Determinant of the minor obtained by deleting row `r` and column `col`.
pub fn minor(m: &CMatrix, r: usize, col: usize) -> C64 {
    det(&m.clone().remove_row(r).remove_column(col))
}

/// Relative distance `|a - b| / max(1, |b|)`.
pub fn rel_err(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn falling_factorial_values() {
        assert_eq!(falling(c(5.0, 0.0), 0), ONE);
        assert_eq!(falling(c(5.0, 0.0), 3), c(60.0, 0.0));
        assert_eq!(falling(c(2.0, 0.0), 3), ZERO);
    }

    #[test]
    fn det_and_cond() {
        let m = CMatrix::from_row_slice(2, 2, &[ONE, -ONE, ONE, ONE]);
        assert!((det(&m) - c(2.0, 0.0)).norm() < 1e-14);
        assert!((cond(&m) - 1.0).abs() < 1e-12);
        let s = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ONE, ONE]);
        assert!(cond(&s) > 1e14);
    }

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        assert!((loglog_slope(&xs, &ys) + 1.0).abs() < 1e-12);
    }
}
