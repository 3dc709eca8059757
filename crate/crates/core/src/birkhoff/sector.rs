//! Sectors of the `rho`-plane and of the `x`-plane, and the ordered roots of unity `R_k`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{det, CMatrix, C64, I};

/// `eps_{s+1}^{mu} = exp(2 pi i s mu / n)`.
pub fn eps_pow(n: usize, s: usize, mu: C64) -> C64 {
    (I * (2.0 * PI * s as f64 / n as f64) * mu).exp()
}

/// `eps_k = exp(2 pi i (k-1)/n)`, `k = 1..n`.
pub fn roots_of_unity(n: usize) -> Vec<C64> {
    (0..n).map(|s| C64::from_polar(1.0, 2.0 * PI * s as f64 / n as f64)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectorData {
    pub n: usize,
    pub k0: usize,
    pub eps: Vec<C64>,
    /// `R_k = eps[perm[k-1]]`, ordered by increasing `Re(rho R_k)` in sector `k0`.
    pub perm: Vec<usize>,
    pub r: Vec<C64>,
    pub omega: C64,
    /// Rotation `rho = eps^rot rho_hat` bringing `rho_hat` into sector 0 or 1.
    pub rot: usize,
}

/// Orders the roots of unity for sector `k0` of the `rho`-plane.
pub fn build_sector(n: usize, k0: usize) -> Result<SectorData> {
    if n < 2 || k0 >= 2 * n {
        return Err(Error::InvalidConfig(format!("sector {k0} does not exist for n = {n}")));
    }
    let eps = roots_of_unity(n);
    let (lo, hi) = sector_interval(n, k0 as i64);
    let order_at = |a: f64| {
        let rho = C64::from_polar(1.0, a);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.sort_by(|&x, &y| (rho * eps[x]).re.partial_cmp(&(rho * eps[y]).re).unwrap());
        perm
    };
    let perm = order_at(0.5 * (lo + hi));
    for f in [0.25, 0.75] {
        let other = order_at(lo + f * (hi - lo));
        assert_eq!(other, perm, "ordering of Re(rho R_k) changes inside the open sector");
    }
    let r: Vec<C64> = perm.iter().map(|&s| eps[s]).collect();
    let omega = det(&CMatrix::from_fn(n, n, |k, nu| r[k].powi(nu as i32)));
    Ok(SectorData { n, k0, eps, perm, r, omega, rot: k0 / 2 })
}

/// `S_nu`: `arg` in `(nu pi / n, (nu+1) pi / n)`; `nu` may be negative.
pub fn sector_interval(n: usize, nu: i64) -> (f64, f64) {
    let nu = nu as f64;
    let n = n as f64;
    (nu * PI / n, (nu + 1.0) * PI / n)
}

/// Closure of `S*_k` in the `x`-plane.
pub fn s_star(n: usize, k: usize) -> (f64, f64) {
    let (n_i, k_i) = (n as i64, k as i64);
    if k == 1 {
        sector_interval(n, n_i - 1)
    } else {
        (sector_interval(n, n_i - 2 * k_i + 1).0, sector_interval(n, n_i - 2 * k_i + 2).1)
    }
}

/// `Q_k`, where `e_k` keeps the asymptotics `eps_k^nu exp(eps_k x)`.
pub fn q_interval(n: usize, k: usize) -> (f64, f64) {
    let (n, k) = (n as f64, k as f64);
    ((-PI).max((2.0 - 2.0 * k) * PI / n), PI.min((2.0 * n - 2.0 * k + 2.0) * PI / n))
}

impl SectorData {
    pub fn interval(&self) -> (f64, f64) {
        sector_interval(self.n, self.k0 as i64)
    }

    /// Whether `arg rho` lies in the closed sector.
    pub fn contains(&self, rho: C64) -> bool {
        let (lo, hi) = self.interval();
        let mut a = rho.arg();
        if a < lo - 1e-12 {
            a += 2.0 * PI;
        }
        a >= lo - 1e-12 && a <= hi + 1e-12
    }

    pub fn rho_hat(&self, rho: C64) -> C64 {
        rho * self.eps[(self.n - self.rot % self.n) % self.n]
    }

    /// 0-based index `s` with `y_k(x, rho) = e_{s+1}(rho_hat x)`.
    pub fn e_index(&self, k: usize) -> usize {
        (self.perm[k - 1] + self.rot) % self.n
    }

    /// `R_k^{mu}` as it enters `b0_kj`, with the branch of `e_{s+1}`.
    pub fn r_pow(&self, k: usize, mu: C64) -> C64 {
        eps_pow(self.n, self.e_index(k), mu)
    }

    /// `arg rho_hat` for `rho` on the ray `arg rho = alpha`.
    pub fn hat_arg(&self, alpha: f64) -> f64 {
        let (lo, _) = self.interval();
        let mut a = alpha;
        while a < lo - 1e-12 {
            a += 2.0 * PI;
        }
        a - 2.0 * PI * self.rot as f64 / self.n as f64
    }
}
