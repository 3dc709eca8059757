//! Solutions `e_k` of the model equation `l_0 y = y` with exponential
//! asymptotics, and the Stokes multipliers connecting them to `C_j`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{binomial, cond, det, falling, solve, CMatrix, CVector, C64, ONE, ZERO};
use crate::singular_ode::{CharData, FrobeniusBasis};

use super::sector::{eps_pow, roots_of_unity, s_star};

const MAX_TERMS: usize = 400;

/// Formal series `e^{eps x} sum_r a_r x^{-r}` of the solution with `a_0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoticSeries {
    pub eps: C64,
    pub coeffs: Vec<C64>,
}

impl AsymptoticSeries {
    pub fn new(cd: &CharData, eps: C64) -> Self {
        let n = cd.n;
        let mut a = vec![ONE];
        let lead = eps.powi(n as i32 - 1) * n as f64;
        for r in 1..MAX_TERMS {
            let mut s = ZERO;
            for i in 2..=n {
                if r + 1 >= i {
                    let p = r + 1 - i;
                    s += a[p] * binomial(n, i) * eps.powi((n - i) as i32) * falling(C64::from(-(p as f64)), i);
                }
            }
            for (m, nu) in cd.nu.iter().enumerate() {
                for i in 0..=m {
                    if r + 1 + m >= n + i {
                        let p = r + 1 + m - n - i;
                        s += nu * a[p] * binomial(m, i) * eps.powi((m - i) as i32) * falling(C64::from(-(p as f64)), i);
                    }
                }
            }
            let next = s / (lead * r as f64);
            if !next.is_finite() || next.norm() > 1e250 {
                break;
            }
            a.push(next);
        }
        AsymptoticSeries { eps, coeffs: a }
    }

    /// Ratios `e^{(nu)}(w) / (eps^nu e^{eps w})` for `nu = 0..n-1` with the
    /// optimal-truncation error estimate.
    pub fn normalized(&self, w: C64, n: usize) -> (Vec<C64>, f64) {
        let inv = ONE / w;
        let mut derivs = vec![ZERO; n];
        let mut pw = ONE;
        let mut prev = f64::INFINITY;
        let mut err = 0.0;
        for (r, a) in self.coeffs.iter().enumerate() {
            let term = a * pw;
            let size = term.norm();
            if r > 1 && size > prev {
                break;
            }
            let mut inv_i = ONE;
            for (i, d) in derivs.iter_mut().enumerate() {
                *d += term * falling(C64::from(-(r as f64)), i) * inv_i;
                inv_i *= inv;
            }
            err = size;
            if size <= 1e-17 * derivs[0].norm() && *a != ZERO {
                break;
            }
            prev = size;
            pw *= inv;
        }
        let einv = ONE / self.eps;
        let out = (0..n).map(|nu| (0..=nu).map(|i| derivs[i] * binomial(nu, i) * einv.powi(i as i32)).sum()).collect();
        (out, err)
    }
}

/// The `e_k`, `k = 1..n`, computed on rays of `S*_k` by integrating the
/// model equation inward from an asymptotic seed.
#[derive(Debug, Clone)]
pub struct ExponentialSolutions {
    pub cd: CharData,
    pub eps: Vec<C64>,
    pub series: Vec<AsymptoticSeries>,
    /// Default seed radius.
    pub x_seed: f64,
    /// Step length bound in `|w|` units.
    pub step: f64,
    /// Largest accepted `ln` amplification of errors along a path.
    pub max_amplification: f64,
}

/// `e_k` and derivatives along a ray, stored as `e_k^{(nu)} / (eps_k^nu e^{eps_k x})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ERay {
    pub k: usize,
    pub phi: f64,
    pub radii: Vec<f64>,
    pub normalized: Vec<Vec<C64>>,
}

impl ERay {
    /// `e_k^{(nu)}(x)`, `nu = 0..n-1`, at `radii[i]`.
    pub fn values(&self, eps: C64, i: usize) -> Vec<C64> {
        let x = C64::from_polar(self.radii[i], self.phi);
        let ex = (eps * x).exp();
        self.normalized[i].iter().enumerate().map(|(nu, z)| z * eps.powi(nu as i32) * ex).collect()
    }
}

impl ExponentialSolutions {
    pub fn new(cd: &CharData) -> Self {
        let eps = roots_of_unity(cd.n);
        let series = eps.iter().map(|e| AsymptoticSeries::new(cd, *e)).collect();
        ExponentialSolutions { cd: cd.clone(), eps, series, x_seed: 60.0, step: 0.02, max_amplification: 18.0 }
    }

    pub fn n(&self) -> usize {
        self.cd.n
    }

    /// Ray inside `S*_k` on which `e_k` is integrated by default.
    pub fn ray_angle(&self, k: usize) -> f64 {
        let n = self.n() as f64;
        (n - 0.5 - 2.0 * (k as f64 - 1.0)) * PI / n
    }

    /// `z' = (A(w) - eps) z` for the normalized state `z = e^{-eps w} (y, .., y^{(n-1)})`.
    fn rhs(&self, eps: C64, w: C64, z: &[C64]) -> Vec<C64> {
        let n = self.n();
        let mut out = vec![ZERO; n];
        for nu in 0..n - 1 {
            out[nu] = z[nu + 1] - eps * z[nu];
        }
        let mut top = z[0];
        for (m, nu) in self.cd.nu.iter().enumerate() {
            top -= nu * w.powi(m as i32 - n as i32) * z[m];
        }
        out[n - 1] = top - eps * z[n - 1];
        out
    }

    fn rk4(&self, eps: C64, w: C64, dw: C64, z: &[C64]) -> Vec<C64> {
        let add = |a: &[C64], b: &[C64], s: C64| a.iter().zip(b).map(|(x, y)| x + y * s).collect::<Vec<_>>();
        let k1 = self.rhs(eps, w, z);
        let k2 = self.rhs(eps, w + dw * 0.5, &add(z, &k1, dw * 0.5));
        let k3 = self.rhs(eps, w + dw * 0.5, &add(z, &k2, dw * 0.5));
        let k4 = self.rhs(eps, w + dw, &add(z, &k3, dw));
        z.iter().enumerate().map(|(i, v)| v + dw / 6.0 * (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i])).collect()
    }

    fn step_for(&self, r: f64) -> f64 {
        self.step * (0.5 * r).min(1.0).powi(2)
    }

    /// Radial integration of the normalized state from `r0` to `r1` on `arg = phi`.
    fn radial(&self, eps: C64, phi: f64, r0: f64, r1: f64, z: Vec<C64>) -> Vec<C64> {
        let dir = C64::from_polar(1.0, phi);
        let mut z = z;
        let mut r = r0;
        while (r1 - r).abs() > 1e-15 * r0.max(1.0) {
            let h = self.step_for(r.min(r1)).min((r1 - r).abs()) * (r1 - r).signum();
            z = self.rk4(eps, dir * r, dir * h, &z);
            r += h;
        }
        z
    }

    /// Arc integration at radius `r` from `phi0` to `phi1`.
    fn arc(&self, eps: C64, r: f64, phi0: f64, phi1: f64, z: Vec<C64>) -> Vec<C64> {
        let mut z = z;
        let mut a = phi0;
        let dtheta = self.step_for(r) / r;
        while (phi1 - a).abs() > 1e-15 {
            let h = dtheta.min((phi1 - a).abs()) * (phi1 - a).signum();
            let w0 = C64::from_polar(r, a);
            let w1 = C64::from_polar(r, a + h);
            // integrate along the chord; the solution is analytic off the origin
            z = self.rk4(eps, w0, w1 - w0, &z);
            a += h;
        }
        z
    }

    fn seed(&self, k: usize, w: C64) -> Result<Vec<C64>> {
        let n = self.n();
        let (z, err) = self.series[k - 1].normalized(w, n);
        if err > 1e-13 {
            return Err(Error::GapRegion { value: w.norm() });
        }
        let eps = self.eps[k - 1];
        Ok(z.iter().enumerate().map(|(nu, v)| v * eps.powi(nu as i32)).collect())
    }

    fn to_ratio(&self, k: usize, z: Vec<C64>) -> Vec<C64> {
        let eps = self.eps[k - 1];
        z.into_iter().enumerate().map(|(nu, v)| v / eps.powi(nu as i32)).collect()
    }

    /// `e_k` on the ray `arg x = phi` at the given radii (any order).
    pub fn solve_e(&self, k: usize, phi: f64, radii: &[f64]) -> Result<ERay> {
        let n = self.n();
        let (lo, hi) = s_star(n, k);
        if phi < lo - 1e-12 || phi > hi + 1e-12 || phi <= -PI || phi > PI {
            return Err(Error::RayOutsideSector { arg: phi });
        }
        let eps = self.eps[k - 1];
        let mut order: Vec<usize> = (0..radii.len()).collect();
        order.sort_by(|a, b| radii[*b].partial_cmp(&radii[*a]).unwrap());
        let top = radii.iter().cloned().fold(0.0, f64::max);
        let mut r = self.x_seed.max(2.0 * top);
        let mut z = self.seed(k, C64::from_polar(r, phi))?;
        let mut normalized = vec![Vec::new(); radii.len()];
        for i in order {
            z = self.radial(eps, phi, r, radii[i], z);
            r = radii[i];
            normalized[i] = self.to_ratio(k, z.clone());
        }
        Ok(ERay { k, phi, radii: radii.to_vec(), normalized })
    }

    /// `ln` of the worst amplification of a perturbation introduced on the
    /// path (radial on `phi_k` down to `|w|`, then the arc) at the endpoint `w`.
    pub fn path_amplification(&self, k: usize, w: C64) -> f64 {
        let phi = self.ray_angle(k);
        let r = w.norm();
        let target = w.arg();
        let ek = self.eps[k - 1];
        let steps = 256;
        let mut worst: f64 = 0.0;
        for i in 0..=steps {
            let p = C64::from_polar(r, phi + (target - phi) * i as f64 / steps as f64);
            for (j, ej) in self.eps.iter().enumerate() {
                if j + 1 != k {
                    worst = worst.max(((ej - ek) * (w - p)).re);
                }
            }
        }
        worst
    }

    /// Normalized `e_k^{(nu)}(w) / (eps_k^nu e^{eps_k w})` at points of the cut plane
    /// with `|w| >= 0.25`, by radial integration on the default ray followed by an arc.
    pub fn eval_normalized(&self, k: usize, ws: &[C64]) -> Result<Vec<Vec<C64>>> {
        let phi = self.ray_angle(k);
        let radii: Vec<f64> = ws.iter().map(|w| w.norm()).collect();
        for w in ws {
            if w.norm() < 0.25 {
                return Err(Error::GapRegion { value: w.norm() });
            }
            if self.path_amplification(k, *w) > self.max_amplification {
                return Err(Error::GapRegion { value: w.norm() });
            }
        }
        let ray = self.solve_e(k, phi, &radii)?;
        let eps = self.eps[k - 1];
        Ok(ws
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let z0: Vec<C64> =
                    ray.normalized[i].iter().enumerate().map(|(nu, v)| v * eps.powi(nu as i32)).collect();
                let z = self.arc(eps, radii[i], phi, w.arg(), z0);
                self.to_ratio(k, z)
            })
            .collect())
    }

    /// `e_k^{(nu)}(w)` at a point of the cut plane.
    pub fn eval(&self, k: usize, w: C64) -> Result<Vec<C64>> {
        let z = self.eval_normalized(k, &[w])?.remove(0);
        let eps = self.eps[k - 1];
        let ex = (eps * w).exp();
        Ok(z.iter().enumerate().map(|(nu, v)| v * eps.powi(nu as i32) * ex).collect())
    }
}

/// Stokes multipliers `beta0_kj` with the residuals of the rotation and product relations.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesData {
    pub n: usize,
    pub mu: Vec<C64>,
    /// `beta[(k-1, j-1)]`.
    pub beta: CMatrix,
    pub checks: StokesChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StokesChecks {
    /// `max |beta0_kj - beta0_1j eps_k^{mu_j}|` relative to `|beta0_1j|`.
    pub beta_rotation: f64,
    /// Relative defect of the product formula for `beta0_1j`.
    pub beta_product: f64,
    /// `max` relative defect of `e_1(eps^s x) = e_{s+1}(x)` at sampled `x`.
    pub rotation: f64,
    /// Relative defect of `det[e_k^{(nu-1)}] = det[eps_k^{nu-1}]`.
    pub e_determinant: f64,
    pub basis_cond: f64,
    pub min_beta: f64,
}

impl StokesData {
    pub fn beta0(&self, j: usize) -> C64 {
        self.beta[(0, j - 1)]
    }
}

/// Solves `e_k^{(nu)}(x_0) = sum_j beta0_kj C_j^{(nu)}(x_0)` with `|x_0| = x0`
/// on the default ray of each `e_k`, then checks the identities satisfied by `beta0`
/// and by the `e_k`.
pub fn stokes_from_e(es: &ExponentialSolutions, frob: &FrobeniusBasis, x0: f64) -> Result<StokesData> {
    let n = es.n();
    let mu = frob.cd.mu.clone();
    let mut beta = CMatrix::zeros(n, n);
    let mut worst_cond: f64 = 0.0;
    for k in 1..=n {
        let x = C64::from_polar(x0, es.ray_angle(k));
        let e = es.eval(k, x)?;
        let mut w = CMatrix::zeros(n, n);
        for j in 0..n {
            let cj = frob.eval_c_complex(j + 1, x, ONE)?;
            for nu in 0..n {
                w[(nu, j)] = cj[nu];
            }
        }
        let cw = cond(&w);
        worst_cond = worst_cond.max(cw);
        if cw > 1e8 {
            return Err(Error::IllConditionedBasis { cond: cw });
        }
        let b = solve(&w, &CVector::from_vec(e)).ok_or(Error::IllConditionedBasis { cond: cw })?;
        for j in 0..n {
            beta[(k - 1, j)] = b[j];
        }
    }
    let mut rot_defect: f64 = 0.0;
    for k in 1..=n {
        for j in 0..n {
            let want = beta[(0, j)] * eps_pow(n, k - 1, mu[j]);
            rot_defect = rot_defect.max((beta[(k - 1, j)] - want).norm() / beta[(0, j)].norm());
        }
    }
    let eps = roots_of_unity(n);
    let vdm_eps = det(&CMatrix::from_fn(n, n, |k, j| eps[k].powi(j as i32)));
    let vdm_mu = det(&CMatrix::from_fn(n, n, |k, j| eps_pow(n, k, mu[j])));
    let prod: C64 = (0..n).map(|j| beta[(0, j)]).product();
    let prod_defect = (prod - vdm_eps / vdm_mu).norm() / (vdm_eps / vdm_mu).norm();
    // the C-Wronskian is 1, so det[e_k^{(nu-1)}] = det(beta)
    let e_determinant = (det(&beta) - vdm_eps).norm() / vdm_eps.norm();
    let mut rotation: f64 = 0.0;
    for s in 1..n {
        for r in [0.5, 1.0, 2.5, 6.0] {
            let x = C64::from_polar(r, es.ray_angle(s + 1));
            let lhs = es.eval(1, x * eps[s])?;
            let rhs = es.eval(s + 1, x)?;
            for nu in 0..n {
                let l = lhs[nu] * eps[s].powi(nu as i32);
                rotation = rotation.max((l - rhs[nu]).norm() / rhs[nu].norm().max(1e-300));
            }
        }
    }
    let min_beta = beta.iter().map(|b| b.norm()).fold(f64::INFINITY, f64::min);
    Ok(StokesData {
        n,
        mu,
        beta,
        checks: StokesChecks {
            beta_rotation: rot_defect,
            beta_product: prod_defect,
            rotation,
            e_determinant,
            basis_cond: worst_cond,
            min_beta,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::model::EdgeSpec;
    use crate::singular_ode::build_series;

    fn cd(nu: &[f64]) -> CharData {
        let n = nu.len() + 1;
        EdgeSpec::new(n, 1.0, nu.iter().map(|v| c(*v, 0.0)).collect()).char_data().unwrap()
    }

    #[test]
    fn free_series_is_trivial() {
        let s = AsymptoticSeries::new(&cd(&[0.0]), ONE);
        assert_eq!(s.coeffs.len(), MAX_TERMS);
        assert!(s.coeffs[1..].iter().all(|a| *a == ZERO));
    }

    #[test]
    fn bessel_series_terminates() {
        // e^x (1 - 1/x) solves y'' - 2 y / x^2 = y
        let s = AsymptoticSeries::new(&cd(&[-2.0]), ONE);
        assert!((s.coeffs[1] + ONE).norm() < 1e-15);
        assert!(s.coeffs[2..].iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn free_solutions_are_exponentials() {
        let es = ExponentialSolutions::new(&cd(&[0.0]));
        for k in 1..=2 {
            let x = C64::from_polar(1.3, es.ray_angle(k));
            let e = es.eval(k, x).unwrap();
            let want = (es.eps[k - 1] * x).exp();
            assert!((e[0] - want).norm() < 1e-12 * want.norm());
            assert!((e[1] - es.eps[k - 1] * want).norm() < 1e-12 * want.norm());
        }
        // off the integration ray via the arc
        let w = C64::from_polar(5.0, 0.4);
        let e = es.eval(1, w).unwrap();
        assert!((e[0] / w.exp() - ONE).norm() < 1e-11);
    }

    #[test]
    fn bessel_solution_on_ray() {
        let es = ExponentialSolutions::new(&cd(&[-2.0]));
        let x = C64::from_polar(0.7, es.ray_angle(1));
        let e = es.eval(1, x).unwrap();
        let want = x.exp() * (ONE - ONE / x);
        assert!((e[0] - want).norm() < 1e-11 * want.norm());
    }

    #[test]
    fn ray_must_lie_in_s_star() {
        let es = ExponentialSolutions::new(&cd(&[0.0]));
        assert!(matches!(es.solve_e(1, 0.1, &[1.0]), Err(Error::RayOutsideSector { .. })));
    }

    #[test]
    fn free_stokes_multipliers() {
        let c0 = cd(&[0.0]);
        let frob = build_series(&c0, 1e-16);
        let st = stokes_from_e(&ExponentialSolutions::new(&c0), &frob, 0.5).unwrap();
        let want = [[1.0, 1.0], [1.0, -1.0]];
        for k in 0..2 {
            for j in 0..2 {
                assert!((st.beta[(k, j)] - c(want[k][j], 0.0)).norm() < 1e-10, "{}", st.beta);
            }
        }
        assert!(st.checks.beta_product < 1e-10);
    }
}
