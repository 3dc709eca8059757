//! Solutions `Y_k(x, rho)` of the perturbed equation with the asymptotics of
//! `y_k`, obtained from the integral system for `U_{k nu}`, their connection
//! coefficients to `S_j`, and the integral bounds `J(rho)`, `Q`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{cpow, det, rpow, solve, CMatrix, CVector, C64, ONE, ZERO};
use crate::model::EdgeSpec;
use crate::quad::gauss_legendre;
use crate::singular_ode::{regular_basis, CharData, VolterraOptions};

use super::hankel::HankelRay;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YOptions {
    /// Gauss nodes per panel.
    pub order: usize,
    /// Panel width on `|rho| x >= 1`, in units of `1/|rho|`.
    pub panel_width: f64,
    /// Dyadic levels below `x = 1/|rho|`.
    pub levels: usize,
    pub max_sweeps: usize,
    pub tol: f64,
    /// Reject `|rho|` below `2 M_1 Q + 1`.
    pub enforce_threshold: bool,
}

impl Default for YOptions {
    fn default() -> Self {
        YOptions { order: 10, panel_width: 0.5, levels: 40, max_sweeps: 50, tol: 1e-13, enforce_threshold: true }
    }
}

/// `J_m(rho)`, `J(rho) = sum_m J_m` and the bound constant `Q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JEstimate {
    pub rho: f64,
    pub j_m: Vec<f64>,
    pub j: f64,
    pub q: f64,
}

impl JEstimate {
    /// `J(rho) |rho| <= Q`, with a relative quadrature allowance.
    pub fn bound_holds(&self) -> bool {
        self.j * self.rho <= self.q * (1.0 + 1e-10) + 1e-300
    }
}

fn check_integrable(edge: &EdgeSpec, cd: &CharData) -> Result<()> {
    for m in 0..edge.order - 1 {
        if !edge.potential.integrable_with_weight(m, 0, (cd.theta - m as f64).min(0.0), edge.length) {
            return Err(Error::PotentialNotIntegrable { edge: 0, component: m });
        }
    }
    Ok(())
}

/// `Q = sum_m int_0^inf |q_{0m}|` with `q_{0m} = q_m x^{min(theta-m, 0)}` on `(0, 1]`.
pub fn q_constant(edge: &EdgeSpec, cd: &CharData) -> f64 {
    let l = edge.length;
    (0..edge.order - 1)
        .map(|m| {
            let w = (cd.theta - m as f64).min(0.0);
            edge.potential.weighted_abs_integral(m, w, 0.0, l.min(1.0))
                + edge.potential.weighted_abs_integral(m, 0.0, 1.0, l)
        })
        .sum()
}

/// `J(rho)` and `Q` for `|rho| = rho_abs >= 1`; the potential vanishes beyond the edge length.
pub fn estimate_j(edge: &EdgeSpec, rho_abs: f64) -> Result<JEstimate> {
    let cd = edge.char_data()?;
    check_integrable(edge, &cd)?;
    let n = edge.order as f64;
    let l = edge.length;
    let split = (1.0 / rho_abs).min(l);
    let lead = rho_abs.powf(cd.theta - n + 1.0);
    let j_m: Vec<f64> = (0..edge.order - 1)
        .map(|m| {
            let near = edge.potential.weighted_abs_integral(m, cd.theta - m as f64, 0.0, split);
            let far = edge.potential.weighted_abs_integral(m, 0.0, split, l);
            lead * near + rho_abs.powf(m as f64 - n + 1.0) * far
        })
        .collect();
    Ok(JEstimate { rho: rho_abs, j: j_m.iter().sum(), j_m, q: q_constant(edge, &cd) })
}

/// Integration matrices on the reference Gauss panel: `left[i][l] = int_{-1}^{xi_i} L_l`.
struct PanelRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    left: Vec<Vec<f64>>,
}

impl PanelRule {
    fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        let lagrange = |l: usize, s: f64| {
            nodes.iter().enumerate().filter(|(i, _)| *i != l).map(|(_, x)| (s - x) / (nodes[l] - x)).product::<f64>()
        };
        let left = nodes
            .iter()
            .map(|xi| {
                let half = 0.5 * (xi + 1.0);
                (0..order)
                    .map(|l| {
                        nodes.iter().zip(&weights).map(|(q, w)| w * half * lagrange(l, -1.0 + half * (q + 1.0))).sum()
                    })
                    .collect()
            })
            .collect();
        PanelRule { nodes, weights, left }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    small: bool,
}

/// `U_{k nu}` on a mesh of `(0, l]` and at probe points beyond `l`.
#[derive(Debug, Clone)]
pub struct PerturbedSolution {
    pub rho_abs: f64,
    pub rho: C64,
    /// Mesh nodes followed by the probe points.
    pub nodes: Vec<f64>,
    /// Number of mesh nodes in `(0, l]`.
    pub mesh_len: usize,
    /// `u[k-1][i][nu]`.
    pub u: Vec<Vec<Vec<C64>>>,
    pub u0: Vec<Vec<Vec<C64>>>,
    pub sweeps: Vec<usize>,
    /// Ratio of the last two Picard increments per `k`.
    pub contraction: Vec<f64>,
    /// `sup |U0|`, `sup |U0*|` over the nodes.
    pub m1: f64,
    pub q: f64,
    pub threshold: f64,
}

impl PerturbedSolution {
    /// `sup_{x, k, nu} |U_{k nu} - U0_{k nu}|`.
    pub fn sup_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (uk, u0k) in self.u.iter().zip(&self.u0) {
            for (a, b) in uk.iter().zip(u0k) {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).norm());
                }
            }
        }
        worst
    }

    /// `Y_k^{(nu)}(x_i) = rho^nu F_{k nu}(rho x_i) U_{k nu}(x_i)`.
    pub fn y(&self, hr: &HankelRay, k: usize, i: usize) -> Vec<C64> {
        let x = self.nodes[i];
        let rk = hr.sector.r[k - 1];
        let small = HankelRay::is_small(x, self.rho_abs);
        let mu1 = hr.cd.mu[0];
        self.u[k - 1][i]
            .iter()
            .enumerate()
            .map(|(nu, u)| {
                let f = if small {
                    cpow(self.rho * x, mu1 - nu as f64)
                } else {
                    rk.powi(nu as i32) * (self.rho * rk * x).exp()
                };
                self.rho.powi(nu as i32) * f * u
            })
            .collect()
    }

    /// Relative defect of `det[Y_k^{(nu-1)}] = rho^{n(n-1)/2} Omega` at the last probe.
    pub fn det_defect(&self, hr: &HankelRay) -> f64 {
        let n = hr.n();
        let i = self.nodes.len() - 1;
        let d = det(&CMatrix::from_fn(n, n, |k, nu| hr.sector.r[k].powi(nu as i32) * self.u[k][i][nu]));
        if HankelRay::is_small(self.nodes[i], self.rho_abs) {
            let ys: Vec<Vec<C64>> = (1..=n).map(|k| self.y(hr, k, i)).collect();
            let d = det(&CMatrix::from_fn(n, n, |k, nu| ys[k][nu]));
            let want = self.rho.powi((n * (n - 1) / 2) as i32) * hr.sector.omega;
            return (d / want - ONE).norm();
        }
        (d / hr.sector.omega - ONE).norm()
    }
}

fn build_mesh(l: f64, rho_abs: f64, opts: &YOptions) -> Vec<Panel> {
    let xs = (1.0 / rho_abs).min(l);
    let mut panels = Vec::new();
    let mut lo = xs * 0.5f64.powi(opts.levels as i32);
    panels.push(Panel { a: 0.0, b: lo, small: true });
    for i in (0..opts.levels).rev() {
        let hi = xs * 0.5f64.powi(i as i32);
        panels.push(Panel { a: lo, b: hi, small: true });
        lo = hi;
    }
    if l > xs {
        let count = ((l - xs) * rho_abs / opts.panel_width).ceil().max(1.0) as usize;
        let h = (l - xs) / count as f64;
        for i in 0..count {
            panels.push(Panel { a: xs + i as f64 * h, b: xs + (i + 1) as f64 * h, small: false });
        }
    }
    panels
}

/// Solves the integral system for `U_{k nu}` on `(0, l]`, `k = 1..n`, with
/// the potential of `edge` extended by zero beyond `l`.
#[allow(non_snake_case)]
pub fn solve_Y(hr: &HankelRay, edge: &EdgeSpec, rho_abs: f64, opts: &YOptions) -> Result<PerturbedSolution> {
    let n = hr.n();
    if edge.order != n || edge.char_data()?.mu != hr.cd.mu {
        return Err(Error::InvalidConfig("edge does not match the sector data".into()));
    }
    check_integrable(edge, &hr.cd)?;
    let l = edge.length;
    let rho = hr.rho(rho_abs);
    let panels = build_mesh(l, rho_abs, opts);
    let rule = PanelRule::new(opts.order);
    let g = opts.order;
    let mut nodes = Vec::with_capacity(panels.len() * g + 4);
    for p in &panels {
        for xi in &rule.nodes {
            nodes.push(p.a + 0.5 * (p.b - p.a) * (xi + 1.0));
        }
    }
    let mesh_len = nodes.len();
    for f in [1.5, 2.0, 3.0, 5.0] {
        nodes.push(f * l);
    }
    let u0: Vec<Vec<Vec<C64>>> =
        (1..=n).map(|k| nodes.iter().map(|x| hr.u0(k, *x, rho_abs)).collect::<Result<_>>()).collect::<Result<_>>()?;
    let u0s: Vec<Vec<C64>> = (1..=n)
        .map(|j| nodes[..mesh_len].iter().map(|x| hr.u0_star(j, *x, rho_abs)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let mut m1: f64 = 0.0;
    for v in u0.iter().flatten().flatten().chain(u0s.iter().flatten()) {
        m1 = m1.max(v.norm());
    }
    let q = q_constant(edge, &hr.cd);
    let threshold = 2.0 * m1 * q + 1.0;
    if opts.enforce_threshold && q > 0.0 && rho_abs < threshold {
        return Err(Error::RhoBelowThreshold { rho: rho_abs, threshold });
    }
    let qv: Vec<Vec<C64>> =
        nodes[..mesh_len].iter().map(|x| (0..n - 1).map(|m| edge.potential.eval(m, *x)).collect()).collect();
    let mu1 = hr.cd.mu[0];
    let mun = hr.cd.mu[n - 1];
    let small_of = |x: f64| HankelRay::is_small(x, rho_abs);
    let scale = rho.powi(1 - n as i32);

    let mut u_all = Vec::with_capacity(n);
    let mut sweeps = Vec::with_capacity(n);
    let mut contraction = Vec::with_capacity(n);
    for k in 1..=n {
        let rk = hr.sector.r[k - 1];
        // P_{km}(t) rho^m with the exponential part removed
        let pw: Vec<Vec<C64>> = nodes[..mesh_len]
            .iter()
            .map(|t| {
                (0..n - 1)
                    .map(|m| {
                        let p = if small_of(*t) {
                            cpow(rho * t, C64::from((n - 1 - m) as f64) - mun + mu1)
                        } else {
                            rk.powi(m as i32)
                        };
                        p * rho.powi(m as i32)
                    })
                    .collect()
            })
            .collect();
        let c: Vec<C64> = hr.sector.r.iter().map(|rj| rho * (rk - rj)).collect();
        let e_at = |j: usize, t: f64, small: bool| if small { ZERO } else { c[j] * t };
        let d_of = |j: usize, nu: usize, x: f64| if small_of(x) { ONE } else { (hr.sector.r[j] / rk).powi(nu as i32) };
        let qzero = edge.potential.is_zero();

        let apply = |u: &Vec<Vec<C64>>| -> Vec<Vec<C64>> {
            let mut out = u0[k - 1].clone();
            if qzero {
                return out;
            }
            for j in 0..n {
                let gj: Vec<C64> = (0..mesh_len)
                    .map(|i| {
                        let s: C64 = (0..n - 1).map(|m| qv[i][m] * pw[i][m] * u[i][m]).sum();
                        u0s[j][i] * s
                    })
                    .collect();
                let mut h = vec![ZERO; mesh_len];
                let forward = j < k;
                let mut carry = ZERO;
                let mut carry_e = ZERO;
                let order: Vec<usize> =
                    if forward { (0..panels.len()).collect() } else { (0..panels.len()).rev().collect() };
                for p in order {
                    let pan = panels[p];
                    let half = 0.5 * (pan.b - pan.a);
                    let start = if forward { pan.a } else { pan.b };
                    let e0 = e_at(j, start, pan.small);
                    // re-reference the carried value to this panel's branch
                    carry *= (carry_e - e0).exp();
                    let base = p * g;
                    let ex: Vec<C64> = (0..g).map(|lq| (e_at(j, nodes[base + lq], pan.small) - e0).exp()).collect();
                    for i in 0..g {
                        let ei = e_at(j, nodes[base + i], pan.small);
                        let mut acc = ZERO;
                        for lq in 0..g {
                            let wgt = if forward { rule.left[i][lq] } else { rule.weights[lq] - rule.left[i][lq] };
                            acc += ex[lq] * gj[base + lq] * wgt;
                        }
                        h[base + i] = (e0 - ei).exp() * (carry + acc * half);
                    }
                    let total: C64 = (0..g).map(|lq| ex[lq] * gj[base + lq] * rule.weights[lq]).sum();
                    let end = if forward { pan.b } else { pan.a };
                    carry_e = e_at(j, end, pan.small);
                    carry = (e0 - carry_e).exp() * (carry + total * half);
                }
                let sign = if forward { -ONE } else { ONE };
                for i in 0..mesh_len {
                    for nu in 0..n {
                        out[i][nu] += sign * scale * d_of(j, nu, nodes[i]) * u0[j][i][nu] * h[i];
                    }
                }
                if forward {
                    for i in mesh_len..nodes.len() {
                        let x = nodes[i];
                        let f = (carry_e - e_at(j, x, small_of(x))).exp() * carry;
                        for nu in 0..n {
                            out[i][nu] -= scale * d_of(j, nu, x) * u0[j][i][nu] * f;
                        }
                    }
                }
            }
            out
        };

        let mut u = u0[k - 1].clone();
        let mut prev_diff = f64::INFINITY;
        let mut ratio = 0.0;
        let mut done = 0;
        let mut growth = 0;
        for sweep in 1..=opts.max_sweeps {
            let next = apply(&u);
            let mut diff: f64 = 0.0;
            let mut size: f64 = 1.0;
            for (a, b) in next.iter().zip(&u).take(mesh_len) {
                for m in 0..n - 1 {
                    diff = diff.max((a[m] - b[m]).norm());
                    size = size.max(a[m].norm());
                }
            }
            u = next;
            if prev_diff.is_finite() && prev_diff > 0.0 {
                ratio = diff / prev_diff;
            }
            if diff <= opts.tol * size {
                done = sweep;
                break;
            }
            growth = if diff > prev_diff { growth + 1 } else { 0 };
            if growth >= 3 || !diff.is_finite() {
                return Err(Error::PicardDivergence { sweeps: sweep });
            }
            prev_diff = diff;
        }
        if done == 0 {
            return Err(Error::ContractionFailure { residual: prev_diff, sweeps: opts.max_sweeps });
        }
        // final pass fills nu = n-1 and the probes consistently with the converged iterate
        u = apply(&u);
        u_all.push(u);
        sweeps.push(done);
        contraction.push(ratio);
    }
    Ok(PerturbedSolution { rho_abs, rho, nodes, mesh_len, u: u_all, u0, sweeps, contraction, m1, q, threshold })
}

/// Connection coefficients of `Y_k = sum_j b_kj S_j`.
#[derive(Debug, Clone)]
pub struct Connection {
    /// `b[(k-1, j-1)]`.
    pub b: CMatrix,
    pub x_match: f64,
    /// Worst relative residual of the representation over nodes in `(x_match/4, 4 x_match]`.
    pub residual: f64,
}

/// Matches `Y_k` against the regular basis at the mesh node nearest `x = 1/|rho|`.
pub fn connection_coefficients(hr: &HankelRay, edge: &EdgeSpec, sol: &PerturbedSolution) -> Result<Connection> {
    let n = hr.n();
    let target = (1.0 / sol.rho_abs).min(edge.length);
    let i = (0..sol.mesh_len)
        .min_by(|a, b| (sol.nodes[*a] - target).abs().partial_cmp(&(sol.nodes[*b] - target).abs()).unwrap())
        .unwrap();
    let x = sol.nodes[i];
    let lambda = sol.rho.powi(n as i32);
    let reach = (4.0 * x).min(edge.length);
    let vopts = VolterraOptions { mesh: 800, tol: 1e-6, grading: Some(4.0) };
    let basis = regular_basis(&hr.frob, &edge.potential, lambda, reach, &vopts)?;
    let mu = &hr.cd.mu;
    let scaled_at = |x: f64| -> Result<CMatrix> {
        let w = basis.matrix(x)?;
        Ok(CMatrix::from_fn(n, n, |nu, j| w[(nu, j)] * x.powi(nu as i32) * rpow(x, -mu[j])))
    };
    let scaled = scaled_at(x)?;
    let mut b = CMatrix::zeros(n, n);
    for k in 1..=n {
        let y = sol.y(hr, k, i);
        let rhs = CVector::from_fn(n, |nu, _| y[nu] * x.powi(nu as i32));
        let sol_k = solve(&scaled, &rhs).ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
        for j in 0..n {
            b[(k - 1, j)] = sol_k[j] * rpow(x, -mu[j]);
        }
    }
    let mut residual: f64 = 0.0;
    for t in (0..sol.mesh_len).filter(|t| sol.nodes[*t] > 0.25 * x && sol.nodes[*t] <= reach) {
        let xt = sol.nodes[t];
        let w = basis.matrix(xt)?;
        for k in 1..=n {
            let y = sol.y(hr, k, t);
            for nu in 0..n {
                let rep: C64 = (0..n).map(|j| b[(k - 1, j)] * w[(nu, j)]).sum();
                residual = residual.max((rep - y[nu]).norm() / y[nu].norm().max(1e-300));
            }
        }
    }
    Ok(Connection { b, x_match: x, residual })
}

/// `b0_kj rho_hat^{mu_j}`: the leading term of the connection coefficients.
pub fn leading_connection(hr: &HankelRay, rho_abs: f64) -> CMatrix {
    let n = hr.n();
    let hat = hr.sector.rho_hat(hr.rho(rho_abs));
    CMatrix::from_fn(n, n, |k, j| {
        let mu = hr.cd.mu[j];
        hr.stokes.beta0(j + 1) * hr.sector.r_pow(k + 1, mu) * cpow(hat, mu)
    })
}

/// `max_{k<n, j} |b_kj / (b0_kj rho_hat^{mu_j}) - 1|`.
pub fn connection_defect(hr: &HankelRay, b: &CMatrix, rho_abs: f64) -> f64 {
    let lead = leading_connection(hr, rho_abs);
    let n = hr.n();
    let mut worst: f64 = 0.0;
    for k in 0..n - 1 {
        for j in 0..n {
            worst = worst.max((b[(k, j)] / lead[(k, j)] - ONE).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::birkhoff::build_sector;
    use crate::linalg::c;
    use crate::model::PotentialSpec;

    fn free(len: f64, q: &[f64]) -> EdgeSpec {
        EdgeSpec::new(2, len, vec![ZERO])
            .with_potential(PotentialSpec::Polynomial(vec![q.iter().map(|v| c(*v, 0.0)).collect()]))
    }

    #[test]
    fn zero_potential_reproduces_y() {
        let e = EdgeSpec::new(2, 1.0, vec![c(-0.6, 0.0)]);
        let hr = HankelRay::new(&e.char_data().unwrap(), build_sector(2, 0).unwrap(), 0.3).unwrap();
        let sol = solve_Y(&hr, &e, 6.0, &YOptions::default()).unwrap();
        assert_eq!(sol.sup_defect(), 0.0);
        let con = connection_coefficients(&hr, &e, &sol).unwrap();
        assert!(con.residual < 1e-9, "{}", con.residual);
        let b = con.b;
        let lead = leading_connection(&hr, 6.0);
        for (x, y) in b.iter().zip(lead.iter()) {
            assert!((x / y - ONE).norm() < 1e-9, "{b} {lead}");
        }
    }

    #[test]
    fn constant_potential_gives_shifted_exponentials() {
        // on (0, l) the solutions of y'' + y = rho^2 y are combinations of exp(+-kappa x)
        let e = free(2.0, &[1.0]);
        let hr = HankelRay::new(&e.char_data().unwrap(), build_sector(2, 0).unwrap(), 0.0).unwrap();
        let rho = 16.0;
        let sol = solve_Y(&hr, &e, rho, &YOptions::default()).unwrap();
        let kappa = (rho * rho - 1.0f64).sqrt();
        let big: Vec<usize> = (0..sol.mesh_len).filter(|i| sol.nodes[*i] > 0.2).collect();
        for k in 1..=2 {
            // fit where the other exponential is negligible downstream
            let i0 = if k == 1 { *big.last().unwrap() } else { big[0] };
            let x0 = sol.nodes[i0];
            let y0 = sol.y(&hr, k, i0);
            let a = 0.5 * (y0[0] - y0[1] / kappa) * (kappa * x0).exp();
            let b = 0.5 * (y0[0] + y0[1] / kappa) * (-kappa * x0).exp();
            for &i in big.iter().step_by(13) {
                let x = sol.nodes[i];
                let want = a * (-kappa * x).exp() + b * (kappa * x).exp();
                let got = sol.y(&hr, k, i)[0];
                assert!((got - want).norm() < 1e-10 * want.norm(), "k={k} x={x} {got} {want}");
            }
        }
        assert!(sol.sweeps.iter().all(|s| *s < 30));
        assert!(sol.sup_defect() < 0.2);
    }

    #[test]
    fn j_estimate_order_two_constant() {
        let e = free(1.0, &[1.0]);
        for r in [1.0, 2.0, 4.0, 8.0] {
            let j = estimate_j(&e, r).unwrap();
            assert!((j.j - 1.0 / r).abs() < 1e-12, "{j:?}");
            assert!((j.q - 1.0).abs() < 1e-12);
            assert!(j.bound_holds());
        }
        let z = estimate_j(&EdgeSpec::new(2, 1.0, vec![ZERO]), 3.0).unwrap();
        assert_eq!((z.j, z.q), (0.0, 0.0));
    }

    #[test]
    fn threshold_enforced() {
        let e = free(1.0, &[40.0]);
        let hr = HankelRay::new(&e.char_data().unwrap(), build_sector(2, 0).unwrap(), 0.2).unwrap();
        let err = solve_Y(&hr, &e, 4.0, &YOptions::default()).unwrap_err();
        assert!(matches!(err, Error::RhoBelowThreshold { .. }));
    }
}
