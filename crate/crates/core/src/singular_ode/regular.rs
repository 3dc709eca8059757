//! The basis `S_1 .. S_n` of the perturbed equation.
//!
//! Two constructions are provided. For zero and polynomial potentials the
//! solutions are generalized Frobenius series `x^{mu_j} sum_d s_d x^d` whose
//! coefficients follow from substituting into the equation; resonant
//! exponents keep the coefficient of the unperturbed solution. For sampled
//! potentials the integral system is discretized with product trapezoidal
//! quadrature on a mesh graded toward the singular endpoint, refined once
//! and Richardson-extrapolated. Both constructions agree where both apply.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{det, falling, rpow, CMatrix, C64, ZERO};
use crate::model::PotentialSpec;

use super::green::green_weights_from;
use super::series::FrobeniusBasis;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolterraOptions {
    /// Coarse mesh size; the refined solve uses twice as many intervals.
    pub mesh: usize,
    /// Bound on the estimated quadrature error relative to the solution scale.
    pub tol: f64,
    /// Grading exponent override; by default `clamp(2/(1+Re mu_1), 1, 4)`.
    pub grading: Option<f64>,
}

impl Default for VolterraOptions {
    fn default() -> Self {
        VolterraOptions { mesh: 400, tol: 1e-4, grading: None }
    }
}

#[derive(Debug, Clone)]
struct SeriesRoute {
    /// `coeffs[j][d]` multiplies `x^{mu_j + d}`.
    coeffs: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
struct MeshSolution {
    nodes: Vec<f64>,
    /// `values[j][i][nu]`.
    values: Vec<Vec<Vec<C64>>>,
    /// `forcing[j][i] = sum_m q_m(x_i) S_j^{(m)}(x_i)`.
    forcing: Vec<Vec<C64>>,
    /// Green weights `a_k(t_i)` per node.
    green: Vec<Vec<C64>>,
}

#[derive(Debug, Clone)]
enum Route {
    Series(SeriesRoute),
    Volterra { coarse: MeshSolution, fine: MeshSolution, error_estimate: f64 },
}

/// Evaluators for `S_j(x, lambda)` and derivatives on `(0, length]` at fixed `lambda`.
#[derive(Debug, Clone)]
pub struct RegularBasis {
    pub frob: Arc<FrobeniusBasis>,
    pub potential: PotentialSpec,
    pub lambda: C64,
    pub length: f64,
    route: Route,
}

fn grading_for(frob: &FrobeniusBasis) -> f64 {
    let a = 1.0 + frob.cd.mu[0].re;
    if a <= 0.0 {
        4.0
    } else {
        (2.0 / a).clamp(1.0, 4.0)
    }
}

/// Picks the series construction for closed-form potentials and the
/// quadrature construction for sampled ones.
pub fn regular_basis(
    frob: &Arc<FrobeniusBasis>,
    potential: &PotentialSpec,
    lambda: C64,
    length: f64,
    opts: &VolterraOptions,
) -> Result<RegularBasis> {
    match potential {
        PotentialSpec::Table(_) => solve_volterra(frob, potential, lambda, length, opts),
        _ => series_basis(frob, potential, lambda, length),
    }
}

/// Generalized Frobenius construction for zero or polynomial potentials.
pub fn series_basis(
    frob: &Arc<FrobeniusBasis>,
    potential: &PotentialSpec,
    lambda: C64,
    length: f64,
) -> Result<RegularBasis> {
    let n = frob.n();
    let polys: Vec<Vec<C64>> = (0..n - 1)
        .map(|m| {
            potential
                .poly(m)
                .ok_or_else(|| Error::InvalidConfig("series construction needs a closed-form potential".into()))
        })
        .collect::<Result<_>>()?;
    let degree = polys.iter().map(|p| p.len()).max().unwrap_or(0);
    let window = n + degree;
    let mut coeffs = Vec::with_capacity(n);
    for j in 0..n {
        let mu = frob.cd.mu[j];
        let mut s: Vec<C64> = vec![frob.series[j].c0()];
        let mut peak = s[0].norm();
        let mut quiet = 0usize;
        let mut d = 0usize;
        loop {
            d += 1;
            let a = mu + d as f64;
            let mut rhs = if d >= n { lambda * s[d - n] } else { ZERO };
            for (m, poly) in polys.iter().enumerate() {
                for (p, q) in poly.iter().enumerate() {
                    if *q == ZERO || d + m < n + p {
                        continue;
                    }
                    let b = d + m - n - p;
                    rhs -= q * falling(mu + b as f64, m) * s[b];
                }
            }
            let delta = frob.cd.delta(a);
            let scale = rhs.norm().max(1e-300);
            let next = if frob.cd.mu.iter().any(|r| (r - a).norm() < 1e-9) {
                // resonant exponent: the integral system picks no free component
                if rhs.norm() > 1e-8 * peak.max(1.0) {
                    return Err(Error::LogarithmicResonance { offset: d });
                }
                ZERO
            } else {
                rhs / delta
            };
            s.push(next);
            let term = next.norm() * length.powi(d as i32);
            if term.is_nan() || !scale.is_finite() {
                return Err(Error::OutOfConvergenceBudget { value: d as f64, limit: 20000.0 });
            }
            peak = peak.max(term);
            if term <= 1e-18 * peak {
                quiet += 1;
            } else {
                quiet = 0;
            }
            if quiet >= window && d > 2 * n {
                break;
            }
            if d > 20000 {
                return Err(Error::OutOfConvergenceBudget { value: d as f64, limit: 20000.0 });
            }
        }
        coeffs.push(s);
    }
    Ok(RegularBasis {
        frob: frob.clone(),
        potential: potential.clone(),
        lambda,
        length,
        route: Route::Series(SeriesRoute { coeffs }),
    })
}

fn mesh_solve(
    frob: &FrobeniusBasis,
    potential: &PotentialSpec,
    lambda: C64,
    length: f64,
    m: usize,
    grading: f64,
) -> Result<MeshSolution> {
    let n = frob.n();
    let nodes: Vec<f64> = (0..=m).map(|i| length * (i as f64 / m as f64).powf(grading)).collect();
    let mut c_vals = vec![vec![vec![ZERO; n]; m + 1]; n];
    let mut green = vec![vec![ZERO; n]; m + 1];
    for i in 1..=m {
        let w = frob.wronskian_matrix(nodes[i], lambda)?;
        for j in 0..n {
            for nu in 0..n {
                c_vals[j][i][nu] = w[(nu, j)];
            }
        }
        green[i] = green_weights_from(&w, n);
    }
    let q: Vec<Vec<C64>> = (0..=m)
        .map(|i| (0..n - 1).map(|mm| if i == 0 { ZERO } else { potential.eval(mm, nodes[i]) }).collect())
        .collect();
    let mut values = vec![vec![vec![ZERO; n]; m + 1]; n];
    let mut forcing = vec![vec![ZERO; m + 1]; n];
    for j in 0..n {
        for i in 1..=m {
            let xi = nodes[i];
            let mut acc = vec![ZERO; n];
            // trapezoid over [0, x_i]; forcing at node 0 is taken as zero
            for k in 1..i {
                let wk = 0.5 * (nodes[k + 1] - nodes[k - 1]);
                let fk = forcing[j][k];
                if fk == ZERO {
                    continue;
                }
                for nu in 0..n {
                    let kern: C64 = (0..n).map(|r| green[k][r] * c_vals[r][i][nu]).sum();
                    acc[nu] += kern * fk * wk;
                }
            }
            let mut v = vec![ZERO; n];
            for nu in 0..n - 1 {
                v[nu] = c_vals[j][i][nu] - acc[nu];
            }
            let fi: C64 = (0..n - 1).map(|mm| q[i][mm] * v[mm]).sum();
            let wi = 0.5 * (xi - nodes[i - 1]);
            v[n - 1] = c_vals[j][i][n - 1] - acc[n - 1] - fi * wi;
            values[j][i] = v;
            forcing[j][i] = fi;
        }
    }
    Ok(MeshSolution { nodes, values, forcing, green })
}

impl MeshSolution {
    /// Nyström evaluation at an arbitrary `x` in `(0, length]`.
    fn eval(
        &self,
        frob: &FrobeniusBasis,
        potential: &PotentialSpec,
        lambda: C64,
        j: usize,
        x: f64,
    ) -> Result<Vec<C64>> {
        let n = frob.n();
        let nodes = &self.nodes;
        let last = nodes.len() - 1;
        let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(0) | Err(0) => return Err(Error::InvalidConfig("x must be positive".into())),
            Ok(i) => return Ok(self.values[j][i].clone()),
            Err(i) => i - 1,
        };
        if i >= last {
            return Err(Error::InvalidConfig("x beyond edge length".into()));
        }
        let cx: Vec<Vec<C64>> = (1..=n).map(|r| frob.eval_c(r, x, lambda)).collect::<Result<_>>()?;
        let mut acc = vec![ZERO; n];
        for k in 1..=i {
            let wk = if k < i {
                0.5 * (nodes[k + 1] - nodes[k - 1])
            } else {
                0.5 * (nodes[k] - nodes[k - 1]) + 0.5 * (x - nodes[k])
            };
            let fk = self.forcing[j][k];
            for nu in 0..n {
                let kern: C64 = (0..n).map(|r| self.green[k][r] * cx[r][nu]).sum();
                acc[nu] += kern * fk * wk;
            }
        }
        let mut v = vec![ZERO; n];
        for nu in 0..n - 1 {
            v[nu] = cx[j][nu] - acc[nu];
        }
        let fx: C64 = (0..n - 1).map(|mm| potential.eval(mm, x) * v[mm]).sum();
        let wx = 0.5 * (x - nodes[i]);
        v[n - 1] = cx[j][n - 1] - acc[n - 1] - fx * wx;
        Ok(v)
    }
}

/// Quadrature construction of `S_j` from the integral system.
pub fn solve_volterra(
    frob: &Arc<FrobeniusBasis>,
    potential: &PotentialSpec,
    lambda: C64,
    length: f64,
    opts: &VolterraOptions,
) -> Result<RegularBasis> {
    let grading = opts.grading.unwrap_or_else(|| grading_for(frob));
    let coarse = mesh_solve(frob, potential, lambda, length, opts.mesh, grading)?;
    let fine = mesh_solve(frob, potential, lambda, length, 2 * opts.mesh, grading)?;
    let n = frob.n();
    let mut err: f64 = 0.0;
    for j in 0..n {
        let a = &coarse.values[j][opts.mesh];
        let b = &fine.values[j][2 * opts.mesh];
        for nu in 0..n {
            err = err.max((a[nu] - b[nu]).norm() / 3.0 / b[nu].norm().max(1.0));
        }
    }
    if !(err <= opts.tol) {
        return Err(Error::QuadratureNonconvergence { residual: err });
    }
    Ok(RegularBasis {
        frob: frob.clone(),
        potential: potential.clone(),
        lambda,
        length,
        route: Route::Volterra { coarse, fine, error_estimate: err },
    })
}

impl RegularBasis {
    pub fn n(&self) -> usize {
        self.frob.n()
    }

    pub fn is_series(&self) -> bool {
        matches!(self.route, Route::Series(_))
    }

    /// Estimated relative quadrature error (zero for the series route).
    pub fn error_estimate(&self) -> f64 {
        match &self.route {
            Route::Series(_) => 0.0,
            Route::Volterra { error_estimate, .. } => *error_estimate,
        }
    }

    /// `S_j^{(nu)}(x, lambda)`, `nu = 0 .. n-1`, 1-based `j`, `0 < x <= length`.
    pub fn eval_s(&self, j: usize, x: f64) -> Result<Vec<C64>> {
        let n = self.n();
        match &self.route {
            Route::Series(sr) => {
                let mu = self.frob.cd.mu[j - 1];
                let s = &sr.coeffs[j - 1];
                let mut out = vec![ZERO; n];
                let base: Vec<C64> = (0..n).map(|nu| rpow(x, mu - nu as f64)).collect();
                let mut pw = 1.0;
                for (d, sd) in s.iter().enumerate() {
                    if *sd != ZERO {
                        let a = mu + d as f64;
                        for nu in 0..n {
                            out[nu] += sd * falling(a, nu) * base[nu] * pw;
                        }
                    }
                    pw *= x;
                }
                Ok(out)
            }
            Route::Volterra { coarse, fine, .. } => {
                let a = coarse.eval(&self.frob, &self.potential, self.lambda, j - 1, x)?;
                let b = fine.eval(&self.frob, &self.potential, self.lambda, j - 1, x)?;
                Ok(a.iter().zip(&b).map(|(a, b)| (b * 4.0 - a) / 3.0).collect())
            }
        }
    }

    /// `W[nu][j] = S_j^{(nu)}(x)`.
    pub fn matrix(&self, x: f64) -> Result<CMatrix> {
        let n = self.n();
        let mut m = CMatrix::zeros(n, n);
        for j in 0..n {
            let v = self.eval_s(j + 1, x)?;
            for nu in 0..n {
                m[(nu, j)] = v[nu];
            }
        }
        Ok(m)
    }

    /// Endpoint derivative matrix at `x = length`.
    pub fn endpoint(&self) -> Result<CMatrix> {
        self.matrix(self.length)
    }

    pub fn wronskian(&self, x: f64) -> Result<C64> {
        Ok(det(&self.matrix(x)?))
    }
}
