//! Edges, potentials and the star graph, with spectral grids.
//!
//! Edge indices `j` and boundary-vertex indices `s`, `w` are 1-based
//! throughout the public API, as are solution indices `k` and basis indices
//! `mu`. Derivative orders `nu` are 0-based.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inverse::groups::{group_edges, GroupTable};
use crate::linalg::{c, C64, ONE, ZERO};
use crate::quad::integrate_graded;
use crate::singular_ode::{build_char_poly, compute_char_roots, CharData};

/// Natural cubic spline through complex samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    pub x: Vec<f64>,
    pub q: Vec<C64>,
    second: Vec<C64>,
}

impl SampleTable {
    pub fn new(x: Vec<f64>, q: Vec<C64>) -> Result<Self> {
        if x.len() != q.len() || x.len() < 2 {
            return Err(Error::InvalidConfig("sample table needs at least two (x, q) pairs of equal length".into()));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("sample abscissae must be increasing".into()));
        }
        let n = x.len();
        let mut second = vec![ZERO; n];
        if n > 2 {
            // tridiagonal solve for interior second derivatives
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![ZERO; m];
            let mut upper = vec![0.0; m];
            for i in 0..m {
                let h0 = x[i + 1] - x[i];
                let h1 = x[i + 2] - x[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = (q[i + 2] - q[i + 1]) * (6.0 / h1) - (q[i + 1] - q[i]) * (6.0 / h0);
            }
            for i in 1..m {
                let lower = x[i + 1] - x[i];
                let f = lower / diag[i - 1];
                diag[i] -= f * upper[i - 1];
                let prev = rhs[i - 1];
                rhs[i] -= prev * f;
            }
            let mut sol = vec![ZERO; m];
            for i in (0..m).rev() {
                let next = if i + 1 < m { sol[i + 1] * upper[i] } else { ZERO };
                sol[i] = (rhs[i] - next) / diag[i];
            }
            second[1..(m + 1)].copy_from_slice(&sol);
        }
        Ok(SampleTable { x, q, second })
    }

    /// Value and first derivative. Outside the sampled range the end values are held.
    pub fn eval(&self, t: f64) -> (C64, C64) {
        let n = self.x.len();
        if t <= self.x[0] {
            return (self.q[0], ZERO);
        }
        if t >= self.x[n - 1] {
            return (self.q[n - 1], ZERO);
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let v = self.q[i] * a + self.q[i + 1] * b + (m0 * (a * a * a - a) + m1 * (b * b * b - b)) * (h * h / 6.0);
        let d = (self.q[i + 1] - self.q[i]) / h + (m1 * (3.0 * b * b - 1.0) - m0 * (3.0 * a * a - 1.0)) * (h / 6.0);
        (v, d)
    }
}

/// Potential components `q_0 .. q_{n-2}` on one edge.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PotentialSpec {
    #[default]
    Zero,
    /// `coeffs[m][p]` is the coefficient of `x^p` in `q_m`.
    Polynomial(Vec<Vec<C64>>),
    /// One table per component; missing components are zero.
    Table(Vec<Option<SampleTable>>),
}

impl PotentialSpec {
    pub fn is_zero(&self) -> bool {
        match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Polynomial(c) => c.iter().all(|p| p.iter().all(|v| *v == ZERO)),
            PotentialSpec::Table(t) => t.iter().all(|c| c.is_none()),
        }
    }

    pub fn eval(&self, m: usize, x: f64) -> C64 {
        match self {
            PotentialSpec::Zero => ZERO,
            PotentialSpec::Polynomial(c) => {
                c.get(m).map(|p| p.iter().rev().fold(ZERO, |acc, a| acc * x + a)).unwrap_or(ZERO)
            }
            PotentialSpec::Table(t) => match t.get(m) {
                Some(Some(tab)) => tab.eval(x).0,
                _ => ZERO,
            },
        }
    }

    /// Polynomial coefficients of component `m`, trimmed of trailing zeros.
    pub fn poly(&self, m: usize) -> Option<Vec<C64>> {
        match self {
            PotentialSpec::Zero => Some(Vec::new()),
            PotentialSpec::Polynomial(c) => {
                let mut p = c.get(m).cloned().unwrap_or_default();
                while p.last() == Some(&ZERO) {
                    p.pop();
                }
                Some(p)
            }
            PotentialSpec::Table(_) => None,
        }
    }

    /// Integral of `|q_m(t)| t^weight` over `(a, b)`.
    pub fn weighted_abs_integral(&self, m: usize, weight: f64, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let grading = if weight < 0.0 { 4.0 } else { 1.0 };
        integrate_graded(|t| self.eval(m, t).norm() * t.powf(weight), a, b, grading)
    }

    /// Whether `q_m^{(deriv)}(x) x^weight` is integrable on `(0, l)`.
    ///
    /// Decided from the lowest non-vanishing power for polynomials; for tables
    /// the tail must be negligible or shrink geometrically over the decades below `1e-6`.
    pub fn integrable_with_weight(&self, m: usize, deriv: usize, weight: f64, l: f64) -> bool {
        match self {
            PotentialSpec::Zero => true,
            PotentialSpec::Polynomial(_) => {
                let p = self.poly(m).unwrap_or_default();
                match p.iter().enumerate().skip(deriv).find(|(_, a)| **a != ZERO) {
                    None => true,
                    Some((power, _)) => (power - deriv) as f64 + weight > -1.0 + 1e-12,
                }
            }
            PotentialSpec::Table(t) => match t.get(m) {
                Some(Some(tab)) => {
                    let f = |x: f64| {
                        let (v, d) = tab.eval(x);
                        let base = match deriv {
                            0 => v.norm(),
                            1 => d.norm(),
                            // higher derivatives of a cubic spline are not tracked
                            _ => 0.0,
                        };
                        base * x.powf(weight)
                    };
                    let decade = |a: f64| integrate_graded(&f, a, 10.0 * a, 4.0);
                    let d = [decade(1e-9), decade(1e-8), decade(1e-7)];
                    let body = integrate_graded(&f, 1e-6, l, 4.0);
                    d.iter().all(|v| v.is_finite())
                        && (d[0] <= 1e-3 * (1.0 + body.abs()) || (d[0] <= 0.95 * d[1] && d[1] <= 0.95 * d[2]))
                }
                _ => true,
            },
        }
    }
}

/// One edge: order `n_j`, length `l_j`, singularity coefficients, potential and
/// the lower-triangular coefficients of the vertex forms.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub order: usize,
    pub length: f64,
    /// `nu[m]` for `m = 0 .. order-2`.
    pub nu: Vec<C64>,
    pub potential: PotentialSpec,
    /// `gamma[nu][mu]` for `mu <= nu`.
    pub gamma: Vec<Vec<C64>>,
}

impl EdgeSpec {
    /// Edge with zero potential and identity vertex forms.
    pub fn new(order: usize, length: f64, nu: Vec<C64>) -> Self {
        EdgeSpec { order, length, nu, potential: PotentialSpec::Zero, gamma: identity_gamma(order) }
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    pub fn with_gamma(mut self, gamma: Vec<Vec<C64>>) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn char_data(&self) -> Result<CharData> {
        compute_char_roots(&build_char_poly(&self.nu, self.order)?)
    }

    fn check_structure(&self, edge: usize) -> Result<()> {
        if self.order < 2 {
            return Err(Error::InvalidConfig(format!("edge {edge}: order must be >= 2")));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::InvalidConfig(format!("edge {edge}: length must be positive")));
        }
        if self.nu.len() != self.order - 1 {
            return Err(Error::WrongCoefficientCount { expected: self.order - 1, got: self.nu.len() });
        }
        if self.gamma.len() != self.order {
            return Err(Error::InvalidConfig(format!("edge {edge}: gamma must have {} rows", self.order)));
        }
        for (nu, row) in self.gamma.iter().enumerate() {
            if row.len() < nu + 1 {
                return Err(Error::InvalidConfig(format!("edge {edge}: gamma row {nu} needs {} entries", nu + 1)));
            }
            if row[nu].norm() == 0.0 {
                return Err(Error::GammaDiagonalZero { edge, nu });
            }
        }
        Ok(())
    }
}

pub fn identity_gamma(order: usize) -> Vec<Vec<C64>> {
    (0..order).map(|nu| (0..=nu).map(|mu| if mu == nu { ONE } else { ZERO }).collect()).collect()
}

/// Star graph with edges ordered by non-increasing order and the target
/// boundary vertex `w` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct StarGraph {
    pub edges: Vec<EdgeSpec>,
    pub w: usize,
}

impl StarGraph {
    /// Builds the graph after checking the structural invariants.
    pub fn new(edges: Vec<EdgeSpec>, w: usize) -> Result<Self> {
        let g = StarGraph { edges, w };
        g.check_structure()?;
        Ok(g)
    }

    pub fn p(&self) -> usize {
        self.edges.len()
    }

    /// 1-based edge access.
    pub fn edge(&self, j: usize) -> &EdgeSpec {
        &self.edges[j - 1]
    }

    pub fn order(&self, j: usize) -> usize {
        self.edges[j - 1].order
    }

    fn check_structure(&self) -> Result<GroupTable> {
        if self.edges.len() < 2 {
            return Err(Error::InvalidConfig("a star graph needs at least two edges".into()));
        }
        for (i, e) in self.edges.iter().enumerate() {
            e.check_structure(i + 1)?;
        }
        for i in 1..self.edges.len() {
            if self.edges[i].order > self.edges[i - 1].order {
                return Err(Error::NonmonotoneOrders {
                    edge: i + 1,
                    order: self.edges[i].order,
                    previous: self.edges[i - 1].order,
                });
            }
        }
        group_edges(self)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub edge: usize,
    pub roots: Vec<(f64, f64)>,
    pub root_error: Option<String>,
    /// Per component: weighted integrability `q_m x^{min(theta-m,0)}` near zero.
    pub weighted_integrable: Vec<bool>,
    /// Per component: `q_m^{(m)} x^theta` integrable.
    pub derivative_integrable: Vec<bool>,
    pub admissible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub edges: Vec<EdgeReport>,
    pub passed: bool,
}

/// Checks root admissibility and potential integrability per edge.
pub fn validate_graph(g: &StarGraph) -> Result<ValidationReport> {
    g.check_structure()?;
    let mut edges = Vec::with_capacity(g.p());
    for (i, e) in g.edges.iter().enumerate() {
        let mut rep = EdgeReport {
            edge: i + 1,
            roots: Vec::new(),
            root_error: None,
            weighted_integrable: Vec::new(),
            derivative_integrable: Vec::new(),
            admissible: false,
        };
        match e.char_data() {
            Ok(cd) => {
                rep.roots = cd.mu.iter().map(|z| (z.re, z.im)).collect();
                for m in 0..e.order - 1 {
                    let w = (cd.theta - m as f64).min(0.0);
                    rep.weighted_integrable.push(e.potential.integrable_with_weight(m, 0, w, e.length));
                    rep.derivative_integrable.push(e.potential.integrable_with_weight(m, m, cd.theta, e.length));
                }
                rep.admissible =
                    rep.weighted_integrable.iter().all(|b| *b) && rep.derivative_integrable.iter().all(|b| *b);
            }
            Err(err) => rep.root_error = Some(err.to_string()),
        }
        edges.push(rep);
    }
    let passed = edges.iter().all(|e| e.admissible);
    Ok(ValidationReport { edges, passed })
}

/// `lambda` with its n-th root `rho` in the sector
/// `arg rho in (k0 pi/n, (k0+1) pi/n]` (taken modulo `2 pi`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPoint {
    pub lambda: C64,
    pub rho: C64,
    pub sector: usize,
}

impl SpectralPoint {
    /// Picks the n-th root of `lambda` lying in sector `k0`.
    pub fn in_sector(lambda: C64, n: usize, k0: usize) -> Result<Self> {
        let nf = n as f64;
        let r = lambda.norm().powf(1.0 / nf);
        let phi = lambda.arg();
        for b in 0..n {
            let mut a = (phi + 2.0 * PI * b as f64) / nf;
            a = a.rem_euclid(2.0 * PI);
            if a == 0.0 {
                a = 2.0 * PI;
            }
            let lo = k0 as f64 * PI / nf;
            let hi = (k0 + 1) as f64 * PI / nf;
            if a > lo + 1e-15 && a <= hi + 1e-13 {
                let rho = C64::from_polar(r, a);
                return Ok(SpectralPoint { lambda, rho, sector: k0 });
            }
        }
        Err(Error::InvalidConfig(format!("no n-th root of {lambda} lies in sector {k0}")))
    }

    /// Principal root, with the sector it falls in.
    pub fn principal(lambda: C64, n: usize) -> Self {
        let nf = n as f64;
        let rho = C64::from_polar(lambda.norm().powf(1.0 / nf), lambda.arg() / nf);
        let mut a = rho.arg().rem_euclid(2.0 * PI);
        if a == 0.0 {
            a = 2.0 * PI;
        }
        let sector = ((a * nf / PI).ceil() as usize).saturating_sub(1) % (2 * n);
        SpectralPoint { lambda, rho, sector }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectralGrid {
    /// `lambda = t e^{i theta}` with `t` geometrically spaced in `[t_min, t_max]`.
    Ray {
        theta: f64,
        t_min: f64,
        t_max: f64,
        count: usize,
    },
    List {
        points: Vec<[f64; 2]>,
    },
}

impl Default for SpectralGrid {
    fn default() -> Self {
        SpectralGrid::Ray { theta: PI / 2.0, t_min: 1.0, t_max: 100.0, count: 20 }
    }
}

impl SpectralGrid {
    pub fn with_count(&self, count: usize) -> Self {
        match self {
            SpectralGrid::Ray { theta, t_min, t_max, .. } => {
                SpectralGrid::Ray { theta: *theta, t_min: *t_min, t_max: *t_max, count }
            }
            other => other.clone(),
        }
    }

    pub fn lambdas(&self) -> Result<Vec<C64>> {
        let mut out = match self {
            SpectralGrid::Ray { theta, t_min, t_max, count } => {
                if *count == 0 || !(*t_min > 0.0) || t_max < t_min {
                    return Err(Error::EmptyRange);
                }
                let dir = C64::from_polar(1.0, *theta);
                (0..*count)
                    .map(|i| {
                        let t = if *count == 1 {
                            *t_min
                        } else {
                            t_min * (t_max / t_min).powf(i as f64 / (*count - 1) as f64)
                        };
                        dir * t
                    })
                    .collect::<Vec<_>>()
            }
            SpectralGrid::List { points } => {
                if points.is_empty() {
                    return Err(Error::EmptyRange);
                }
                points.iter().map(|p| c(p[0], p[1])).collect()
            }
        };
        out.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        for i in 1..out.len() {
            if (out[i] - out[i - 1]).norm() <= 1e-14 * out[i].norm().max(1.0) {
                return Err(Error::InvalidConfig("grid points must be distinct".into()));
            }
        }
        Ok(out)
    }
}

/// Pairs each grid value with its principal n-th root, ordered by `|lambda|`.
pub fn build_grid(spec: &SpectralGrid, n: usize) -> Result<Vec<SpectralPoint>> {
    Ok(spec.lambdas()?.into_iter().map(|l| SpectralPoint::principal(l, n)).collect())
}
