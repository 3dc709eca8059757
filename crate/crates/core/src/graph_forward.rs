//! Weyl-type solutions on the star graph and the Weyl-type matrices built from them.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, cond, det, solve, CMatrix, CVector, C64, ONE, ZERO};
use crate::model::{EdgeSpec, SpectralGrid, StarGraph};
use crate::singular_ode::{build_series, regular_basis, CharData, FrobeniusBasis, RegularBasis, VolterraOptions};

/// Relative threshold below which the system determinant marks a pole.
pub const SINGULAR_THRESHOLD: f64 = 1e-10;
/// Condition number above which an assembly is rejected.
pub const COND_LIMIT: f64 = 1e12;

pub fn edge_char(edge: &EdgeSpec) -> Result<CharData> {
    edge.char_data()
}

/// `U_{j nu}(y) = sum_{mu <= nu} gamma_{j nu mu} y^{(mu)}(l_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub edge: usize,
    pub order: usize,
    pub coeffs: Vec<C64>,
}

impl LinearForm {
    pub fn of_edge(g: &StarGraph, j: usize, nu: usize) -> Self {
        LinearForm { edge: j, order: nu, coeffs: g.edge(j).gamma[nu][..=nu].to_vec() }
    }
}

/// Applies the form to the endpoint derivatives `y^{(mu)}(l_j)`.
pub fn apply_form(form: &LinearForm, derivs: &[C64]) -> C64 {
    form.coeffs.iter().zip(derivs).map(|(g, y)| g * y).sum()
}

/// First basis index allowed on edge `j != s` for the solution `Psi_{sk}`:
/// `<n_j - k - 1> + 2`.
pub fn lower_index(n_j: usize, k: usize) -> usize {
    (n_j as isize - k as isize + 1).max(2) as usize
}

/// Free coefficient indices `mu` of `M_{skj mu}` on edge `j`.
pub fn free_indices(g: &StarGraph, s: usize, k: usize, j: usize) -> std::ops::RangeInclusive<usize> {
    let n = g.order(j);
    if j == s {
        k + 1..=n
    } else {
        lower_index(n, k)..=n
    }
}

/// One vertex condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// `U_{1 nu}(psi_1) = U_{j nu}(psi_j)`.
    Continuity { j: usize, nu: usize },
    /// `sum_{n_j > nu} U_{j nu}(psi_j) = 0`.
    Kirchhoff { nu: usize },
}

/// The vertex conditions imposed on `Psi_{sk}`.
pub fn conditions(g: &StarGraph, s: usize, k: usize) -> Vec<Condition> {
    let mut out = Vec::new();
    for nu in 0..k {
        for j in 2..=g.p() {
            if g.order(j) > nu + 1 {
                out.push(Condition::Continuity { j, nu });
            }
        }
    }
    for nu in k..g.order(s) {
        out.push(Condition::Kirchhoff { nu });
    }
    out
}

/// Bases of all edges shared by every `lambda`.
#[derive(Debug, Clone)]
pub struct ForwardContext {
    pub graph: StarGraph,
    pub frobs: Vec<Arc<FrobeniusBasis>>,
    pub opts: VolterraOptions,
}

impl ForwardContext {
    pub fn new(graph: &StarGraph) -> Result<Self> {
        Self::with_options(graph, VolterraOptions::default())
    }

    pub fn with_options(graph: &StarGraph, opts: VolterraOptions) -> Result<Self> {
        Self::with_tolerances(graph, 1e-16, opts)
    }

    /// `series_tol` is the truncation tolerance of the Frobenius series.
    pub fn with_tolerances(graph: &StarGraph, series_tol: f64, opts: VolterraOptions) -> Result<Self> {
        let frobs = graph
            .edges
            .iter()
            .map(|e| Ok(Arc::new(build_series(&e.char_data()?, series_tol))))
            .collect::<Result<_>>()?;
        Ok(ForwardContext { graph: graph.clone(), frobs, opts })
    }

    pub fn bases(&self, lambda: C64) -> Result<GraphBases> {
        let bases = self
            .graph
            .edges
            .iter()
            .zip(&self.frobs)
            .map(|(e, f)| regular_basis(f, &e.potential, lambda, e.length, &self.opts))
            .collect::<Result<Vec<_>>>()?;
        GraphBases::new(&self.graph, lambda, bases)
    }
}

/// Per-edge bases at one `lambda` with their endpoint data.
#[derive(Debug, Clone)]
pub struct GraphBases {
    pub lambda: C64,
    pub bases: Vec<RegularBasis>,
    /// `ends[j-1][(nu, mu-1)] = S_{mu j}^{(nu)}(l_j)`.
    pub ends: Vec<CMatrix>,
    /// `forms[j-1][(nu, mu-1)] = U_{j nu}(S_{mu j})`.
    pub forms: Vec<CMatrix>,
}

impl GraphBases {
    pub fn new(g: &StarGraph, lambda: C64, bases: Vec<RegularBasis>) -> Result<Self> {
        let mut ends = Vec::new();
        let mut forms = Vec::new();
        for (j, b) in bases.iter().enumerate() {
            let e = b.endpoint()?;
            let n = e.nrows();
            let f = CMatrix::from_fn(n, n, |nu, mu| {
                let form = LinearForm::of_edge(g, j + 1, nu);
                let col: Vec<C64> = (0..n).map(|r| e[(r, mu)]).collect();
                apply_form(&form, &col)
            });
            ends.push(e);
            forms.push(f);
        }
        Ok(GraphBases { lambda, bases, ends, forms })
    }
}

/// The linear system for `Psi_{sk}` at one `lambda` and its solution.
#[derive(Debug, Clone)]
pub struct WeylAssembly {
    pub s: usize,
    pub k: usize,
    pub lambda: C64,
    /// `(j, mu)` for each unknown column.
    pub unknowns: Vec<(usize, usize)>,
    pub conditions: Vec<Condition>,
    pub matrix: CMatrix,
    pub rhs: CVector,
    /// `coeffs[j-1][mu-1] = M_{skj mu}`.
    pub coeffs: Vec<Vec<C64>>,
    pub delta: C64,
    pub cond: f64,
    /// Largest relative residual of the vertex conditions.
    pub residual: f64,
}

fn form_value(gb: &GraphBases, coeffs: &[Vec<C64>], j: usize, nu: usize) -> C64 {
    coeffs[j - 1].iter().enumerate().map(|(mu, m)| m * gb.forms[j - 1][(nu, mu)]).sum()
}

fn form_scale(gb: &GraphBases, coeffs: &[Vec<C64>], j: usize, nu: usize) -> f64 {
    coeffs[j - 1].iter().enumerate().map(|(mu, m)| (m * gb.forms[j - 1][(nu, mu)]).norm()).sum()
}

/// Largest residual of the vertex conditions relative to the size of the terms.
pub fn vertex_residual(g: &StarGraph, gb: &GraphBases, s: usize, k: usize, coeffs: &[Vec<C64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for cnd in conditions(g, s, k) {
        let (val, scale) = match cnd {
            Condition::Continuity { j, nu } => (
                form_value(gb, coeffs, 1, nu) - form_value(gb, coeffs, j, nu),
                form_scale(gb, coeffs, 1, nu) + form_scale(gb, coeffs, j, nu),
            ),
            Condition::Kirchhoff { nu } => {
                let js: Vec<usize> = (1..=g.p()).filter(|&j| g.order(j) > nu).collect();
                (
                    js.iter().map(|&j| form_value(gb, coeffs, j, nu)).sum(),
                    js.iter().map(|&j| form_scale(gb, coeffs, j, nu)).sum(),
                )
            }
        };
        worst = worst.max(val.norm() / scale.max(1e-300));
    }
    worst
}

/// Solves the vertex conditions for `Psi_{sk}`, `k = 1 .. n_s - 1`.
pub fn build_weyl_solution(g: &StarGraph, gb: &GraphBases, s: usize, k: usize) -> Result<WeylAssembly> {
    let ns = g.order(s);
    if s == 0 || s > g.p() || k == 0 || k >= ns {
        return Err(Error::InvalidConfig(format!("no Weyl solution for s={s}, k={k}")));
    }
    let mut unknowns = Vec::new();
    for j in 1..=g.p() {
        for mu in free_indices(g, s, k, j) {
            unknowns.push((j, mu));
        }
    }
    let conds = conditions(g, s, k);
    let size = unknowns.len();
    debug_assert_eq!(size, conds.len());
    let mut a = CMatrix::zeros(size, size);
    let mut b = CVector::zeros(size);
    // coefficient of M_{skj mu} in U_{i nu}, with sign
    let entry = |i: usize, nu: usize, j: usize, mu: usize| -> C64 {
        if i == j {
            gb.forms[j - 1][(nu, mu - 1)]
        } else {
            ZERO
        }
    };
    for (r, cnd) in conds.iter().enumerate() {
        let (plus, minus): (Vec<usize>, Vec<usize>) = match *cnd {
            Condition::Continuity { j, .. } => (vec![1], vec![j]),
            Condition::Kirchhoff { nu } => ((1..=g.p()).filter(|&j| g.order(j) > nu).collect(), vec![]),
        };
        let nu = match *cnd {
            Condition::Continuity { nu, .. } | Condition::Kirchhoff { nu } => nu,
        };
        for (col, &(j, mu)) in unknowns.iter().enumerate() {
            let mut v = ZERO;
            for &i in &plus {
                v += entry(i, nu, j, mu);
            }
            for &i in &minus {
                v -= entry(i, nu, j, mu);
            }
            a[(r, col)] = v;
        }
        // the fixed S_{ks} component moves to the right-hand side
        let fixed = entry(s, nu, s, k);
        if plus.contains(&s) {
            b[r] -= fixed;
        }
        if minus.contains(&s) {
            b[r] += fixed;
        }
    }
    let delta = det(&a);
    if nearly_singular(&a, delta) {
        return Err(Error::SingularAtLambda { re: gb.lambda.re, im: gb.lambda.im });
    }
    let kappa = equilibrated_cond(&a);
    if kappa > COND_LIMIT {
        return Err(Error::IllConditioned { cond: kappa });
    }
    let x = solve(&a, &b).ok_or(Error::SingularAtLambda { re: gb.lambda.re, im: gb.lambda.im })?;
    let mut coeffs: Vec<Vec<C64>> = (1..=g.p()).map(|j| vec![ZERO; g.order(j)]).collect();
    coeffs[s - 1][k - 1] = ONE;
    for (col, &(j, mu)) in unknowns.iter().enumerate() {
        coeffs[j - 1][mu - 1] = x[col];
    }
    let residual = vertex_residual(g, gb, s, k, &coeffs);
    Ok(WeylAssembly {
        s,
        k,
        lambda: gb.lambda,
        unknowns,
        conditions: conds,
        matrix: a,
        rhs: b,
        coeffs,
        delta,
        cond: kappa,
        residual,
    })
}

/// `|det|` small against the Hadamard bound taken over rows or over columns.
pub fn nearly_singular(a: &CMatrix, delta: C64) -> bool {
    let rows: f64 = a.row_iter().map(|r| r.norm()).product();
    let cols: f64 = a.column_iter().map(|c| c.norm()).product();
    delta.norm() < SINGULAR_THRESHOLD * rows.max(cols)
}

/// Condition number after scaling rows and columns to unit maximum.
pub fn equilibrated_cond(a: &CMatrix) -> f64 {
    let mut m = a.clone();
    for r in 0..m.nrows() {
        let s = m.row(r).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            m.row_mut(r).scale_mut(1.0 / s);
        }
    }
    for col in 0..m.ncols() {
        let s = m.column(col).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if s > 0.0 {
            m.column_mut(col).scale_mut(1.0 / s);
        }
    }
    cond(&m)
}

impl WeylAssembly {
    /// `psi_{skj}^{(nu)}(x)`, `nu = 0 .. n_j - 1`.
    pub fn psi(&self, gb: &GraphBases, j: usize, x: f64) -> Result<Vec<C64>> {
        let b = &gb.bases[j - 1];
        let n = b.n();
        let mut out = vec![ZERO; n];
        for (mu, m) in self.coeffs[j - 1].iter().enumerate() {
            if *m == ZERO {
                continue;
            }
            let v = b.eval_s(mu + 1, x)?;
            for nu in 0..n {
                out[nu] += m * v[nu];
            }
        }
        Ok(out)
    }

    /// `psi_{skj}^{(nu)}(l_j)` from the stored endpoint matrices.
    pub fn psi_end(&self, gb: &GraphBases, j: usize) -> Vec<C64> {
        let e = &gb.ends[j - 1];
        (0..e.nrows()).map(|nu| self.coeffs[j - 1].iter().enumerate().map(|(mu, m)| m * e[(nu, mu)]).sum()).collect()
    }
}

/// Row `k` of `M_s`: unit in column `k`, zeros before it.
pub fn boundary_matrix(g: &StarGraph, gb: &GraphBases, s: usize) -> Result<(CMatrix, f64, f64)> {
    let n = g.order(s);
    let mut m = CMatrix::identity(n, n);
    let mut res: f64 = 0.0;
    let mut kappa: f64 = 0.0;
    for k in 1..n {
        let a = build_weyl_solution(g, gb, s, k)?;
        for mu in k + 1..=n {
            m[(k - 1, mu - 1)] = a.coeffs[s - 1][mu - 1];
        }
        res = res.max(a.residual);
        kappa = kappa.max(a.cond);
    }
    Ok((m, res, kappa))
}

/// `m_j(lambda)` from the two-point problems for `phi_{jk}` on edge `j` alone.
pub fn internal_matrix(basis: &RegularBasis) -> Result<CMatrix> {
    let e = basis.endpoint()?;
    let n = e.nrows();
    let mut m = CMatrix::identity(n, n);
    for k in 1..n {
        let first = n - k + 1;
        let a = CMatrix::from_fn(k, k, |nu, col| e[(nu, first - 1 + col)]);
        let mut rhs = CVector::zeros(k);
        rhs[k - 1] = ONE;
        if nearly_singular(&a, det(&a)) {
            return Err(Error::SingularAtLambda { re: basis.lambda.re, im: basis.lambda.im });
        }
        let coef = solve(&a, &rhs).ok_or(Error::SingularAtLambda { re: basis.lambda.re, im: basis.lambda.im })?;
        for nu in k + 1..=n {
            m[(k - 1, nu - 1)] = (0..k).map(|col| coef[col] * e[(nu - 1, first - 1 + col)]).sum();
        }
    }
    Ok(m)
}

/// `m_j` from endpoint data of `psi_{s mu j}`, `mu = 1 .. n_j - 1`:
/// `data[mu-1][nu] = psi_{s mu j}^{(nu)}(l_j)`.
pub fn internal_from_weyl_data(data: &[Vec<C64>], n: usize) -> Result<CMatrix> {
    if data.len() + 1 < n {
        return Err(Error::MissingWeylData(format!("need {} Weyl solutions, got {}", n - 1, data.len())));
    }
    let mut m = CMatrix::identity(n, n);
    for nu in 2..=n {
        if data[0][0].norm() == 0.0 {
            return Err(Error::DenominatorNearZero);
        }
        m[(0, nu - 1)] = data[0][nu - 1] / data[0][0];
    }
    for k in 2..n {
        let den = det(&CMatrix::from_fn(k, k, |xi, mu| data[mu][xi]));
        let scale: f64 = (0..k).map(|mu| data[mu][..k].iter().map(|z| z.norm()).fold(0.0, f64::max)).product();
        if den.norm() <= 1e-13 * scale {
            return Err(Error::DenominatorNearZero);
        }
        for nu in k + 1..=n {
            let num =
                det(&CMatrix::from_fn(k, k, |row, mu| if row + 1 < k { data[mu][row] } else { data[mu][nu - 1] }));
            m[(k - 1, nu - 1)] = num / den;
        }
    }
    Ok(m)
}

/// `m_j` through the Weyl solutions of boundary vertex `s != j`.
pub fn internal_via_boundary(g: &StarGraph, gb: &GraphBases, s: usize, j: usize) -> Result<CMatrix> {
    let nj = g.order(j);
    if s == j || g.order(s) < nj {
        return Err(Error::InvalidConfig(format!("edge {s} cannot carry m_{j}")));
    }
    let data = (1..nj).map(|k| Ok(build_weyl_solution(g, gb, s, k)?.psi_end(gb, j))).collect::<Result<Vec<_>>>()?;
    internal_from_weyl_data(&data, nj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeylKind {
    Boundary,
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFlag {
    Ok,
    Singular,
    IllConditioned,
}

impl PointFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointFlag::Ok => "ok",
            PointFlag::Singular => "singular",
            PointFlag::IllConditioned => "ill_conditioned",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "ok" => Ok(PointFlag::Ok),
            "singular" => Ok(PointFlag::Singular),
            "ill_conditioned" => Ok(PointFlag::IllConditioned),
            other => Err(Error::InvalidConfig(format!("unknown flag {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeylPoint {
    pub lambda: C64,
    pub matrix: Option<CMatrix>,
    pub residual: f64,
    pub cond: f64,
    pub flag: PointFlag,
}

/// A Weyl-type matrix sampled on a `lambda` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeylSample {
    pub kind: WeylKind,
    pub index: usize,
    pub order: usize,
    pub points: Vec<WeylPoint>,
}

fn flag_of(e: &Error) -> Option<PointFlag> {
    match e {
        Error::SingularAtLambda { .. } => Some(PointFlag::Singular),
        Error::IllConditioned { .. } => Some(PointFlag::IllConditioned),
        _ => None,
    }
}

fn sweep<F>(lambdas: &[C64], order: usize, f: F) -> Result<Vec<WeylPoint>>
where
    F: Fn(C64) -> Result<(CMatrix, f64, f64)> + Sync,
{
    lambdas
        .par_iter()
        .map(|&lambda| match f(lambda) {
            Ok((m, residual, cond)) => Ok(WeylPoint { lambda, matrix: Some(m), residual, cond, flag: PointFlag::Ok }),
            Err(e) => match flag_of(&e) {
                Some(flag) => Ok(WeylPoint {
                    lambda,
                    matrix: None,
                    residual: f64::NAN,
                    cond: if let Error::IllConditioned { cond } = e { cond } else { f64::INFINITY },
                    flag,
                }),
                None => Err(e),
            },
        })
        .collect::<Result<Vec<_>>>()
        .map(|mut v| {
            debug_assert!(v.iter().all(|p| p.matrix.as_ref().is_none_or(|m| m.nrows() == order)));
            v.sort_by(|a, b| a.lambda.norm().partial_cmp(&b.lambda.norm()).unwrap());
            v
        })
}

/// Samples `M_s` on the grid; poles and ill-conditioned points are flagged.
pub fn boundary_weyl_sample(ctx: &ForwardContext, s: usize, lambdas: &[C64]) -> Result<WeylSample> {
    let g = &ctx.graph;
    let order = g.order(s);
    let points = sweep(lambdas, order, |lambda| boundary_matrix(g, &ctx.bases(lambda)?, s))?;
    Ok(WeylSample { kind: WeylKind::Boundary, index: s, order, points })
}

/// `M_s` on a grid specification.
#[allow(non_snake_case)]
pub fn weyl_matrix_M(ctx: &ForwardContext, s: usize, grid: &SpectralGrid) -> Result<WeylSample> {
    boundary_weyl_sample(ctx, s, &grid.lambdas()?)
}

/// `m_j` on explicit `lambda` values.
pub fn internal_weyl_sample(ctx: &ForwardContext, j: usize, lambdas: &[C64]) -> Result<WeylSample> {
    let g = &ctx.graph;
    let e = g.edge(j);
    let order = e.order;
    let points = sweep(lambdas, order, |lambda| {
        let b = regular_basis(&ctx.frobs[j - 1], &e.potential, lambda, e.length, &ctx.opts)?;
        Ok((internal_matrix(&b)?, 0.0, 1.0))
    })?;
    Ok(WeylSample { kind: WeylKind::Internal, index: j, order, points })
}

/// `m_j` on a grid specification.
pub fn weyl_matrix_m(ctx: &ForwardContext, j: usize, grid: &SpectralGrid) -> Result<WeylSample> {
    internal_weyl_sample(ctx, j, &grid.lambdas()?)
}

const CSV_HEADER: &str = "lambda_re,lambda_im,row,col,val_re,val_im,flag";

impl WeylSample {
    /// CSV with one line per entry; flagged points carry `NaN` values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            for r in 0..self.order {
                for col in 0..self.order {
                    let v = p.matrix.as_ref().map_or(c(f64::NAN, f64::NAN), |m| m[(r, col)]);
                    out.push_str(&format!(
                        "{:.17e},{:.17e},{},{},{:.17e},{:.17e},{}\n",
                        p.lambda.re,
                        p.lambda.im,
                        r + 1,
                        col + 1,
                        v.re,
                        v.im,
                        p.flag.as_str()
                    ));
                }
            }
        }
        out
    }

    pub fn from_csv(kind: WeylKind, index: usize, text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::InvalidConfig(format!("CSV line {line}: {what}"));
        let mut rows: Vec<(C64, usize, usize, C64, PointFlag)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if i == 0 || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 7 {
                return Err(bad(i + 1, "expected 7 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "bad index"));
            rows.push((
                c(num(f[0])?, num(f[1])?),
                idx(f[2])?,
                idx(f[3])?,
                c(num(f[4])?, num(f[5])?),
                PointFlag::parse(f[6])?,
            ));
        }
        let order = rows.iter().map(|r| r.1.max(r.2)).max().ok_or(Error::EmptyRange)?;
        let mut points: Vec<WeylPoint> = Vec::new();
        for (lambda, r, col, v, flag) in rows {
            if r == 0 || col == 0 {
                return Err(Error::InvalidConfig("CSV indices are 1-based".into()));
            }
            let p = match points.iter_mut().find(|p| p.lambda == lambda) {
                Some(p) => p,
                None => {
                    points.push(WeylPoint {
                        lambda,
                        matrix: (flag == PointFlag::Ok).then(|| CMatrix::zeros(order, order)),
                        residual: 0.0,
                        cond: 0.0,
                        flag,
                    });
                    points.last_mut().unwrap()
                }
            };
            if let Some(m) = p.matrix.as_mut() {
                m[(r - 1, col - 1)] = v;
            }
        }
        Ok(WeylSample { kind, index, order, points })
    }

    /// Matrix at `lambda`, if sampled there and not flagged.
    pub fn at(&self, lambda: C64) -> Option<&CMatrix> {
        self.points
            .iter()
            .find(|p| (p.lambda - lambda).norm() <= 1e-12 * lambda.norm().max(1.0))
            .and_then(|p| p.matrix.as_ref())
    }

    pub fn flagged(&self) -> usize {
        self.points.iter().filter(|p| p.flag != PointFlag::Ok).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialSpec;

    fn free_graph(orders: &[usize]) -> StarGraph {
        let edges = orders
            .iter()
            .map(|&n| {
                let nu = match n {
                    2 => vec![ZERO],
                    _ => vec![c(-1.0, 0.0), ZERO],
                };
                EdgeSpec::new(n, 1.0, nu)
            })
            .collect();
        StarGraph::new(edges, orders.len()).unwrap()
    }

    #[test]
    fn identity_form_picks_derivative() {
        let g = free_graph(&[2, 2]);
        let f = LinearForm::of_edge(&g, 1, 1);
        assert_eq!(apply_form(&f, &[c(3.0, 0.0), c(5.0, 1.0)]), c(5.0, 1.0));
    }

    #[test]
    fn mixed_form() {
        let f = LinearForm { edge: 1, order: 1, coeffs: vec![ONE, ONE] };
        assert_eq!(apply_form(&f, &[c(2.0, 0.0), c(0.5, 0.0)]), c(2.5, 0.0));
    }

    #[test]
    fn square_systems_for_mixed_orders() {
        let g = free_graph(&[3, 2, 2]);
        for s in 1..=3 {
            for k in 1..g.order(s) {
                let unknowns: usize = (1..=3).map(|j| free_indices(&g, s, k, j).count()).sum();
                assert_eq!(unknowns, conditions(&g, s, k).len(), "s={s} k={k}");
            }
        }
    }

    #[test]
    fn lower_index_clamps_at_two() {
        assert_eq!(lower_index(2, 1), 2);
        assert_eq!(lower_index(3, 1), 3);
        assert_eq!(lower_index(3, 2), 2);
        assert_eq!(lower_index(2, 3), 2);
    }

    #[test]
    fn hyperbolic_three_star() {
        let g = free_graph(&[2, 2, 2]);
        let ctx = ForwardContext::new(&g).unwrap();
        let lambda = c(0.0, 7.0);
        let gb = ctx.bases(lambda).unwrap();
        let a = build_weyl_solution(&g, &gb, 1, 1).unwrap();
        let rho = lambda.sqrt();
        let (sh, ch) = (rho.sinh(), rho.cosh());
        let exact = -rho * (sh * sh + ch * ch * 2.0) / (ch * sh * 3.0);
        assert!((a.coeffs[0][1] - exact).norm() < 1e-10 * exact.norm());
        assert!(a.residual < 1e-12);
    }

    #[test]
    fn internal_hyperbolic() {
        let g = free_graph(&[2, 2]);
        let ctx = ForwardContext::new(&g).unwrap();
        let lambda = c(-2.0, 5.0);
        let b = &ctx.bases(lambda).unwrap().bases[0];
        let m = internal_matrix(b).unwrap();
        let rho = lambda.sqrt();
        assert!((m[(0, 1)] - rho * rho.cosh() / rho.sinh()).norm() < 1e-10);
        assert_eq!(m[(1, 1)], ONE);
        assert_eq!(m[(1, 0)], ZERO);
    }

    #[test]
    fn csv_round_trip() {
        let g = free_graph(&[2, 2, 2]).edges;
        let g = StarGraph::new(g.into_iter().map(|e| e.with_potential(PotentialSpec::Zero)).collect(), 3).unwrap();
        let ctx = ForwardContext::new(&g).unwrap();
        let w = boundary_weyl_sample(&ctx, 1, &[c(0.0, 2.0), c(1.0, 3.0)]).unwrap();
        let back = WeylSample::from_csv(WeylKind::Boundary, 1, &w.to_csv()).unwrap();
        for p in &w.points {
            let m = back.at(p.lambda).unwrap();
            assert!((m - p.matrix.as_ref().unwrap()).norm() == 0.0);
        }
    }
}
