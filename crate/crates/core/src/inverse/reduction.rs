//! Reduction of boundary Weyl data on the known edges to the internal Weyl
//! matrix of edge `p_N`.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph_forward::{equilibrated_cond, internal_from_weyl_data, lower_index, ForwardContext, WeylSample};
use crate::linalg::{rel_err, solve, CMatrix, CVector, C64, ZERO};
use crate::model::StarGraph;
use crate::singular_ode::regular_basis;

use super::groups::{group_edges, GroupTable};

/// Condition number above which a `sigma_{skj}` system is rejected.
pub const SIGMA_COND_LIMIT: f64 = 1e10;

/// Endpoint values `psi_{skj}^{(nu)}(l_j)` keyed by `(k, j, nu)` for one fixed `s`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EndpointTable {
    pub s: usize,
    pub values: BTreeMap<(usize, usize, usize), C64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableEntry {
    pub s: usize,
    pub k: usize,
    pub j: usize,
    pub nu: usize,
    pub value: [f64; 2],
}

impl EndpointTable {
    fn new(s: usize) -> Self {
        EndpointTable { s, values: BTreeMap::new() }
    }

    pub fn get(&self, k: usize, j: usize, nu: usize) -> Result<C64> {
        self.values
            .get(&(k, j, nu))
            .copied()
            .ok_or_else(|| Error::IncompleteTable(format!("s={}, k={k}, j={j}, nu={nu}", self.s)))
    }

    pub fn keys(&self) -> BTreeSet<(usize, usize, usize)> {
        self.values.keys().copied().collect()
    }

    pub fn entries(&self) -> Vec<TableEntry> {
        self.values.iter().map(|(&(k, j, nu), v)| TableEntry { s: self.s, k, j, nu, value: [v.re, v.im] }).collect()
    }
}

/// Endpoint derivative matrices `S_{mu j}^{(nu)}(l_j)` of the known edges.
#[derive(Debug, Clone)]
pub struct KnownEdges {
    /// `ends[j-1]`, absent for `p_N`.
    pub ends: Vec<Option<CMatrix>>,
}

impl KnownEdges {
    /// Builds the bases of every edge except `p_N`.
    pub fn compute(ctx: &ForwardContext, target: usize, lambda: C64) -> Result<Self> {
        let g = &ctx.graph;
        let ends = (1..=g.p())
            .map(|j| {
                if j == target {
                    return Ok(None);
                }
                let e = g.edge(j);
                Ok(Some(regular_basis(&ctx.frobs[j - 1], &e.potential, lambda, e.length, &ctx.opts)?.endpoint()?))
            })
            .collect::<Result<_>>()?;
        Ok(KnownEdges { ends })
    }

    fn end(&self, j: usize) -> Result<&CMatrix> {
        self.ends[j - 1].as_ref().ok_or_else(|| Error::IncompleteTable(format!("no basis for edge {j}")))
    }
}

/// `U_{j nu}` applied to endpoint derivatives taken from a table.
fn form(g: &StarGraph, j: usize, nu: usize, d: impl Fn(usize) -> Result<C64>) -> Result<C64> {
    let gamma = &g.edge(j).gamma[nu];
    (0..=nu).map(|mu| Ok(gamma[mu] * d(mu)?)).sum()
}

/// Solves `U_{j nu}(y) = u` for `y^{(nu)}` given the lower derivatives.
fn invert_form(g: &StarGraph, j: usize, nu: usize, u: C64, lower: impl Fn(usize) -> Result<C64>) -> Result<C64> {
    let gamma = &g.edge(j).gamma[nu];
    if gamma[nu].norm() < 1e-300 {
        return Err(Error::FormInversionFailure { edge: j });
    }
    let mut acc = u;
    for mu in 0..nu {
        acc -= gamma[mu] * lower(mu)?;
    }
    Ok(acc / gamma[nu])
}

/// Step 1: `psi_{sks}^{(nu)}(l_s)` for `k <= omega_N - 1`, `nu <= omega_1 - 1` from `M_s`.
pub fn step1_boundary_values(gt: &GroupTable, known: &KnownEdges, ms: &CMatrix, s: usize) -> Result<EndpointTable> {
    let e = known.end(s)?;
    let w1 = gt.omega(1);
    if ms.nrows() != w1 || ms.ncols() != w1 {
        return Err(Error::MissingWeylData(format!("M_{s} must be {w1}x{w1}")));
    }
    let mut t = EndpointTable::new(s);
    for k in 1..gt.omega(gt.target) {
        for nu in 0..w1 {
            let mut v = e[(nu, k - 1)];
            for mu in k + 1..=w1 {
                v += ms[(k - 1, mu - 1)] * e[(nu, mu - 1)];
            }
            t.values.insert((k, s, nu), v);
        }
    }
    Ok(t)
}

/// The `(k, j, nu)` keys produced by the matching transfer, in the order the loops visit them.
pub fn transfer_keys(gt: &GroupTable) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for xi in gt.target..=gt.m() {
        for k in gt.omega(xi + 1)..gt.omega(xi) {
            // larger l carries the lower derivative orders
            for l in (xi..=gt.m()).rev() {
                let hi = (k - 1).min(gt.omega(l).saturating_sub(2));
                for j in 1..=gt.p(l) {
                    for nu in gt.omega(l + 1) - 1..=hi {
                        out.push((k, j, nu));
                    }
                }
            }
        }
    }
    out
}

/// Step 2: transfer the vertex values of edge `s` to all edges through the continuity conditions.
pub fn step2_propagate_matching(g: &StarGraph, gt: &GroupTable, t41: &EndpointTable) -> Result<EndpointTable> {
    let s = t41.s;
    let mut t = EndpointTable::new(s);
    for (k, j, nu) in transfer_keys(gt) {
        let u = form(g, s, nu, |mu| t41.get(k, s, mu))?;
        let v = invert_form(g, j, nu, u, |mu| t.get(k, j, mu))?;
        t.values.insert((k, j, nu), v);
    }
    Ok(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct SigmaInfo {
    pub k: usize,
    pub j: usize,
    pub size: usize,
    pub cond: f64,
}

/// Step 3: solve `sigma_{skj}` for the coefficients on every known edge and
/// expand the full endpoint data.
pub fn step3_solve_sigma(
    g: &StarGraph,
    gt: &GroupTable,
    known: &KnownEdges,
    t41: &EndpointTable,
    t44: &EndpointTable,
) -> Result<(EndpointTable, Vec<SigmaInfo>)> {
    let s = t41.s;
    let target = gt.target_edge();
    let mut t = EndpointTable::new(s);
    let mut info = Vec::new();
    for k in 1..gt.omega(gt.target) {
        for j in 1..=g.p() {
            if j == target {
                continue;
            }
            let w = g.order(j);
            if j == s {
                for nu in 0..w {
                    t.values.insert((k, j, nu), t41.get(k, s, nu)?);
                }
                continue;
            }
            let lo = lower_index(w, k);
            let size = w - lo + 1;
            let eqs = k.min(w - 1);
            if size != eqs {
                return Err(Error::RangeMismatch(format!("sigma_{s}{k}{j}: {eqs} equations, {size} unknowns")));
            }
            let e = known.end(j)?;
            let a = CMatrix::from_fn(size, size, |nu, col| e[(nu, lo - 1 + col)]);
            let rhs = CVector::from_vec((0..size).map(|nu| t44.get(k, j, nu)).collect::<Result<_>>()?);
            let kappa = equilibrated_cond(&a);
            if !(kappa <= SIGMA_COND_LIMIT) {
                return Err(Error::SigmaSingular { s, k, j, cond: kappa });
            }
            let x = solve(&a, &rhs).ok_or(Error::SigmaSingular { s, k, j, cond: f64::INFINITY })?;
            for nu in 0..w {
                let v: C64 = (0..size).map(|col| x[col] * e[(nu, lo - 1 + col)]).sum();
                t.values.insert((k, j, nu), v);
            }
            info.push(SigmaInfo { k, j, size, cond: kappa });
        }
    }
    Ok((t, info))
}

/// Step 4: the Kirchhoff conditions give `psi_{sk p_N}^{(nu)}` for `nu >= k`;
/// lower orders come from the transfer table.
pub fn step4_kirchhoff(
    g: &StarGraph,
    gt: &GroupTable,
    t44: &EndpointTable,
    t47: &EndpointTable,
) -> Result<EndpointTable> {
    let s = t47.s;
    let target = gt.target_edge();
    let wn = gt.omega(gt.target);
    let mut t = EndpointTable::new(s);
    for k in 1..wn {
        for nu in 0..k {
            t.values.insert((k, target, nu), t44.get(k, target, nu)?);
        }
        for nu in k..wn {
            let mut u = ZERO;
            for j in 1..=g.p() {
                if j != target && g.order(j) > nu {
                    u -= form(g, j, nu, |mu| t47.get(k, j, mu))?;
                }
            }
            let v = invert_form(g, target, nu, u, |mu| t.get(k, target, mu))?;
            t.values.insert((k, target, nu), v);
        }
    }
    Ok(t)
}

/// `m_{p_N}` from the reconstructed endpoint data.
pub fn reconstruct_m(gt: &GroupTable, t40: &EndpointTable) -> Result<CMatrix> {
    let target = gt.target_edge();
    let wn = gt.omega(gt.target);
    let data = (1..wn)
        .map(|k| (0..wn).map(|nu| t40.get(k, target, nu)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    internal_from_weyl_data(&data, wn)
}

/// Everything computed at one `lambda`.
#[derive(Debug, Clone)]
pub struct ReductionPoint {
    pub lambda: C64,
    pub t41: EndpointTable,
    pub t44: EndpointTable,
    pub t47: EndpointTable,
    pub t40: EndpointTable,
    pub sigma: Vec<SigmaInfo>,
    pub m: CMatrix,
}

/// Steps 1 to 4 and the final assembly at one `lambda`.
pub fn reduce_at(
    g: &StarGraph,
    gt: &GroupTable,
    known: &KnownEdges,
    ms: &CMatrix,
    s: usize,
    lambda: C64,
) -> Result<ReductionPoint> {
    let t41 = step1_boundary_values(gt, known, ms, s)?;
    let t44 = step2_propagate_matching(g, gt, &t41)?;
    let (t47, sigma) = step3_solve_sigma(g, gt, known, &t41, &t44)?;
    let t40 = step4_kirchhoff(g, gt, &t44, &t47)?;
    let m = reconstruct_m(gt, &t40)?;
    Ok(ReductionPoint { lambda, t41, t44, t47, t40, sigma, m })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionPointReport {
    pub lambda: [f64; 2],
    pub flag: String,
    /// Row-major `m_{p_N}` as `[re, im]` pairs.
    pub m: Option<Vec<Vec<[f64; 2]>>>,
    /// Largest entrywise relative error against a direct computation.
    pub residual: Option<f64>,
    pub sigma: Vec<SigmaInfo>,
    pub boundary_values: Vec<TableEntry>,
    pub transferred: Vec<TableEntry>,
    pub expanded: Vec<TableEntry>,
    pub target_values: Vec<TableEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    pub s: usize,
    pub target_edge: usize,
    pub groups: GroupTable,
    pub points: Vec<ReductionPointReport>,
    pub flagged_fraction: f64,
    pub max_residual: Option<f64>,
}

impl ReductionReport {
    /// The reconstructed matrices as a Weyl sample of edge `p_N`.
    pub fn to_sample(&self) -> WeylSample {
        use crate::graph_forward::{PointFlag, WeylKind, WeylPoint};
        let order = self.groups.omega(self.groups.target);
        let points = self
            .points
            .iter()
            .map(|p| {
                let matrix =
                    p.m.as_ref().map(|m| CMatrix::from_fn(order, order, |r, c| C64::new(m[r][c][0], m[r][c][1])));
                WeylPoint {
                    lambda: C64::new(p.lambda[0], p.lambda[1]),
                    flag: if matrix.is_some() { PointFlag::Ok } else { PointFlag::Singular },
                    matrix,
                    residual: p.residual.unwrap_or(f64::NAN),
                    cond: p.sigma.iter().map(|x| x.cond).fold(1.0, f64::max),
                }
            })
            .collect();
        WeylSample { kind: WeylKind::Internal, index: self.target_edge, order, points }
    }

    /// Reconstructed `m_{p_N}` at `lambda`, if not flagged.
    pub fn matrix_at(&self, lambda: C64) -> Option<CMatrix> {
        self.to_sample().at(lambda).cloned()
    }
}

fn entry_rel_err(a: &CMatrix, b: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..a.nrows() {
        for c in r + 1..a.ncols() {
            worst = worst.max(rel_err(a[(r, c)], b[(r, c)]));
        }
    }
    worst
}

fn is_flag(e: &Error) -> bool {
    matches!(
        e,
        Error::SingularAtLambda { .. }
            | Error::IllConditioned { .. }
            | Error::SigmaSingular { .. }
            | Error::DenominatorNearZero
            | Error::MissingWeylData(_)
    )
}

/// The reduction for a fixed `s`: `M_s` samples are read at the sample's own
/// `lambda` values. With `truth`, each point is compared against `m_{p_N}`
/// computed directly on the true edge.
pub fn run_algorithm1(
    ctx: &ForwardContext,
    ms: &WeylSample,
    s: usize,
    truth: Option<&ForwardContext>,
) -> Result<ReductionReport> {
    let g = &ctx.graph;
    let gt = group_edges(g)?;
    if !gt.admissible_s().contains(&s) {
        return Err(Error::InvalidConfig(format!("s = {s} is outside the admissible range {:?}", gt.admissible_s())));
    }
    let target = gt.target_edge();
    let points = ms
        .points
        .par_iter()
        .map(|p| -> Result<ReductionPointReport> {
            let lambda = p.lambda;
            let mut rep = ReductionPointReport {
                lambda: [lambda.re, lambda.im],
                flag: p.flag.as_str().to_string(),
                m: None,
                residual: None,
                sigma: Vec::new(),
                boundary_values: Vec::new(),
                transferred: Vec::new(),
                expanded: Vec::new(),
                target_values: Vec::new(),
            };
            let Some(m_s) = p.matrix.as_ref() else {
                return Ok(rep);
            };
            let outcome =
                KnownEdges::compute(ctx, target, lambda).and_then(|known| reduce_at(g, &gt, &known, m_s, s, lambda));
            let red = match outcome {
                Ok(r) => r,
                Err(e) if is_flag(&e) => {
                    rep.flag = "singular".into();
                    return Ok(rep);
                }
                Err(e) => return Err(e),
            };
            if let Some(tc) = truth {
                let e = tc.graph.edge(target);
                let b = regular_basis(&tc.frobs[target - 1], &e.potential, lambda, e.length, &tc.opts)?;
                match crate::graph_forward::internal_matrix(&b) {
                    Ok(direct) => rep.residual = Some(entry_rel_err(&red.m, &direct)),
                    Err(e) if is_flag(&e) => rep.flag = "singular".into(),
                    Err(e) => return Err(e),
                }
            }
            rep.m = Some(
                (0..red.m.nrows())
                    .map(|r| (0..red.m.ncols()).map(|c| [red.m[(r, c)].re, red.m[(r, c)].im]).collect())
                    .collect(),
            );
            rep.sigma = red.sigma;
            rep.boundary_values = red.t41.entries();
            rep.transferred = red.t44.entries();
            rep.expanded = red.t47.entries();
            rep.target_values = red.t40.entries();
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    let flagged = points.iter().filter(|p| p.m.is_none() || p.flag != "ok").count();
    let max_residual = points
        .iter()
        .filter(|p| p.flag == "ok")
        .filter_map(|p| p.residual)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    Ok(ReductionReport {
        s,
        target_edge: target,
        groups: gt,
        flagged_fraction: flagged as f64 / points.len().max(1) as f64,
        max_residual,
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IndependenceReport {
    pub reports: Vec<ReductionReport>,
    /// Largest entrywise relative spread of `m_{p_N}` across the choices of `s`.
    pub max_spread: f64,
}

/// Runs the reduction for every admissible `s` and measures the spread of the results.
pub fn run_all_s(
    ctx: &ForwardContext,
    samples: &BTreeMap<usize, WeylSample>,
    truth: Option<&ForwardContext>,
) -> Result<IndependenceReport> {
    let gt = group_edges(&ctx.graph)?;
    let mut reports = Vec::new();
    for s in gt.admissible_s() {
        let ms = samples.get(&s).ok_or_else(|| Error::MissingWeylData(format!("M_{s}")))?;
        reports.push(run_algorithm1(ctx, ms, s, truth)?);
    }
    let mut spread: f64 = 0.0;
    let first = reports[0].to_sample();
    for r in &reports[1..] {
        let other = r.to_sample();
        for p in &first.points {
            if let (Some(a), Some(b)) = (p.matrix.as_ref(), other.at(p.lambda)) {
                spread = spread.max(entry_rel_err(b, a));
            }
        }
    }
    Ok(IndependenceReport { reports, max_spread: spread })
}

/// The `(k, j, nu)` keys that the structural zeros leave to the vertex
/// continuity conditions: `nu <= min(k-1, n_j-2)`.
pub fn continuity_keys(g: &StarGraph, gt: &GroupTable) -> BTreeSet<(usize, usize, usize)> {
    let mut out = BTreeSet::new();
    for k in 1..gt.omega(gt.target) {
        for j in 1..=g.p() {
            let n = g.order(j);
            for nu in 0..k.min(n - 1) {
                out.insert((k, j, nu));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, ONE};
    use crate::model::EdgeSpec;

    fn graph(orders: &[usize], w: usize) -> StarGraph {
        let edges = orders
            .iter()
            .map(|&n| {
                let nu = if n == 2 { vec![ZERO] } else { vec![c(-0.374, 0.0), c(0.43, 0.0)] };
                EdgeSpec::new(n, 1.0, nu)
            })
            .collect();
        StarGraph::new(edges, w).unwrap()
    }

    #[test]
    fn transfer_keys_are_the_continuity_set() {
        for (orders, w) in
            [(&[2, 2, 2][..], 3), (&[3, 2, 2][..], 3), (&[3, 3, 2][..], 3), (&[3, 3, 3][..], 3), (&[3, 3, 2, 2][..], 2)]
        {
            let g = graph(orders, w);
            let gt = group_edges(&g).unwrap();
            let keys: BTreeSet<_> = transfer_keys(&gt).into_iter().collect();
            assert_eq!(keys, continuity_keys(&g, &gt), "{orders:?}");
        }
    }

    #[test]
    fn homogeneous_orders_transfer_only_values() {
        let g = graph(&[2, 2, 2], 3);
        let gt = group_edges(&g).unwrap();
        assert!(transfer_keys(&gt).iter().all(|&(k, _, nu)| k == 1 && nu == 0));
    }

    #[test]
    fn kirchhoff_with_identity_forms() {
        // two known edges of three: the third value is minus the sum of the others
        let g = graph(&[2, 2, 2], 3);
        let gt = group_edges(&g).unwrap();
        let mut t44 = EndpointTable::new(1);
        t44.values.insert((1, 3, 0), c(0.5, 0.0));
        let mut t47 = EndpointTable::new(1);
        t47.values.insert((1, 1, 0), ONE);
        t47.values.insert((1, 1, 1), c(2.0, 1.0));
        t47.values.insert((1, 2, 0), ONE);
        t47.values.insert((1, 2, 1), c(-0.5, 3.0));
        let t40 = step4_kirchhoff(&g, &gt, &t44, &t47).unwrap();
        assert_eq!(t40.get(1, 3, 1).unwrap(), -(c(2.0, 1.0) + c(-0.5, 3.0)));
        assert_eq!(t40.get(1, 3, 0).unwrap(), c(0.5, 0.0));
    }

    #[test]
    fn identity_weyl_data_gives_basis_values() {
        let g = graph(&[2, 2, 2], 3);
        let gt = group_edges(&g).unwrap();
        let e = CMatrix::from_fn(2, 2, |r, c| C64::new((r * 2 + c) as f64 + 1.0, 0.0));
        let known = KnownEdges { ends: vec![Some(e.clone()), Some(e.clone()), None] };
        let t = step1_boundary_values(&gt, &known, &CMatrix::identity(2, 2), 1).unwrap();
        for nu in 0..2 {
            assert_eq!(t.get(1, 1, nu).unwrap(), e[(nu, 0)]);
        }
    }

    #[test]
    fn step1_covers_the_index_box() {
        let g = graph(&[3, 3, 2], 3);
        let gt = group_edges(&g).unwrap();
        let e = CMatrix::identity(3, 3);
        let known = KnownEdges { ends: vec![Some(e.clone()), Some(e), None] };
        let t = step1_boundary_values(&gt, &known, &CMatrix::identity(3, 3), 2).unwrap();
        // omega_N - 1 = 1, omega_1 - 1 = 2
        assert!(t.get(1, 2, 2).is_ok());
        assert_eq!(t.values.len(), 3);
    }
}
