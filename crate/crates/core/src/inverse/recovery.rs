//! Least-squares recovery of an edge potential from Weyl-type data within a
//! finite-dimensional polynomial family.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_forward::{boundary_matrix, internal_matrix, ForwardContext, WeylSample};
use crate::linalg::{C64, ZERO};
use crate::model::{validate_graph, PotentialSpec, StarGraph};
use crate::singular_ode::regular_basis;

pub const MAX_FAMILY_DIM: usize = 5;

/// `q_{m}(x) = sum_i theta_i x^{p_i}` over the terms `(m_i, p_i)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PotentialFamily {
    pub edge: usize,
    /// `(component, power)` per parameter.
    pub terms: Vec<(usize, usize)>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PotentialFamily {
    /// Checks the box and the integrability of every monomial on `edge`.
    pub fn new(
        g: &StarGraph,
        edge: usize,
        terms: Vec<(usize, usize)>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let dim = terms.len();
        if dim == 0 || dim > MAX_FAMILY_DIM || lower.len() != dim || upper.len() != dim {
            return Err(Error::InvalidConfig(format!("family needs 1..={MAX_FAMILY_DIM} terms with matching bounds")));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::EmptyRange);
        }
        let order = g.order(edge);
        let fam = PotentialFamily { edge, terms, lower, upper };
        for (i, &(m, _)) in fam.terms.iter().enumerate() {
            if m + 1 >= order {
                return Err(Error::InvalidConfig(format!("term {i}: component {m} does not exist on edge {edge}")));
            }
            let mut theta = vec![0.0; dim];
            theta[i] = 1.0;
            let mut trial = g.clone();
            trial.edges[edge - 1].potential = fam.potential(order, &theta);
            if !validate_graph(&trial)?.edges[edge - 1].admissible {
                return Err(Error::PotentialNotIntegrable { edge, component: m });
            }
        }
        Ok(fam)
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn potential(&self, order: usize, theta: &[f64]) -> PotentialSpec {
        let mut comps: Vec<Vec<C64>> = vec![Vec::new(); order - 1];
        for (&(m, p), t) in self.terms.iter().zip(theta) {
            if comps[m].len() <= p {
                comps[m].resize(p + 1, ZERO);
            }
            comps[m][p] += *t;
        }
        PotentialSpec::Polynomial(comps)
    }

    fn clamp(&self, theta: &mut [f64]) {
        for (i, t) in theta.iter_mut().enumerate() {
            *t = t.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Which Weyl-type matrix the data represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum RecoveryTarget {
    /// `M_s` of the whole graph, other edges known.
    Boundary { s: usize },
    /// `m_j` of the family's edge alone.
    Internal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    pub max_iter: usize,
    /// Required root-mean-square residual.
    pub tol: f64,
    /// Additional random starts in the parameter box.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions { max_iter: 60, tol: 1e-8, restarts: 2, seed: 7 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitRun {
    pub start: Vec<f64>,
    pub params: Vec<f64>,
    pub rms: f64,
    /// Root-mean-square residual after each accepted step, starting with the initial one.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryResult {
    pub params: Vec<f64>,
    pub rms: f64,
    pub trace: Vec<f64>,
    pub runs: Vec<FitRun>,
    /// Set when two converged starts end at distant parameters.
    pub ambiguous: bool,
}

struct Problem<'a> {
    ctx: ForwardContext,
    family: &'a PotentialFamily,
    target: RecoveryTarget,
    points: Vec<(C64, crate::linalg::CMatrix)>,
}

impl Problem<'_> {
    fn residual(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let j = self.family.edge;
        let mut ctx = self.ctx.clone();
        let order = ctx.graph.order(j);
        ctx.graph.edges[j - 1].potential = self.family.potential(order, theta);
        let parts = self
            .points
            .par_iter()
            .map(|(lambda, want)| {
                let got = match self.target {
                    RecoveryTarget::Boundary { s } => boundary_matrix(&ctx.graph, &ctx.bases(*lambda)?, s)?.0,
                    RecoveryTarget::Internal => {
                        let e = ctx.graph.edge(j);
                        internal_matrix(&regular_basis(&ctx.frobs[j - 1], &e.potential, *lambda, e.length, &ctx.opts)?)?
                    }
                };
                let mut out = Vec::new();
                for r in 0..want.nrows() {
                    for col in r + 1..want.ncols() {
                        let d = (got[(r, col)] - want[(r, col)]) / want[(r, col)].norm().max(1.0);
                        out.push(d.re);
                        out.push(d.im);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(parts.concat()))
    }

    fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let cols = (0..theta.len())
            .map(|i| {
                let h = 1e-6 * theta[i].abs().max(1.0);
                let mut a = theta.to_vec();
                let mut b = theta.to_vec();
                a[i] += h;
                b[i] -= h;
                Ok((self.residual(&a)? - self.residual(&b)?) / (2.0 * h))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_columns(&cols))
    }

    fn rms(r: &DVector<f64>) -> f64 {
        (r.norm_squared() / r.len().max(1) as f64).sqrt()
    }

    fn levenberg_marquardt(&self, start: &[f64], opts: &RecoveryOptions) -> Result<FitRun> {
        let mut theta = start.to_vec();
        self.family.clamp(&mut theta);
        let mut r = self.residual(&theta)?;
        let mut trace = vec![Self::rms(&r)];
        let mut damping = 1e-3;
        let mut iterations = 0;
        while iterations < opts.max_iter && *trace.last().unwrap() > opts.tol * 1e-3 {
            iterations += 1;
            let jac = self.jacobian(&theta)?;
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * &r;
            let mut accepted = false;
            for _ in 0..12 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += damping * jtj[(i, i)].max(1e-12);
                }
                let Some(step) = a.lu().solve(&(-&grad)) else {
                    damping *= 10.0;
                    continue;
                };
                let mut cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
                self.family.clamp(&mut cand);
                match self.residual(&cand) {
                    Ok(rc) if rc.norm_squared() < r.norm_squared() => {
                        let moved: f64 = cand.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                        theta = cand;
                        r = rc;
                        trace.push(Self::rms(&r));
                        damping = (damping / 3.0).max(1e-12);
                        accepted = true;
                        if moved < 1e-14 {
                            iterations = opts.max_iter;
                        }
                        break;
                    }
                    _ => damping *= 4.0,
                }
            }
            if !accepted {
                break;
            }
        }
        Ok(FitRun { start: start.to_vec(), rms: *trace.last().unwrap(), params: theta, trace, iterations })
    }
}

/// Fits the family parameters to the sampled Weyl-type matrix.
///
/// `g` supplies the known edges; the potential of `family.edge` is replaced
/// by family members. Flagged samples are skipped.
pub fn recover_edge_potential(
    g: &StarGraph,
    family: &PotentialFamily,
    target: RecoveryTarget,
    data: &WeylSample,
    initial: &[f64],
    opts: &RecoveryOptions,
) -> Result<RecoveryResult> {
    if initial.len() != family.dim() {
        return Err(Error::InvalidConfig("initial guess has the wrong dimension".into()));
    }
    let points: Vec<_> = data.points.iter().filter_map(|p| p.matrix.clone().map(|m| (p.lambda, m))).collect();
    if points.is_empty() {
        return Err(Error::EmptyRange);
    }
    let problem = Problem { ctx: ForwardContext::new(g)?, family, target, points };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![initial.to_vec()];
    for _ in 0..opts.restarts {
        starts.push((0..family.dim()).map(|i| rng.random_range(family.lower[i]..family.upper[i])).collect());
    }
    let mut runs = Vec::new();
    for st in &starts {
        match problem.levenberg_marquardt(st, opts) {
            Ok(run) => runs.push(run),
            Err(e) if runs.is_empty() && st == starts.last().unwrap() => return Err(e),
            Err(_) => {}
        }
    }
    let best = runs
        .iter()
        .min_by(|a, b| a.rms.partial_cmp(&b.rms).unwrap())
        .ok_or(Error::NonConvergence { residual: f64::INFINITY })?
        .clone();
    if !(best.rms <= opts.tol) {
        return Err(Error::NonConvergence { residual: best.rms });
    }
    let scale = best.params.iter().map(|v| v.abs()).fold(1.0, f64::max);
    let ambiguous = runs
        .iter()
        .any(|r| r.rms <= opts.tol && r.params.iter().zip(&best.params).any(|(a, b)| (a - b).abs() > 1e-3 * scale));
    Ok(RecoveryResult { params: best.params.clone(), rms: best.rms, trace: best.trace.clone(), runs, ambiguous })
}
