//! Measured checks of the sector machinery on one edge, mostly log-log slope
//! fits of asymptotic deviations over dyadic ladders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{loglog_slope, ONE};
use crate::model::EdgeSpec;
use crate::singular_ode::green_g;

use super::exponential::{ExponentialSolutions, StokesChecks};
use super::hankel::HankelRay;
use super::perturbed::{connection_coefficients, connection_defect, estimate_j, solve_Y, JEstimate, YOptions};
use super::sector::build_sector;

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// `|rho|` ladder for `U_k`, the connection coefficients and the determinant of `Y_k`.
    pub rho_ladder: Vec<f64>,
    /// `|x|` ladder for `e_k` and `|rho| x` ladder for `y_k`.
    pub x_ladder: Vec<f64>,
    /// Sectors to scan; all `2n` when `None`.
    pub sectors: Option<Vec<usize>>,
    pub j_rhos: Vec<f64>,
    /// Accepted distance of a fitted slope from `-1`.
    pub band: f64,
    pub y: YOptions,
    /// Random `(x, t, rho)` points for the Green identity and the determinant of `y_k`.
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            rho_ladder: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            x_ladder: vec![4.0, 8.0, 16.0, 32.0, 64.0],
            sectors: None,
            j_rhos: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            band: 0.3,
            y: YOptions { enforce_threshold: false, ..Default::default() },
            samples: 6,
            seed: 7,
        }
    }
}

/// Log-log fit of a deviation against a dyadic ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub ladder: Vec<f64>,
    pub deviations: Vec<f64>,
    pub slope: Option<f64>,
    /// Every deviation is below `floor`: the bound holds with nothing left to fit.
    pub exact: bool,
    pub floor: f64,
    /// Slope within `-1 +- band`.
    pub in_band: bool,
    /// Exact, or decaying at least like `1/|rho|` up to the band.
    pub pass: bool,
}

impl SlopeFit {
    pub fn new(ladder: &[f64], deviations: Vec<f64>, floor: f64, band: f64) -> Self {
        let exact = deviations.iter().all(|d| *d <= floor);
        let slope = if deviations.iter().all(|d| *d > 0.0 && d.is_finite()) {
            Some(loglog_slope(ladder, &deviations))
        } else {
            None
        };
        let in_band = slope.is_some_and(|s| (s + 1.0).abs() <= band);
        let pass = exact || slope.is_some_and(|s| s <= -1.0 + band);
        SlopeFit { ladder: ladder.to_vec(), deviations, slope, exact, floor, in_band, pass }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorReport {
    pub k0: usize,
    pub alpha: f64,
    pub switch_defect: f64,
    /// `y_k` asymptotic defect against `|rho| x`.
    pub y_asymptotics: SlopeFit,
    /// `max |rho| x * defect` over the ladder.
    pub m0: f64,
    /// Worst relative defect of `det[y_k^{(nu-1)}] = rho^{n(n-1)/2} Omega` at the samples.
    pub y_determinant: f64,
    /// Worst relative error of `g = rho^{1-n} sum_j y_j y*_j`.
    pub bilinear: f64,
    /// `sup |U_k - U0_k|` against `|rho|`.
    pub u_deviation: SlopeFit,
    /// `max |b_kj - b0_kj rho^{mu_j}|` against `|rho|`.
    pub b_deviation: SlopeFit,
    /// `det[Y_k^{(nu-1)}] / (rho^{n(n-1)/2} Omega) - 1` against `|rho|`.
    pub big_y_determinant: SlopeFit,
    pub representation_residual: f64,
    pub m1: f64,
    pub q: f64,
    pub threshold: f64,
    pub max_contraction: f64,
    pub max_sweeps: usize,
}

impl SectorReport {
    pub fn pass(&self) -> bool {
        self.y_asymptotics.pass
            && self.u_deviation.pass
            && self.b_deviation.pass
            && self.big_y_determinant.pass
            && self.y_determinant <= 1e-8
            && self.bilinear <= 1e-6
            && self.representation_residual <= 1e-5
            && self.max_contraction < 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeAsymptotics {
    pub edge: usize,
    pub order: usize,
    pub mu: Vec<[f64; 2]>,
    pub theta: f64,
    /// `e_k` asymptotic defect against `|x|`, worst over `k` on the default rays.
    pub e_asymptotics: SlopeFit,
    pub stokes: StokesChecks,
    pub j_table: Vec<JEstimate>,
    pub j_bound: bool,
    pub j_monotone: bool,
    pub sectors: Vec<SectorReport>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    pub edges: Vec<EdgeAsymptotics>,
    pub pass: bool,
}

/// Deviation of `e_k^{(nu)} / (eps_k^nu e^{eps_k x})` from 1 at the radii, worst over `k`.
pub fn e_deviation(es: &ExponentialSolutions, radii: &[f64]) -> Result<Vec<f64>> {
    let mut worst = vec![0.0f64; radii.len()];
    for k in 1..=es.n() {
        let ray = es.solve_e(k, es.ray_angle(k), radii)?;
        for (w, z) in worst.iter_mut().zip(&ray.normalized) {
            for v in z {
                *w = w.max((v - ONE).norm());
            }
        }
    }
    Ok(worst)
}

fn sector_report(edge: &EdgeSpec, k0: usize, opts: &VerifyOptions) -> Result<SectorReport> {
    let cd = edge.char_data()?;
    let n = cd.n;
    let sd = build_sector(n, k0)?;
    let (lo, hi) = sd.interval();
    let alpha = 0.5 * (lo + hi);
    let hr = HankelRay::new(&cd, sd, alpha)?;

    let y_dev: Vec<f64> = opts.x_ladder.iter().map(|w| hr.asymptotic_defect(*w)).collect::<Result<_>>()?;
    let m0 = opts.x_ladder.iter().zip(&y_dev).map(|(w, d)| w * d).fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(k0 as u64));
    let (mut y_determinant, mut bilinear) = (0.0f64, 0.0f64);
    for _ in 0..opts.samples {
        let r = rng.random_range(1.0..8.0);
        let x = rng.random_range(0.05..1.2);
        let t = rng.random_range(0.02..x);
        y_determinant = y_determinant.max(hr.det_defect(x, r)?);
        let want = green_g(&hr.frob, x, t, hr.rho(r).powi(n as i32), 0)?;
        let got = hr.green(x, t, r)?;
        bilinear = bilinear.max((got - want).norm() / want.norm().max(1e-300));
    }

    let mut u_dev = Vec::new();
    let mut b_dev = Vec::new();
    let mut d_dev = Vec::new();
    let (mut rep, mut m1, mut q, mut threshold, mut contraction, mut sweeps) = (0.0f64, 0.0f64, 0.0, 0.0, 0.0f64, 0);
    for &r in &opts.rho_ladder {
        let sol = solve_Y(&hr, edge, r, &opts.y)?;
        let con = connection_coefficients(&hr, edge, &sol)?;
        u_dev.push(sol.sup_defect());
        b_dev.push(connection_defect(&hr, &con.b, r));
        d_dev.push(sol.det_defect(&hr));
        rep = rep.max(con.residual);
        m1 = m1.max(sol.m1);
        q = sol.q;
        threshold = sol.threshold.max(threshold);
        contraction = sol.contraction.iter().cloned().fold(contraction, f64::max);
        sweeps = sol.sweeps.iter().cloned().fold(sweeps, usize::max);
    }
    let band = opts.band;
    Ok(SectorReport {
        k0,
        alpha,
        switch_defect: hr.switch_defect,
        y_asymptotics: SlopeFit::new(&opts.x_ladder, y_dev, 1e-12, band),
        m0,
        y_determinant,
        bilinear,
        u_deviation: SlopeFit::new(&opts.rho_ladder, u_dev, 1e-12, band),
        b_deviation: SlopeFit::new(&opts.rho_ladder, b_dev, 1e-8, band),
        big_y_determinant: SlopeFit::new(&opts.rho_ladder, d_dev, 1e-12, band),
        representation_residual: rep,
        m1,
        q,
        threshold,
        max_contraction: contraction,
        max_sweeps: sweeps,
    })
}

/// All checks for one edge; `index` only labels the report.
pub fn verify_edge(edge: &EdgeSpec, index: usize, opts: &VerifyOptions) -> Result<EdgeAsymptotics> {
    let cd = edge.char_data()?;
    let n = cd.n;
    let es = ExponentialSolutions::new(&cd);
    let e_fit = SlopeFit::new(&opts.x_ladder, e_deviation(&es, &opts.x_ladder)?, 1e-12, opts.band);
    let sectors: Vec<usize> = opts.sectors.clone().unwrap_or_else(|| (0..2 * n).collect());
    let reports: Vec<SectorReport> =
        sectors.par_iter().map(|k0| sector_report(edge, *k0, opts)).collect::<Result<_>>()?;
    let stokes = HankelRay::new(&cd, build_sector(n, 0)?, 0.5 * std::f64::consts::PI / n as f64)?.stokes.checks;
    let j_table: Vec<JEstimate> = opts.j_rhos.iter().map(|r| estimate_j(edge, *r)).collect::<Result<_>>()?;
    let j_bound = j_table.iter().all(|j| j.bound_holds());
    let j_monotone = j_table.windows(2).all(|w| w[1].j <= w[0].j * (1.0 + 1e-12) + 1e-300);
    let pass = e_fit.pass
        && stokes.beta_rotation <= 1e-6
        && stokes.beta_product <= 1e-6
        && stokes.e_determinant <= 1e-6
        && j_bound
        && j_monotone
        && reports.iter().all(|s| s.pass());
    Ok(EdgeAsymptotics {
        edge: index,
        order: n,
        mu: cd.mu.iter().map(|m| [m.re, m.im]).collect(),
        theta: cd.theta,
        e_asymptotics: e_fit,
        stokes,
        j_table,
        j_bound,
        j_monotone,
        sectors: reports,
        pass,
    })
}

/// Edges are numbered from 1 in the report.
pub fn verify_asymptotics(edges: &[EdgeSpec], opts: &VerifyOptions) -> Result<AsymptoticsReport> {
    let edges: Vec<EdgeAsymptotics> =
        edges.iter().enumerate().map(|(i, e)| verify_edge(e, i + 1, opts)).collect::<Result<_>>()?;
    let pass = edges.iter().all(|e| e.pass);
    Ok(AsymptoticsReport { edges, pass })
}
