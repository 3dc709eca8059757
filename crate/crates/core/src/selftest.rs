//! Deterministic checks behind `starspec selftest`, acceptance criteria 1 to 5.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::birkhoff::{
    estimate_j, stokes_from_e, verify_edge, EdgeAsymptotics, ExponentialSolutions, SlopeFit, VerifyOptions,
};
use crate::error::{Error, Result};
use crate::linalg::{c, C64, ONE, ZERO};
use crate::model::{EdgeSpec, PotentialSpec, SampleTable};
use crate::singular_ode::{build_series, series_basis, solve_volterra, CharData, FrobeniusBasis, VolterraOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    /// Worst measured quantity, compared against `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {} {}: {} (worst {:.3e}, tolerance {:.1e}, samples {}) {}",
            self.id,
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.worst,
            self.tolerance,
            self.samples,
            self.detail
        )
    }
}

fn random_nu(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n - 1).map(|_| C64::from_polar(rng.random_range(0.0..2.0), rng.random_range(-PI..PI))).collect()
}

/// Random admissible edge data of order `n` with `|nu_m| <= 2`.
fn random_char(rng: &mut ChaCha8Rng, n: usize) -> (Vec<C64>, CharData) {
    loop {
        let nu = random_nu(rng, n);
        if let Ok(cd) = EdgeSpec::new(n, 1.0, nu.clone()).char_data() {
            return (nu, cd);
        }
    }
}

/// Polynomial potential whose lowest powers just meet the weighted integrability condition.
fn random_potential(rng: &mut ChaCha8Rng, cd: &CharData) -> PotentialSpec {
    let n = cd.n;
    let coeffs = (0..n - 1)
        .map(|m| {
            let need = (cd.mu[n - 1].re - cd.mu[0].re) - n as f64 + m as f64;
            let p = (need.floor() + 1.0).max(0.0) as usize;
            let mut v = vec![ZERO; p + 2];
            v[p] = c(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5));
            v[p + 1] = c(rng.random_range(-1.0..1.0), 0.0);
            v
        })
        .collect();
    PotentialSpec::Polynomial(coeffs)
}

fn admissible(edge: &EdgeSpec, cd: &CharData) -> bool {
    (0..edge.order - 1).all(|m| {
        let w = (cd.theta - m as f64).min(0.0);
        edge.potential.integrable_with_weight(m, 0, w, edge.length)
            && edge.potential.integrable_with_weight(m, m, cd.theta, edge.length)
    })
}

/// `q_m(x) = x^a` sampled on a geometric table over `[1e-8, 1]`.
pub fn power_table(order: usize, m: usize, a: f64) -> Result<PotentialSpec> {
    let x: Vec<f64> = (0..=160).map(|i| 1e-8 * 10f64.powf(i as f64 / 20.0)).collect();
    let q = x.iter().map(|t| c(t.powf(a), 0.0)).collect();
    let mut comps = vec![None; order - 1];
    comps[m] = Some(SampleTable::new(x, q)?);
    Ok(PotentialSpec::Table(comps))
}

/// Criterion 1: Wronskians of `C_j` and `S_j` over random admissible samples.
pub fn criterion1(seed: u64) -> Result<CriterionResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_c, mut worst_s, mut done, mut skipped) = (0.0f64, 0.0f64, 0, 0);
    while done < 100 {
        let n = 2 + done % 2;
        let (nu, cd) = random_char(&mut rng, n);
        let frob = Arc::new(build_series(&cd, 1e-16));
        let lambda = C64::from_polar(rng.random_range(0.0..10.0), rng.random_range(-PI..PI));
        let x = rng.random_range(0.1..2.0);
        let edge = EdgeSpec::new(n, 2.0, nu).with_potential(random_potential(&mut rng, &cd));
        if !admissible(&edge, &cd) {
            skipped += 1;
            continue;
        }
        let s = match series_basis(&frob, &edge.potential, lambda, edge.length) {
            Ok(s) => s,
            Err(Error::LogarithmicResonance { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        worst_c = worst_c.max((frob.wronskian(x, lambda)? - ONE).norm());
        worst_s = worst_s.max((s.wronskian(x)? - ONE).norm());
        done += 1;
    }
    Ok(CriterionResult {
        id: 1,
        name: "wronskian identities".into(),
        pass: worst_c <= 1e-8 && worst_s <= 1e-6,
        worst: worst_s.max(worst_c),
        tolerance: 1e-6,
        samples: done,
        detail: format!(
            "C {worst_c:.2e} <= 1e-8, S {worst_s:.2e} <= 1e-6, {skipped} resonant or inadmissible draws skipped"
        ),
    })
}

fn frob_of(nu: &[C64], n: usize) -> Result<Arc<FrobeniusBasis>> {
    Ok(Arc::new(build_series(&EdgeSpec::new(n, 1.0, nu.to_vec()).char_data()?, 1e-16)))
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Criterion 2: closed forms of the regular solutions.
pub fn criterion2() -> Result<CriterionResult> {
    let free = frob_of(&[ZERO], 2)?;
    let mut worst_a: f64 = 0.0;
    for lambda in [c(1.0, 0.0), c(-3.0, 2.0), c(0.0, 50.0)] {
        let s = series_basis(&free, &PotentialSpec::Zero, lambda, 2.0)?;
        let rho = lambda.sqrt();
        for x in [0.05, 0.5, 1.7] {
            worst_a = worst_a.max(rel(s.eval_s(1, x)?[0], (rho * x).cosh()));
            worst_a = worst_a.max(rel(s.eval_s(2, x)?[0], (rho * x).sinh() / rho));
        }
    }
    let bessel = frob_of(&[c(-2.0, 0.0)], 2)?;
    let mut worst_b: f64 = 0.0;
    for lambda in [c(4.0, 0.0), c(1.0, 7.0), c(-9.0, 0.0)] {
        let s = series_basis(&bessel, &PotentialSpec::Zero, lambda, 1.0)?;
        let k = lambda.sqrt();
        for x in [0.1, 0.4, 1.0] {
            let z = k * x;
            worst_b = worst_b.max(rel(s.eval_s(1, x)?[0], z.cosh() / x - k * z.sinh()));
            worst_b = worst_b.max(rel(s.eval_s(2, x)?[0], (z.cosh() - z.sinh() / z) / (k * k)));
        }
    }
    let q = 0.7;
    let lambda = c(2.0, 3.0);
    let k = (lambda - q).sqrt();
    let series = series_basis(&free, &PotentialSpec::Polynomial(vec![vec![c(q, 0.0)]]), lambda, 1.0)?;
    let xs: Vec<f64> = (0..=20).map(|i| 0.05 * i as f64).collect();
    let table = PotentialSpec::Table(vec![Some(SampleTable::new(xs, vec![c(q, 0.0); 21])?)]);
    let volterra = solve_volterra(&free, &table, lambda, 1.0, &VolterraOptions::default())?;
    let mut worst_c: f64 = 0.0;
    for x in [0.2, 0.5, 1.0] {
        for s in [&series, &volterra] {
            let v = s.eval_s(1, x)?;
            let w = s.eval_s(2, x)?;
            worst_c = worst_c.max(rel(v[0], (k * x).cosh()));
            worst_c = worst_c.max(rel(v[1], k * (k * x).sinh()));
            worst_c = worst_c.max(rel(w[0], (k * x).sinh() / k));
        }
    }
    Ok(CriterionResult {
        id: 2,
        name: "closed-form oracles".into(),
        pass: worst_a <= 1e-10 && worst_b <= 1e-8 && worst_c <= 1e-8,
        worst: worst_b.max(worst_c),
        tolerance: 1e-8,
        samples: 3,
        detail: format!("free {worst_a:.2e} <= 1e-10, Bessel-type {worst_b:.2e} <= 1e-8, shift {worst_c:.2e} <= 1e-8"),
    })
}

/// Criterion 3: rotation and product relations of `beta0` for random `nu`, and the free multipliers.
pub fn criterion3(seed: u64) -> Result<CriterionResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5353);
    let (mut worst, mut done, mut skipped) = (0.0f64, 0, 0);
    while done < 20 {
        let n = 2 + done % 2;
        let (_, cd) = random_char(&mut rng, n);
        let frob = build_series(&cd, 1e-16);
        match stokes_from_e(&ExponentialSolutions::new(&cd), &frob, 0.5) {
            Ok(st) => {
                worst = worst.max(st.checks.beta_rotation).max(st.checks.beta_product);
                done += 1;
            }
            Err(Error::IllConditionedBasis { .. }) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    let cd = EdgeSpec::new(2, 1.0, vec![ZERO]).char_data()?;
    let st = stokes_from_e(&ExponentialSolutions::new(&cd), &build_series(&cd, 1e-16), 0.5)?;
    let want = [[1.0, 1.0], [1.0, -1.0]];
    let mut free: f64 = 0.0;
    for (k, row) in want.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            free = free.max((st.beta[(k, j)] - c(*v, 0.0)).norm());
        }
    }
    Ok(CriterionResult {
        id: 3,
        name: "Stokes relations".into(),
        pass: worst <= 1e-6 && free <= 1e-10,
        worst,
        tolerance: 1e-6,
        samples: done,
        detail: format!("rotation/product {worst:.2e} <= 1e-6, free beta {free:.2e} <= 1e-10, {skipped} ill-conditioned draws skipped"),
    })
}

/// Edges of criterion 4: a Bessel-type edge with a polynomial potential, and
/// a generic order-2 edge whose potential `x^{-0.8}` makes the connection coefficient bound sharp.
pub fn criterion4_edges() -> Result<Vec<EdgeSpec>> {
    Ok(vec![
        EdgeSpec::new(2, 1.0, vec![c(-2.0, 0.0)]).with_potential(PotentialSpec::Polynomial(vec![vec![
            ZERO,
            ZERO,
            c(0.8, 0.0),
            c(-0.5, 0.0),
        ]])),
        EdgeSpec::new(2, 1.0, vec![c(0.7, 0.2)]).with_potential(power_table(2, 0, -0.8)?),
    ])
}

fn band_gap(f: &SlopeFit) -> f64 {
    f.slope.map_or(f64::INFINITY, |s| (s + 1.0).abs())
}

fn slopes(fits: &[&SlopeFit]) -> String {
    let v: Vec<String> = fits.iter().map(|f| f.slope.map_or("exact".into(), |s| format!("{s:.2}"))).collect();
    v.join("/")
}

/// Criterion 4: slope fits of the `e_k`, `y_k`, `U_k` and connection coefficient
/// deviations and of the determinant of `Y_k`.
pub fn criterion4() -> Result<(CriterionResult, Vec<EdgeAsymptotics>)> {
    let edges = criterion4_edges()?;
    let opts = VerifyOptions::default();
    let reports: Vec<EdgeAsymptotics> =
        edges.iter().enumerate().map(|(i, e)| verify_edge(e, i + 1, &opts)).collect::<Result<_>>()?;
    let (bessel, generic) = (&reports[0], &reports[1]);
    let e6: Vec<&SlopeFit> = reports.iter().map(|r| &r.e_asymptotics).collect();
    let y11: Vec<&SlopeFit> = reports.iter().flat_map(|r| r.sectors.iter().map(|s| &s.y_asymptotics)).collect();
    let u19: Vec<&SlopeFit> = reports.iter().flat_map(|r| r.sectors.iter().map(|s| &s.u_deviation)).collect();
    let b21: Vec<&SlopeFit> = generic.sectors.iter().map(|s| &s.b_deviation).collect();
    let det: Vec<&SlopeFit> = reports.iter().flat_map(|r| r.sectors.iter().map(|s| &s.big_y_determinant)).collect();
    let banded: Vec<&SlopeFit> = e6.iter().chain(&y11).chain(&u19).chain(&b21).cloned().collect();
    let worst = banded.iter().map(|f| band_gap(f)).fold(0.0, f64::max);
    let det_ok = det.iter().all(|f| f.exact || f.in_band);
    let pass = banded.iter().all(|f| f.in_band) && det_ok;
    let bessel_b21: Vec<&SlopeFit> = bessel.sectors.iter().map(|s| &s.b_deviation).collect();
    let det_max = det.iter().flat_map(|f| f.deviations.iter()).cloned().fold(0.0, f64::max);
    let detail = format!(
        "e_k {} y_k {} U_k {} b_kj {} [Bessel edge, smooth q: {}] det max {:.1e} ({})",
        slopes(&e6),
        slopes(&y11),
        slopes(&u19),
        slopes(&b21),
        slopes(&bessel_b21),
        det_max,
        if det.iter().all(|f| f.exact) { "identity to roundoff" } else { "fitted" }
    );
    let result = CriterionResult {
        id: 4,
        name: "asymptotic slope fits".into(),
        pass,
        worst,
        tolerance: opts.band,
        samples: banded.len() + det.len(),
        detail,
    };
    Ok((result, reports))
}

/// Criterion 5: `J(rho) |rho| <= Q` for random potentials, `J = 0` for `q = 0`.
pub fn criterion5(seed: u64) -> Result<CriterionResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x4a4a);
    let rhos = [1.0, 2.0, 4.0, 8.0, 16.0];
    let (mut worst, mut done, mut monotone) = (0.0f64, 0, true);
    while done < 10 {
        let n = 2 + done % 2;
        let (nu, cd) = random_char(&mut rng, n);
        let edge = EdgeSpec::new(n, rng.random_range(0.5..2.0), nu).with_potential(random_potential(&mut rng, &cd));
        if !admissible(&edge, &cd) {
            continue;
        }
        let mut prev = f64::INFINITY;
        for r in rhos {
            let j = estimate_j(&edge, r)?;
            worst = worst.max(j.j * r / j.q);
            monotone &= j.j <= prev * (1.0 + 1e-12);
            prev = j.j;
        }
        done += 1;
    }
    let zero = EdgeSpec::new(2, 1.0, vec![c(0.7, 0.2)]);
    let zero_ok = rhos.iter().all(|r| estimate_j(&zero, *r).is_ok_and(|j| j.j == 0.0 && j.q == 0.0));
    Ok(CriterionResult {
        id: 5,
        name: "J(rho) bound".into(),
        pass: worst <= 1.0 + 1e-10 && zero_ok && monotone,
        worst,
        tolerance: 1.0,
        samples: done,
        detail: format!("max J|rho|/Q {worst:.3}, J monotone {monotone}, zero potential J = 0: {zero_ok}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub asymptotics: Vec<EdgeAsymptotics>,
    pub pass: bool,
}

/// Criteria 1 to 5.
pub fn run_selftest(seed: u64) -> Result<SelftestReport> {
    let (c4, asymptotics) = criterion4()?;
    let criteria = vec![criterion1(seed)?, criterion2()?, criterion3(seed)?, c4, criterion5(seed)?];
    let pass = criteria.iter().all(|c| c.pass);
    Ok(SelftestReport { seed, criteria, asymptotics, pass })
}
