use std::sync::Arc;

use proptest::prelude::*;
use starspec::linalg::{c, C64, ONE, ZERO};
use starspec::model::{PotentialSpec, SampleTable};
use starspec::singular_ode::*;

fn frob(nu: &[C64], n: usize) -> Arc<FrobeniusBasis> {
    Arc::new(build_series(&compute_char_roots(&build_char_poly(nu, n).unwrap()).unwrap(), 1e-16))
}

fn poly(coeffs: Vec<Vec<f64>>) -> PotentialSpec {
    PotentialSpec::Polynomial(coeffs.into_iter().map(|v| v.into_iter().map(|a| c(a, 0.0)).collect()).collect())
}

/// Closed forms for y'' - 2 y / x^2 = k^2 y with the basis normalization.
fn bessel_closed(x: f64, lambda: C64) -> [C64; 2] {
    let k = lambda.sqrt();
    let z = k * x;
    let c1 = z.cosh() / x - k * z.sinh();
    let c2 = (z.cosh() - z.sinh() / z) / (k * k);
    [c1, c2]
}

#[test]
fn zero_potential_reproduces_frobenius_basis() {
    let f = frob(&[c(0.3, 0.2), c(-0.7, 0.1)], 3);
    let s = series_basis(&f, &PotentialSpec::Zero, c(2.0, -1.0), 1.5).unwrap();
    for &x in &[0.1, 0.6, 1.5] {
        for j in 1..=3 {
            let a = s.eval_s(j, x).unwrap();
            let b = f.eval_c(j, x, c(2.0, -1.0)).unwrap();
            for nu in 0..3 {
                assert!((a[nu] - b[nu]).norm() <= 1e-12 * b[nu].norm().max(1.0));
            }
        }
    }
}

#[test]
fn free_case_closed_forms() {
    let f = frob(&[ZERO], 2);
    for &lambda in &[c(1.0, 0.0), c(-3.0, 2.0), c(0.0, 50.0)] {
        let s = series_basis(&f, &PotentialSpec::Zero, lambda, 2.0).unwrap();
        let rho = lambda.sqrt();
        for &x in &[0.05, 0.5, 1.7] {
            let s1 = s.eval_s(1, x).unwrap()[0];
            let s2 = s.eval_s(2, x).unwrap()[0];
            assert!((s1 - (rho * x).cosh()).norm() < 1e-10 * (rho * x).cosh().norm().max(1.0));
            assert!((s2 - (rho * x).sinh() / rho).norm() < 1e-10 * s2.norm().max(1.0));
        }
    }
}

#[test]
fn constant_potential_shift() {
    let f = frob(&[ZERO], 2);
    let q = 0.7;
    let s = series_basis(&f, &poly(vec![vec![q]]), c(2.0, 3.0), 1.0).unwrap();
    let k = (c(2.0, 3.0) - q).sqrt();
    for &x in &[0.2, 0.5, 1.0] {
        let v = s.eval_s(1, x).unwrap();
        assert!((v[0] - (k * x).cosh()).norm() < 1e-12);
        assert!((v[1] - k * (k * x).sinh()).norm() < 1e-12);
        let w = s.eval_s(2, x).unwrap();
        assert!((w[0] - (k * x).sinh() / k).norm() < 1e-12);
    }
}

#[test]
fn bessel_type_closed_forms() {
    let f = frob(&[c(-2.0, 0.0)], 2);
    for &lambda in &[c(4.0, 0.0), c(1.0, 7.0)] {
        let s = series_basis(&f, &PotentialSpec::Zero, lambda, 1.0).unwrap();
        for &x in &[0.1, 0.4, 1.0] {
            let exact = bessel_closed(x, lambda);
            for j in 0..2 {
                let v = s.eval_s(j + 1, x).unwrap()[0];
                assert!((v - exact[j]).norm() < 1e-9 * exact[j].norm().max(1.0), "{v} {}", exact[j]);
            }
        }
    }
}

#[test]
fn volterra_matches_series_for_polynomial_potential() {
    let f = frob(&[ZERO], 2);
    let pot = poly(vec![vec![1.0, 0.5]]);
    let lambda = c(3.0, 2.0);
    let a = series_basis(&f, &pot, lambda, 1.0).unwrap();
    let b = solve_volterra(&f, &pot, lambda, 1.0, &VolterraOptions::default()).unwrap();
    for &x in &[0.3, 0.77, 1.0] {
        for j in 1..=2 {
            let u = a.eval_s(j, x).unwrap();
            let v = b.eval_s(j, x).unwrap();
            for nu in 0..2 {
                assert!((u[nu] - v[nu]).norm() < 1e-7, "j={j} nu={nu} {} {}", u[nu], v[nu]);
            }
        }
    }
}

#[test]
fn volterra_matches_series_on_bessel_edge() {
    let f = frob(&[c(-2.0, 0.0)], 2);
    let pot = poly(vec![vec![0.0, 0.0, 1.5]]);
    let lambda = c(0.0, 5.0);
    let a = series_basis(&f, &pot, lambda, 1.0).unwrap();
    let b = solve_volterra(&f, &pot, lambda, 1.0, &VolterraOptions::default()).unwrap();
    for j in 1..=2 {
        let u = a.eval_s(j, 1.0).unwrap();
        let v = b.eval_s(j, 1.0).unwrap();
        for nu in 0..2 {
            assert!((u[nu] - v[nu]).norm() < 1e-6 * u[nu].norm().max(1.0), "j={j} {} {}", u[nu], v[nu]);
        }
    }
    assert!((b.wronskian(0.8).unwrap() - ONE).norm() < 1e-6);
}

#[test]
fn sampled_constant_potential_matches_shift() {
    let f = frob(&[ZERO], 2);
    let xs: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let qs = vec![c(0.4, 0.0); xs.len()];
    let pot = PotentialSpec::Table(vec![Some(SampleTable::new(xs, qs).unwrap())]);
    let lambda = c(1.0, 1.0);
    let s = regular_basis(&f, &pot, lambda, 1.0, &VolterraOptions::default()).unwrap();
    assert!(!s.is_series());
    let k = (lambda - 0.4).sqrt();
    let v = s.eval_s(1, 1.0).unwrap()[0];
    assert!((v - k.cosh()).norm() < 1e-8, "{v} {}", k.cosh());
}

#[test]
fn asymptotics_near_zero() {
    // (S_j - C_j) x^{-mu_j} = o(x^{mu_n - mu_1})
    let f = frob(&[c(-2.0, 0.0)], 2);
    let pot = poly(vec![vec![0.0, 0.0, 2.0]]);
    let lambda = c(1.0, 2.0);
    let s = series_basis(&f, &pot, lambda, 1.0).unwrap();
    let spread = f.cd.mu[1] - f.cd.mu[0];
    let mut ratios = Vec::new();
    for &x in &[1e-3, 1e-4] {
        for j in 1..=2 {
            let diff = s.eval_s(j, x).unwrap()[0] - f.eval_c(j, x, lambda).unwrap()[0];
            let scaled = diff / starspec::linalg::rpow(x, f.cd.mu[j - 1] + spread);
            ratios.push(scaled.norm());
        }
    }
    assert!(ratios[2] < ratios[0] && ratios[3] <= ratios[1] + 1e-300);
    assert!(ratios.iter().all(|r| *r < 1e-2));
}

#[test]
fn logarithmic_resonance_detected() {
    // n = 2, nu_0 = -2 with q = x violates the weighted condition
    let f = frob(&[c(-2.0, 0.0)], 2);
    let err = series_basis(&f, &poly(vec![vec![0.0, 1.0]]), ONE, 1.0).unwrap_err();
    assert!(matches!(err, starspec::Error::LogarithmicResonance { .. }));
}

#[test]
fn entire_in_lambda_mean_value() {
    let f = frob(&[c(-2.0, 0.0)], 2);
    let pot = poly(vec![vec![0.0, 0.0, 1.0, -0.5]]);
    let center = c(2.0, 1.0);
    let x = 0.8;
    let s0 = series_basis(&f, &pot, center, 1.0).unwrap().eval_s(1, x).unwrap()[0];
    let k = 64;
    let mut mean = ZERO;
    for i in 0..k {
        let l = center + C64::from_polar(0.5, 2.0 * std::f64::consts::PI * i as f64 / k as f64);
        mean += series_basis(&f, &pot, l, 1.0).unwrap().eval_s(1, x).unwrap()[0];
    }
    mean /= k as f64;
    assert!((mean - s0).norm() < 1e-6 * s0.norm());
}

#[test]
fn residual_via_numerical_differentiation() {
    let f = frob(&[c(0.5, 0.3), c(-1.0, 0.2)], 3);
    let cd = &f.cd;
    // lowest power keeping q x^{min(theta-m,0)} integrable
    let pot = poly(vec![vec![0.0, 0.0, 0.0, 0.3], vec![0.0, 0.0, 0.4]]);
    let lambda = c(-1.0, 2.0);
    let s = series_basis(&f, &pot, lambda, 1.0).unwrap();
    let h = 1e-5;
    for &x in &[0.3, 0.6, 0.9] {
        for j in 1..=3 {
            let v = s.eval_s(j, x).unwrap();
            let third = (s.eval_s(j, x + h).unwrap()[2] - s.eval_s(j, x - h).unwrap()[2]) / (2.0 * h);
            let mut lhs = third;
            for m in 0..2 {
                lhs += (cd.nu[m] / x.powi((3 - m) as i32) + pot.eval(m, x)) * v[m];
            }
            let scale = v.iter().map(|z| z.norm()).fold(1.0, f64::max);
            assert!((lhs - lambda * v[0]).norm() < 1e-5 * scale);
        }
    }
}

fn admissible(nu: Vec<C64>, n: usize) -> Option<Arc<FrobeniusBasis>> {
    let cd = compute_char_roots(&build_char_poly(&nu, n).ok()?).ok()?;
    Some(Arc::new(build_series(&cd, 1e-16)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn wronskians_are_unity(
        n in 2usize..=3,
        nure in proptest::collection::vec(-2.0f64..2.0, 2),
        nuim in proptest::collection::vec(-1.0f64..1.0, 2),
        lre in -10.0f64..10.0, lim in -10.0f64..10.0,
        x in 0.1f64..2.0,
    ) {
        let nu: Vec<C64> = (0..n - 1).map(|i| c(nure[i], nuim[i])).collect();
        if let Some(f) = admissible(nu, n) {
            let lambda = c(lre, lim) * (10.0 / c(lre, lim).norm().max(10.0));
            let wc = f.wronskian(x, lambda).unwrap();
            prop_assert!((wc - ONE).norm() <= 1e-8, "C wronskian {wc}");
            // potential with the lowest admissible powers
            let cd = &f.cd;
            let coeffs: Vec<Vec<C64>> = (0..n - 1).map(|m| {
                let need = (cd.mu[n - 1].re - cd.mu[0].re) - n as f64 + m as f64;
                let p = (need.floor() + 1.0).max(0.0) as usize;
                let mut v = vec![ZERO; p + 2];
                v[p] = c(0.3, 0.1);
                v[p + 1] = c(-0.2, 0.0);
                v
            }).collect();
            let s = series_basis(&f, &PotentialSpec::Polynomial(coeffs), lambda, 2.0);
            if let Ok(s) = s {
                let ws = s.wronskian(x).unwrap();
                prop_assert!((ws - ONE).norm() <= 1e-6, "S wronskian {ws}");
            }
        }
    }
}
