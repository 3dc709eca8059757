mod common;

use common::*;
use proptest::prelude::*;
use starspec::birkhoff::*;
use starspec::linalg::{c, C64};
use starspec::model::EdgeSpec;
use starspec::singular_ode::build_series;

fn ray(edge: &EdgeSpec, k0: usize) -> HankelRay {
    let sd = build_sector(edge.order, k0).unwrap();
    let (lo, hi) = sd.interval();
    HankelRay::new(&edge.char_data().unwrap(), sd, 0.5 * (lo + hi)).unwrap()
}

#[test]
fn free_edge_identities_are_exact() {
    let r = verify_edge(&free2(1.0), 1, &VerifyOptions::default()).unwrap();
    assert!(r.stokes.beta_rotation <= 1e-10 && r.stokes.beta_product <= 1e-10 && r.stokes.e_determinant <= 1e-10);
    for s in &r.sectors {
        assert!(s.y_determinant <= 1e-10 && s.big_y_determinant.exact, "{s:?}");
        assert!(s.y_asymptotics.exact && s.u_deviation.exact, "{s:?}");
    }
    assert!(r.pass);
}

#[test]
fn bessel_edge_slopes_in_band() {
    let e = bessel2(1.0).with_potential(poly(&[&[0.0, 0.0, 0.8, -0.5]]));
    let r = verify_edge(&e, 1, &VerifyOptions { sectors: Some(vec![0, 3]), ..Default::default() }).unwrap();
    assert!(r.e_asymptotics.in_band, "{:?}", r.e_asymptotics);
    for s in &r.sectors {
        assert!(s.y_asymptotics.in_band && s.u_deviation.in_band, "{s:?}");
        assert!(s.b_deviation.pass, "{:?}", s.b_deviation);
    }
}

#[test]
fn order_three_stokes_relations() {
    let e = mild3(1.0);
    let cd = e.char_data().unwrap();
    let st = stokes_from_e(&ExponentialSolutions::new(&cd), &build_series(&cd, 1e-16), 0.5).unwrap();
    assert!(st.checks.beta_rotation < 1e-6 && st.checks.beta_product < 1e-6, "{:?}", st.checks);
}

#[test]
fn unperturbed_solution_is_recovered_on_every_sector() {
    let e = singular3(1.0);
    for k0 in 0..6 {
        let hr = ray(&e, k0);
        let sol = solve_Y(&hr, &e, 12.0, &YOptions::default()).unwrap();
        assert!(sol.sup_defect() < 1e-12, "k0 = {k0}");
        let b = connection_coefficients(&hr, &e, &sol).unwrap();
        assert!(connection_defect(&hr, &b.b, 12.0) < 1e-8, "k0 = {k0}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn j_bound_for_polynomial_potentials(a in -3.0f64..3.0, b in -3.0f64..3.0, len in 0.3f64..2.0, rho in 1.0f64..40.0) {
        let e = bessel2(len).with_potential(poly(&[&[0.0, 0.0, a, b][..]]));
        let j = estimate_j(&e, rho).unwrap();
        prop_assert!(j.bound_holds(), "{j:?}");
        let j2 = estimate_j(&e, 2.0 * rho).unwrap();
        prop_assert!(j2.j <= j.j * (1.0 + 1e-12));
    }

    #[test]
    fn determinant_of_y_is_rho_power_times_omega(a in -1.0f64..1.0, b in -1.0f64..1.0, k0 in 0usize..4, rho in 6.0f64..40.0) {
        let e = EdgeSpec::new(2, 1.0, vec![c(0.7, 0.2)]).with_potential(poly(&[&[a, b][..]]));
        let hr = ray(&e, k0);
        let opts = YOptions { enforce_threshold: false, ..Default::default() };
        let sol = solve_Y(&hr, &e, rho, &opts).unwrap();
        prop_assert!(sol.det_defect(&hr) < 1e-10);
        prop_assert!(sol.contraction.iter().all(|q| *q < 0.5), "{:?}", sol.contraction);
    }

    #[test]
    fn stokes_rotation_for_random_nu(r in 0.0f64..2.0, phi in -3.1f64..3.1) {
        let nu: C64 = C64::from_polar(r, phi);
        let e = EdgeSpec::new(2, 1.0, vec![nu]);
        if let Ok(cd) = e.char_data() {
            if let Ok(st) = stokes_from_e(&ExponentialSolutions::new(&cd), &build_series(&cd, 1e-16), 0.5) {
                prop_assert!(st.checks.beta_rotation < 1e-6 && st.checks.beta_product < 1e-6, "{:?}", st.checks);
            }
        }
    }
}
