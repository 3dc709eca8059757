#![allow(dead_code)]

use starspec::linalg::{c, C64, ZERO};
use starspec::model::{EdgeSpec, PotentialSpec, StarGraph};

pub fn poly(coeffs: &[&[f64]]) -> PotentialSpec {
    PotentialSpec::Polynomial(coeffs.iter().map(|v| v.iter().map(|a| c(*a, 0.0)).collect()).collect())
}

/// Order 2 without singular term.
pub fn free2(length: f64) -> EdgeSpec {
    EdgeSpec::new(2, length, vec![ZERO])
}

/// Order 2 with `nu_0 = -2`, exponents `(-1, 2)`.
pub fn bessel2(length: f64) -> EdgeSpec {
    EdgeSpec::new(2, length, vec![c(-2.0, 0.0)])
}

/// Order 3 with exponents `(-0.5, 0.8, 2.7)`.
pub fn singular3(length: f64) -> EdgeSpec {
    EdgeSpec::new(3, length, vec![c(1.08, 0.0), c(-1.59, 0.0)])
}

/// Order 3 with exponents `(0.2, 1.1, 1.7)`.
pub fn mild3(length: f64) -> EdgeSpec {
    EdgeSpec::new(3, length, vec![c(-0.374, 0.0), c(0.43, 0.0)])
}

pub fn graph(edges: Vec<EdgeSpec>, w: usize) -> StarGraph {
    StarGraph::new(edges, w).unwrap()
}

/// Orders (3, 2, 2), singular edges, nonzero potentials, `w = 3`.
pub fn mixed_322() -> StarGraph {
    graph(
        vec![
            singular3(1.0).with_potential(poly(&[&[0.0, 0.5, 0.2], &[0.0, 0.0, 0.3]])),
            bessel2(0.8).with_potential(poly(&[&[0.0, 0.0, 1.5, -0.4]])),
            free2(1.2).with_potential(poly(&[&[1.0, 0.5]])),
        ],
        3,
    )
}

/// Orders (3, 3, 2), `w = 3`.
pub fn mixed_332() -> StarGraph {
    graph(
        vec![
            mild3(1.0).with_potential(poly(&[&[0.4, -0.3], &[0.2]])),
            singular3(0.9).with_potential(poly(&[&[0.0, 0.0, 0.7], &[0.0, 0.0, -0.2]])),
            bessel2(1.1).with_potential(poly(&[&[0.0, 0.0, 0.0, 1.0]])),
        ],
        3,
    )
}

/// Three identical free order-2 edges of length 1.
pub fn hyperbolic_star() -> StarGraph {
    graph(vec![free2(1.0), free2(1.0), free2(1.0)], 3)
}

pub fn lambdas(count: usize) -> Vec<C64> {
    (0..count).map(|i| C64::from_polar(1.0 + 3.0 * i as f64, 1.2 + 0.1 * i as f64)).collect()
}
