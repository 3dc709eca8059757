//! Per-edge machinery without sectors: the characteristic polynomial and its
//! roots, the Frobenius basis `C_j`, the Cauchy Green's function and the
//! perturbed basis `S_j`.

mod charpoly;
mod green;
mod regular;
mod series;

pub use charpoly::{build_char_poly, compute_char_roots, CharData, CharPoly};
pub use green::{c_star, green_bound_ratio, green_g, green_weights};
pub use regular::{regular_basis, series_basis, solve_volterra, RegularBasis, VolterraOptions};
pub use series::{build_series, build_series_with_budget, vandermonde, FrobeniusBasis, SeriesSolution, DEFAULT_R_MAX};
