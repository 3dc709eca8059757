//! Sector-wise large-`rho` machinery: exponential solutions of the model
//! equation, Stokes multipliers, the solutions `y_k` and `Y_k` with prescribed
//! asymptotics, and the verification of their asymptotic estimates.

pub mod exponential;
pub mod hankel;
pub mod perturbed;
pub mod sector;
pub mod verify;

pub use exponential::{stokes_from_e, AsymptoticSeries, ERay, ExponentialSolutions, StokesChecks, StokesData};
pub use hankel::HankelRay;
pub use perturbed::{
    connection_coefficients, connection_defect, estimate_j, leading_connection, q_constant, solve_Y, Connection,
    JEstimate, PerturbedSolution, YOptions,
};
pub use sector::{build_sector, eps_pow, q_interval, roots_of_unity, s_star, sector_interval, SectorData};
pub use verify::{
    e_deviation, verify_asymptotics, verify_edge, AsymptoticsReport, EdgeAsymptotics, SectorReport, SlopeFit,
    VerifyOptions,
};
