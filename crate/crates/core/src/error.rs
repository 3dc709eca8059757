use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the crate.
///
/// Validation failures (bad configuration, violated standing assumptions) are
/// separated from numerical failures by [`Error::is_validation`]; the CLI maps
/// the two classes onto different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // configuration / model
    #[error("edge orders must be non-increasing: edge {edge} has order {order} after {previous}")]
    NonmonotoneOrders { edge: usize, order: usize, previous: usize },
    #[error("w = {w} is not a group boundary (boundaries: {boundaries:?})")]
    InvalidW { w: usize, boundaries: Vec<usize> },
    #[error("edge {edge}: gamma diagonal entry gamma[{nu}][{nu}] is zero")]
    GammaDiagonalZero { edge: usize, nu: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty spectral range")]
    EmptyRange,

    // characteristic roots
    #[error("expected {expected} singularity coefficients, got {got}")]
    WrongCoefficientCount { expected: usize, got: usize },
    #[error("roots mu_{i} and mu_{j} differ by a multiple of n")]
    RootsDifferByMultipleOfN { i: usize, j: usize },
    #[error("roots mu_{i} and mu_{j} have equal real parts")]
    EqualRealParts { i: usize, j: usize },
    #[error("root mu_{index} = {value} lies in the forbidden set {{0,..,n-3}}")]
    RootInForbiddenIntegerSet { index: usize, value: f64 },
    #[error("edge {edge}: potential component q_{component} violates the weighted integrability condition")]
    PotentialNotIntegrable { edge: usize, component: usize },

    // evaluation
    #[error("|rho x| = {value:.3} exceeds the series budget {limit:.3}")]
    OutOfConvergenceBudget { value: f64, limit: f64 },
    #[error("Volterra quadrature did not converge (residual {residual:.3e})")]
    QuadratureNonconvergence { residual: f64 },
    #[error("resonant exponent at offset {offset} produces a logarithmic term")]
    LogarithmicResonance { offset: usize },

    // sectors / asymptotics
    #[error("ray argument {arg:.4} is outside the admissible sector")]
    RayOutsideSector { arg: f64 },
    #[error("Picard iteration diverged after {sweeps} sweeps")]
    PicardDivergence { sweeps: usize },
    #[error("C-Wronskian system is ill-conditioned (cond = {cond:.3e})")]
    IllConditionedBasis { cond: f64 },
    #[error("|rho x| = {value:.3} lies in neither the series nor the asymptotic regime")]
    GapRegion { value: f64 },
    #[error("|rho| = {rho:.3} is below the contraction threshold {threshold:.3}")]
    RhoBelowThreshold { rho: f64, threshold: f64 },
    #[error("contraction failed: residual {residual:.3e} after {sweeps} sweeps")]
    ContractionFailure { residual: f64, sweeps: usize },

    // graph forward / inverse
    #[error("characteristic determinant vanishes at lambda = ({re:.6}, {im:.6})")]
    SingularAtLambda { re: f64, im: f64 },
    #[error("linear system ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("missing Weyl data: {0}")]
    MissingWeylData(String),
    #[error("gamma form inversion failed on edge {edge}")]
    FormInversionFailure { edge: usize },
    #[error("sigma system for (s={s}, k={k}, j={j}) is singular (cond = {cond:.3e})")]
    SigmaSingular { s: usize, k: usize, j: usize, cond: f64 },
    #[error("index bookkeeping mismatch: {0}")]
    RangeMismatch(String),
    #[error("incomplete table: {0}")]
    IncompleteTable(String),
    #[error("denominator near zero in Weyl matrix reconstruction")]
    DenominatorNearZero,

    // recovery
    #[error("recovery did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error stems from invalid input rather than a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonmonotoneOrders { .. }
                | Error::InvalidW { .. }
                | Error::GammaDiagonalZero { .. }
                | Error::InvalidConfig(_)
                | Error::EmptyRange
                | Error::WrongCoefficientCount { .. }
                | Error::RootsDifferByMultipleOfN { .. }
                | Error::EqualRealParts { .. }
                | Error::RootInForbiddenIntegerSet { .. }
                | Error::PotentialNotIntegrable { .. }
                | Error::MissingWeylData(_)
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
