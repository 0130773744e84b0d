//! Crate-wide error type.

use thiserror::Error;

/// Unified error type; variants map onto CLI exit codes (2 = validation,
/// 3 = numerical failure).
#[derive(Debug, Error)]
pub enum Error {
    // --- validation-class errors (exit code 2) ---
    #[error("site count {0} outside supported range 1..=12")]
    SiteCountOutOfRange(usize),
    #[error("site index {index} out of range for {sites} sites")]
    SiteIndexOutOfRange { index: usize, sites: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix_exponential_diagonal requires a diagonal matrix (max off-diagonal {0:.3e})")]
    NotDiagonal(f64),
    #[error("epsilon entries must be distinct")]
    EpsilonNotDistinct,
    #[error("non-positive radicand {value:.6e} at site {site} in the XYZ field parametrization")]
    NonPositiveRadicand { site: usize, value: f64 },
    #[error("singular energy difference {0:.3e} (within 1e-12 of a coupling pole)")]
    SingularDifference(f64),
    #[error("weights length {got} does not match charge count {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("transfer matrix evaluated at a pole: u coincides with epsilon[{0}]")]
    PoleAtEpsilon(usize),
    #[error("zero longitudinal field B^z at site {0}; perturbative split undefined")]
    ZeroLongitudinalField(usize),
    #[error("pair count M={m} invalid for N={n} sites")]
    InvalidPairCount { m: usize, n: usize },
    #[error("coupling g must be nonzero")]
    ZeroCoupling,
    #[error("Bethe root coincides with epsilon[{0}]")]
    RootAtEpsilon(usize),
    #[error("steady-state window too small: {0} samples (need at least 10)")]
    WindowTooSmall(usize),
    #[error("gamma must be non-negative, got {0}")]
    NegativeGamma(f64),
    #[error("invalid initial state bitstring '{0}'")]
    InvalidBitstring(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    // --- numerical-class errors (exit code 3) ---
    #[error("eigendecomposition failed: {0}")]
    Lapack(String),
    #[error("near-defective matrix: {0}")]
    NearDefective(String),
    #[error("broken PT phase: {0} complex eigenvalues; signature undefined")]
    BrokenPTPhase(usize),
    #[error("signature not unimodular: |<psi_n|P|phi_n>| deviates from 1 by {0:.3e}")]
    SignatureNotUnimodular(f64),
    #[error("eta ansatz inapplicable: minimal imaginary-part residual {0:.6e}")]
    Inapplicable(f64),
    #[error("vanishing norm: |<psi|CP|psi>| = {0:.3e}")]
    VanishingNorm(f64),
    #[error("Lindblad Hamiltonian not Hermitian (relative residual {0:.3e})")]
    NonHermitianHamiltonian(f64),
    #[error("density matrix positivity lost (min eigenvalue {0:.3e}); retry with smaller step")]
    PositivityLost(f64),
    #[error("all denominators vanish for quadratic coefficient C[{i}][{k}]")]
    AllDenominatorsVanish { i: usize, k: usize },
    #[error("unperturbed Hamiltonian is numerically defective: {0}")]
    DefectiveH0(String),
    #[error("eigenvalue tracking lost at scale {0:.3e} (level crossing)")]
    TrackingLost(f64),
    #[error("Bethe solver did not converge: best residual {residual:.3e} at g = {g_reached:.6e}")]
    NonConvergence { residual: f64, g_reached: f64 },
    #[error("Bethe roots collided (min gap {0:.3e})")]
    RootCollision(f64),
}

impl Error {
    /// CLI exit code class for this error: 2 = validation, 3 = numerical.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Lapack(_) | NearDefective(_) | BrokenPTPhase(_) | SignatureNotUnimodular(_)
            | Inapplicable(_) | VanishingNorm(_) | NonHermitianHamiltonian(_)
            | PositivityLost(_) | AllDenominatorsVanish { .. } | DefectiveH0(_)
            | TrackingLost(_) | NonConvergence { .. } | RootCollision(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
