//! Numerical laboratory for the Schrödinger operator L_μ = −Δ − μ/d_K²
//! on the unit ball, where the inverse-square Hardy potential is singular on
//! a compact submanifold K of the boundary (the whole boundary, a boundary
//! point, or the equatorial circle).
//!
//! The crate verifies, at desk scale:
//!
//! * the closed-form boundary exponents γ± (roots of γ² + kγ + μ = 0) and the
//!   eigenfunction asymptotics φ_μ ≍ d·d_K^{γ₊},
//! * two-sided heat-kernel bounds (small-time Gaussian profile, large-time
//!   eigenfunction factorization) and the parabolic Harnack inequality,
//! * Green and Martin kernel estimates, with the logarithmic corrections that
//!   appear in the critical configuration μ = N²/4, K = boundary point,
//! * weighted functional inequalities (Hardy–Sobolev, Poincaré, Moser,
//!   logarithmic Sobolev) on seeded families of test functions,
//! * explicit sub/supersolutions near K, boundary-value problems with
//!   weighted trace data, harmonic measure, boundary-trace recovery,
//! * the semilinear problem L_μ u + g(u) = 0 with measure boundary data:
//!   Picard iteration, weak-Lᵖ distribution estimates, subcriticality checks.
//!
//! Everything is deterministic given a seed: fixed node ordering, sequential
//! reductions inside solvers, and seeded sample generators.

pub mod analysis;
pub mod discretization;
pub mod elliptic;
pub mod geometry;
pub mod model;
pub mod parabolic;
pub mod report;
pub mod semilinear;
pub mod spectral;

/// Unified error type for the laboratory.
///
/// The variants map onto process exit codes in the CLI: validation failures
/// (precondition/hypothesis violations) are distinct from numerical
/// non-convergence, which is distinct from non-stabilizing diagnostics
/// (extrapolations that refuse to settle and must not be silently trusted).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition or hypothesis of an operation was violated.
    #[error("validation: {0}")]
    Validation(String),

    /// An iterative process failed to reach its tolerance.
    #[error("non-convergence in {what}: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        what: String,
        residual: f64,
        iterations: usize,
    },

    /// A numerical invariant was violated (loss of positive definiteness,
    /// non-finite values, positivity failures beyond solver tolerance).
    #[error("numerical: {0}")]
    Numerical(String),

    /// A refinement/extrapolation diagnostic failed to stabilize; the partial
    /// data is reported in the message instead of being silently extrapolated.
    #[error("diagnostic: {0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI maps this error to (validation 2, otherwise 3).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            _ => 3,
        }
    }
}
