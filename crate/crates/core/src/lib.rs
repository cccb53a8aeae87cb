//! Identifiability of latent factors and loadings in confirmatory factor
//! models `M = Θ Aᵀ` whose loading supports are constrained by a binary
//! design matrix `Q`.
//!
//! * [`design`] decides, from `Q` alone, which factors and loadings are
//!   identifiable up to scale.
//! * [`recovery`] recovers identifiable factors from `M` by intersecting
//!   column spaces, then solves for the loadings.
//! * [`counterexample`] builds an alternative factorization of the same `M`
//!   for every non-identifiable column.
//! * [`generator`] samples random valid instances.
//!
//! Factor and item indices are 0-based throughout the Rust API. Human
//! readable messages and the JSON formats in [`io`] use 1-based indices.

pub mod counterexample;
pub mod design;
pub mod generator;
pub mod io;
pub mod linalg;
pub mod model;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod recovery;

pub use counterexample::{AlternativeFactorization, CounterexampleKind, Perturbation};
pub use design::{DesignMatrix, FactorSet, IdentifiabilityReport, RealizedPattern, Verdict};
pub use generator::{GeneratorSpec, PatternPolicy};
pub use model::{AssumptionReport, FactorModel};
pub use recovery::{RecoveryResult, Subspace};

/// Default relative tolerance for numerical rank decisions.
pub const DEFAULT_TOL: f64 = 1e-8;
