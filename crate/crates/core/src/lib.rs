//! Entanglement-transformation toolkit for multipartite pure states.
//!
//! States are dense amplitude vectors over `d_1 x ... x d_n` with site 1 as the
//! most significant index. Local operators are stored factor-wise and never
//! expanded unless a caller asks for the dense matrix.
//!
//! The crate is organised bottom-up:
//!
//! * [`qtensor`] holds states, local operators and the linear-algebra helpers.
//! * [`states`] builds the antisymmetric, GHZ, W and diagonal-family states.
//! * [`symmetry`] describes stabilizer families and solves quasi-commutation.
//! * [`isolation`] decides weak isolation and finite-round reachability.
//! * [`protocols`] models, validates and simulates round-based protocols.
//! * [`sep`] builds and decides the separable-map necessary conditions.
//! * [`decomp`] computes the controlled-unitary preparation of diagonal-family states.

pub mod decomp;
mod error;
pub mod isolation;
pub mod protocols;
pub mod qtensor;
pub mod sep;
pub mod states;
pub mod symmetry;

pub use error::{Error, Result};
pub use qtensor::{LocalOperator, PureState, C64, CMat, DEFAULT_TOL};

/// Deterministic generator used by every randomized routine.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeded generator.
pub fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
