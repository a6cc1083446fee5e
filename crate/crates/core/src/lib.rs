//! Constructive quantitative transversality.
//!
//! Given a continuous map `g` on a box and a manifold `W` presented as a
//! graph, the [`perturb`] module builds a piecewise-linear perturbation of
//! `g` within a sup-norm budget whose `W`-preimage is a finite union of
//! affine slices with a certified measure bound. The [`conslaw`] module
//! applies the scalar (d = m = 1) case to construct initial data for
//! 1-D scalar conservation laws with uniformly convex flux whose entropy
//! solutions carry an explicit shock-curve budget, evaluated through a
//! Lax-Oleinik solver.
//!
//! Supporting machinery: modulus-of-continuity estimation ([`moduli`]),
//! the inductive cube-to-simplex decomposition ([`cubesimplex`]), covering
//! numbers and metric entropy of cell sets ([`entropy`]), and the nested
//! sawtooth lower-bound construction ([`sharpness`]).

pub mod conslaw;
pub mod cubesimplex;
pub mod entropy;
mod error;
pub mod moduli;
pub mod perturb;
pub mod sharpness;

pub use error::Error;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
