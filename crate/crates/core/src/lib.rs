//! Collisionless kinetic transport in bounded smooth domains with stochastic
//! partly diffuse boundary operators.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: domains, exit times, the ballistic flow and travel-time gradients.
//! - [`vmeasure`]: orthogonally invariant velocity measures, quadrature and sampling.
//! - [`boundary`]: reflection laws, diffuse kernels and the predicates built on them.
//! - [`spectral`]: trace grids, the operators `M0` and `H`, the eigenproblem
//!   `M0 H phi = phi`, invariant densities and the resolvent.
//! - [`pdmp`]: event-driven simulation of the transport semigroup and its observables.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod error;
pub mod geometry;
pub mod pdmp;
pub mod spectral;
pub mod vmeasure;

pub use error::{Error, Result};
