//! Abstract KAM iteration over scaled spaces of truncated analytic germs.
//!
//! The crate realises scaled Banach spaces as weighted l1 Taylor norms,
//! bounded morphisms as matrices on coefficient space, and runs the KAM
//! iteration with every estimate of the convergence proof checked
//! numerically. Two instances ship with it: the shift exponential
//! `e^{t d/dz} u0 = u0(z + t)` and Siegel linearization of a germ
//! `f(z) = lambda z + O(z^2)` with a small-divisor quasi-inverse.

pub mod arnold;
pub mod cli;
pub mod error;
pub mod instances;
pub mod kam;
pub mod mag;
pub mod operators;
pub mod product;
pub mod schedule;
pub mod spaces;
pub mod transcript;

pub use error::{KamError, Result};
pub use mag::{Mag, Scale};
