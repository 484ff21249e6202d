//! Abelian integrals of four discontinuously perturbed quadratic
//! isochronous centers: quadrature, exact reduction to basis integrals,
//! Picard–Fuchs checks, a small differential field for closed forms and
//! Wronskians, zero counting, and direct simulation of the switched flows.

// `!(a < b)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod melnikov;
pub mod odeharness;
pub mod picard_fuchs;
pub mod poly;
pub mod quadrature;
pub mod reduction;
pub mod symfield;
pub mod systems;
pub mod zeros;

pub use error::{Error, Result};
