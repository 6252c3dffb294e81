//! Debiased generalized category discovery at desk scale.
//!
//! The crate is `no_std` (with `alloc`) and carries every algorithmic piece:
//! a small reverse-mode differentiation engine ([`numcore`]), problem
//! construction ([`data`]), the prototype/auxiliary-head model ([`model`]),
//! the full objective ([`losses`]), the training loop ([`train`]),
//! Hungarian-matched accuracy and k-means ([`eval`]) and a numerical checker
//! for the new-category bias bound ([`theory`]).
//!
//! File formats, configuration and the command-line tool live in the `gface`
//! companion crate.

#![no_std]
// `!(x > 0.0)` is how NaN gets rejected along with the rest.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use numcore::{Gradients, Graph, Tensor, Var};
