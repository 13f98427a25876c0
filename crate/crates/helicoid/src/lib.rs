//! Discrete time-frequency laboratory for localized estimates of the bilinear Hilbert transform
//! model and its relatives.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod operators;
pub mod outer;
pub mod packets;
pub mod sizes;
pub mod stopping;
pub mod tiles;

pub use error::{Error, Result};
