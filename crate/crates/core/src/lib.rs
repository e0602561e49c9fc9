//! Random walk on the discrete torus, random interlacements, and the soft
//! local times coupling between their excursion chains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chains;
pub mod concentration;
pub mod error;
pub mod interlacements;
pub mod lattice;
pub mod par;
pub mod percolation;
pub mod pipeline;
pub mod potential;
pub mod rng;
pub mod slt;
pub mod walk;

pub use error::{Error, Result};
