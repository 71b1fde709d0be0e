#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cli;
pub mod decayfit;
pub mod error;
pub mod evolve;
pub mod expr;
pub mod fracops;
pub mod gronwall;
pub mod model;
pub mod plots;
pub mod quad;
pub mod scenario;
pub mod space;
pub mod specialfn;
pub mod steady;

pub use error::{Error, Result};
