#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod integrators;
pub mod model;
pub mod sweep;

pub use error::{Error, Result};
