//! Data loading, model selection, reports and the `smkl` command line on
//! top of `smkl-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod dump;
pub mod error;
pub mod kernels;
pub mod report;
pub mod select;

pub use error::{Error, Result};
