#![no_std]
//! Sparse multiple kernel learning.
//!
//! Learns a classifier `f(x) = Σᵢ αᵢ yᵢ Σⱼ βⱼ Kⱼ(xᵢ, x) + b` whose kernel
//! weights `β` lie on the probability simplex with at most `k0` non-zero
//! entries. The alternating solver in [`fit`] produces feasible solutions,
//! and the conic relaxations in [`relax`] produce lower bounds that
//! certify how far those solutions can be from optimal.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod conic;
pub mod error;
pub mod fit;
pub mod kernel;
pub mod linalg;
pub mod projection;
pub mod relax;
pub mod rng;
pub mod svm;

pub use error::{Error, Result};
