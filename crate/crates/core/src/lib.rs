//! Nuclear-norm regularized matrix completion and low-rank SVD via
//! alternating ridge regressions.

// `!(x > 0.0)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod completion;
pub mod dense;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod scaling;
pub mod simulate;
pub mod soft_svd;
pub mod splr;

pub use error::{Error, Result};
