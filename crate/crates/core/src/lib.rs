//! Traffic signal control for urban grids with yellow contention windows.

// `!(x >= 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod lqr;
pub mod net;
pub mod plot;
pub mod run;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
