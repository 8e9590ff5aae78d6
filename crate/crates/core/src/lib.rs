// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod preprocess;
pub mod probe;
pub mod registry;
pub mod store;
pub mod video;
pub mod zeroshot;

pub use error::{Error, Result};
