#![cfg_attr(not(any(feature = "std", test)), no_std)]
// `!(x >= lo)` rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// `is_multiple_of` postdates the minimum supported toolchain.
#![allow(clippy::manual_is_multiple_of)]

extern crate alloc;

pub mod dmd_ref;
pub mod embed;
pub mod error;
pub mod forecast;
pub mod linalg;
pub mod metrics;
pub mod operator;
pub mod rff;
pub mod rng;
pub mod series;

pub use error::{Error, Result};
