pub mod cauchy;
pub mod cylfbm;
pub mod error;
pub mod fbm_core;
pub mod fracops;
pub mod harness;
mod par;
pub mod quad;
pub mod stochint;
pub mod wiener;

pub use error::{Error, Result};
