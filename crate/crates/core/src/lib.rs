pub mod diff;
pub mod error;
pub mod fieldnet;
pub mod geometry;
pub mod problems;
pub mod sympnet;
pub mod trainer;

pub use error::{Error, Result};
