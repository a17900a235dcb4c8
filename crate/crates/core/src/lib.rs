pub mod benchmark;
pub mod circuit;
pub mod compiler;
pub mod data;
pub mod error;
pub mod gauge;
pub mod metrics;
pub mod mps;
pub mod numerics;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
