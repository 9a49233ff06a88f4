pub mod cli;
pub mod error;
pub mod exact;
pub mod models;
pub mod numerics;
pub mod rs;
pub mod sampler;
pub mod seed;
pub mod verify;

pub use error::{Error, Result};
