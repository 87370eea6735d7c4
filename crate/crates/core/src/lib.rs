pub mod analytical;
pub mod cli;
pub mod channel;
pub mod config;
pub mod error;
pub mod evalsim;
pub mod geometry;
pub mod jointopt;
pub mod specfun;
pub mod squint;

pub use error::{Error, Result};
