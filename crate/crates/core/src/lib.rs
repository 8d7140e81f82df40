pub mod config;
pub mod error;
pub mod fem;
pub mod grid;
pub mod io;
pub mod mma;
pub mod optimizer;
pub mod pipeline;
pub mod stress;
pub mod topology;

pub use error::{Error, Result};
