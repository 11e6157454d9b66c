pub mod boost;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod gan;
pub mod linalg;
pub mod nn;
pub mod oracle;
pub mod pipeline;
pub mod rng;

pub use error::{Error, Result};
