pub mod block;
pub mod cascade;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod margin;
pub mod matrix;
pub mod model_io;
pub mod oracle;
pub mod rng;
pub mod tree;

pub use error::{Error, Result};
pub use matrix::Matrix;
