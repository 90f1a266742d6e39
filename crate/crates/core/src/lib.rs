pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gradcheck;
pub mod market;
pub mod net;
pub mod tensor;
pub mod tracking;
pub mod train;

pub use error::{Error, Result};
