pub mod algos;
pub mod cli;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod gradcheck;
pub mod klengine;
mod kv;
pub mod numcore;
pub mod policy;
pub mod transform;

pub use error::{Error, Result};
