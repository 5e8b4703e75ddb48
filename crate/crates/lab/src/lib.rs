//! Configuration-driven experiments on top of the `magdirac` library.

pub mod config;
pub mod error;
pub mod export;
pub mod manifest;
pub mod run;
pub mod verify;

pub use error::{LabError, Result};
