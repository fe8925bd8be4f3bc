pub mod data;
pub mod descriptor;
pub mod error;
pub mod monitor;
pub mod selection;
pub mod simgen;
pub mod solver;
pub mod structure;

pub use error::{Error, Result};
