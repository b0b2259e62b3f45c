//! Surfaces with flat normal connection in four-dimensional space forms: structure
//! equations, explicit families, the associated Riccati system and frame integration.

pub mod error;
pub mod expr;
pub mod families;
pub mod frames;
pub mod gcr;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod riccati;
pub mod spaceform;

pub use error::{Error, Result};
