//! Two-scale simulation of mineral dissolution and precipitation.

pub mod adapt;
pub mod cell;
pub mod coupling;
pub mod error;
pub mod io;
pub mod linalg;
pub mod macroscale;
pub mod mesh;
pub mod phasefield;

pub use error::{Error, Result};
