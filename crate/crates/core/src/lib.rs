//! Bistable fronts on a cylinder: traveling waves, their spectral gap and the
//! long-time convergence of the moving-frame evolution.

pub mod banded;
pub mod cross_section;
pub mod error;
pub mod evolution;
pub mod experiments;
pub mod gap;
pub mod grid;
pub mod reaction;
pub mod secondary;
pub mod tracker;
pub mod wave;
pub mod weighted;

pub use error::{Error, Result};
