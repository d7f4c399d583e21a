//! Spontaneous parametric down-conversion pumped by a Bessel-Gauss beam:
//! crystal optics, phasematching kinematics, pair amplitudes, density
//! simulation on an observation screen, ring analysis and exit-face planning.

pub mod amplitude;
pub mod cli;
pub mod analysis;
pub mod config;
pub mod crystal_optics;
pub mod engine;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod planner;

pub use error::{Result, SimError};

pub type Vec3 = nalgebra::Vector3<f64>;
