//! Phaseless inverse scattering toolkit: forward solvers in time and frequency,
//! phase retrieval from modulus data, Volterra uniqueness mechanics and
//! Radon-based reconstruction of the potential.

pub mod config;
pub mod error;
pub mod forward_freq;
pub mod forward_time;
pub mod geometry;
pub mod io;
pub mod phase_retrieval;
pub mod pipeline;
pub mod quad;
pub mod radon;
pub mod report;
pub mod volterra;

pub use error::{Error, Result};
