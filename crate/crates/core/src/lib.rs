//! Carpooling line analysis from driver GPS traces.
//!
//! Traces are reduced to their passes through meeting points, counted into
//! time-binned driver flows, and turned into expected passenger waits.

pub mod cli;
pub mod cluster;
pub mod error;
pub mod fixtures;
pub mod flow;
pub mod geo;
pub mod io;
pub mod matchprob;
pub mod network;
pub mod participation;
pub mod pipeline;
pub mod rng;
pub mod simplify;
pub mod simulate;
pub mod time;

pub use error::Error;
