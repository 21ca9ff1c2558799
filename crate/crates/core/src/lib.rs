//! Measuring and closing the behavior gap between two simulators of a planar
//! legged robot.
//!
//! The toolkit rolls a fixed parametric gait controller in a "source"
//! simulator and in a "target" simulator (the stand-in for hardware), scores
//! the mismatch between the two rollout distributions, and searches a space of
//! simulator modifications with CMA-ES so that the source reproduces the
//! target. Three cost families are provided: a marginal 1-D Wasserstein cost
//! over joint positions, velocities and actions, and two time-aligned
//! trajectory matchers (with and without privileged state resets).

pub mod cli;
pub mod cmaes;
pub mod controller;
pub mod error;
pub mod gapmetrics;
pub mod mods;
pub mod parallel;
pub mod pipeline;
pub mod plant;
pub mod rngstream;
pub mod trajdata;

pub use error::{Error, Result};
