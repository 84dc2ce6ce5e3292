//! 6-DoF spacecraft inspection simulator with run time assurance.
//!
//! A deputy spacecraft maneuvers around a passive chief to inspect a
//! weighted set of points on its surface. Safety (collision avoidance,
//! speed limits, attitude exclusion zones, thermal and power limits) is
//! enforced at run time by a quadratic-program safety filter built from
//! control barrier functions. The crate provides the dynamics, the
//! constraint library, the filter, an RL-style episode environment,
//! classical baseline controllers, and batch evaluation metrics.

pub mod asif_filter;
pub mod baseline_ctrl;
pub mod cbf_kit;
pub mod cli;
pub mod config;
pub mod episode_env;
pub mod error;
pub mod inspection_geom;
pub mod metrics_eval;
pub mod quat_dyn;
pub mod thermal_power;
pub mod trace;

pub use error::{Error, Result};
pub use quat_dyn::{ControlInput, Quaternion, SimState, VehicleParams};
