//! Quadrotor differential flatness with linear rotor drag.
//!
//! Start at [`trajectory`] for references, [`flatness`] for the map from
//! flat outputs to attitude, thrust, body rates and torques, [`sim`] for
//! closed-loop runs and [`identify`] for drag-coefficient fitting.
pub mod check;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod flatness;
pub mod geom;
pub mod identify;
pub mod sim;
pub mod trajectory;

pub use error::{Error, Result};
