//! Simulation and analysis stack for a wrapped pneumatic haptic display.
//!
//! The display is a pouch-array sleeve wrapped around a robot arm. Its
//! inflation pressure renders how uncertain a behavior-cloning learner is at
//! the arm's current pose, so a human giving kinesthetic demonstrations can
//! feel where the robot still needs teaching.
//!
//! Modules, bottom-up:
//!
//! - [`types`]: pressure, uncertainty, pose and seed newtypes.
//! - [`psychophysics`]: forced-choice schedules, psychometric sigmoid fits,
//!   just-noticeable differences and Weber fractions.
//! - [`plant`]: first-order pressure dynamics behind a fill/vent valve pair.
//! - [`control`]: uncertainty-to-pressure rendering and bang-bang tracking.
//! - [`learner`]: ensemble behavior cloning with disagreement uncertainty.
//! - [`session`]: the two-demonstration teaching protocol and its metrics.
//! - [`wire`] and [`live`]: the message schema and the command-driven
//!   session state machine used by the network service.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod error;
pub mod learner;
pub mod live;
pub mod plant;
pub mod psychophysics;
pub mod session;
pub mod types;
pub mod wire;

pub use error::{Error, Result};
pub use types::{clamp_uncertainty, kpa_to_psi, psi_to_kpa, Pose, Pressure, Seed, UncertaintyLevel};
