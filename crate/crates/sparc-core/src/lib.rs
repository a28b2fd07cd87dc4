//! Safe prediction-based control for a vehicle interacting with a pedestrian
//! whose motion is coupled to the vehicle's state.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`sim`] — a steppable world model: deterministic vehicle kinematics plus
//!    a stochastic, state-coupled pedestrian, with collision detection.
//! 2. [`predict`] — a small feedforward network trained from scratch (Adam,
//!    MSE, step learning-rate decay) to predict the pedestrian's per-step
//!    velocity from a window of recent world states.
//! 3. [`conformal`] — split conformal calibration of the predictor's errors
//!    into per-axis radii, and the axis-aligned prediction regions they induce.
//! 4. [`safety`] — a control barrier function over the prediction region and
//!    the minimally-interfering filtered control it admits.
//!
//! [`data`] generates and persists datasets, [`harness`] runs closed-loop
//! Monte-Carlo experiments comparing filtered and unfiltered controllers, and
//! [`config`] binds everything into one JSON-configurable run.

pub mod config;
pub mod conformal;
pub mod data;
pub mod harness;
pub mod plot;
pub mod predict;
pub mod rng;
pub mod safety;
pub mod sim;
pub mod vec2;

pub use vec2::Vec2;
