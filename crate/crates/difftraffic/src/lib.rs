//! Differentiable single-lane microscopic traffic simulation.
//!
//! The crate simulates platoons of vehicles driven by the Intelligent Driver
//! Model (IDM) on open roads and closed rings, and exposes the pieces needed
//! to use that simulation inside gradient-based learning:
//!
//! - [`idm`] / [`sim`] — forward dynamics: headways, IDM accelerations,
//!   explicit-Euler stepping with velocity clipping, ring equilibria.
//! - [`jacobian`] — analytical block-bidiagonal Jacobians of the dynamics,
//!   discrete step Jacobians, action sensitivities, and a central-difference
//!   oracle for verification, plus a runtime benchmark of the two routes.
//! - [`reward`] / [`fuel`] — societal reward terms (mean velocity, miles per
//!   gallon, jerk penalty) and their exact gradients with respect to state.
//! - [`env`] — episodic ring / figure-eight RL environments that attach
//!   simulator gradients to every experience tuple.
//! - [`nn`] / [`policy`] / [`ppo`] / [`trainer`] — a small hand-rolled
//!   actor-critic (PPO with GAE) and the gradient-based experience
//!   perturbation variant (DiffPPO).
//! - [`config`] / [`harness`] — JSON experiment configs and the file-output
//!   entry points behind the `difftraffic` command-line tool.
//!
//! Start with the runnable examples (`cargo run --example ring_stop_and_go`)
//! or the README for a tour.

pub mod bench;
pub mod config;
pub mod env;
mod error;
pub mod fuel;
pub mod harness;
pub mod idm;
pub mod jacobian;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod sim;
pub mod trainer;

pub use error::{Error, Result};

pub use env::{ExperienceUnit, Observation, ScenarioConfig, TrafficEnv};
pub use idm::{IdmParams, Topology, TrafficState, VehicleState};
pub use jacobian::{ActionSensitivity, DynamicsJacobian};
pub use reward::RewardWeights;
pub use sim::{StepConfig, StepOutcome};
