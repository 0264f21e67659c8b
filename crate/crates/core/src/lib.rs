//! Online reinforcement learning for systems whose workload changes over time.
//!
//! The crate is organised around the control loop of a live learning agent:
//!
//! * [`nn`]: small dense and set-encoder networks with manual gradients and Adam.
//! * [`rl`]: advantage actor-critic with GAE, double DQN with soft target
//!   updates, four replay strategies and per-environment reward scaling.
//! * [`framework`]: the environment detector (diagonal GMM with dwell
//!   hysteresis), per-environment exploration with one expert per
//!   environment, and the safety monitor that hands control to a default policy.
//! * [`straggler`]: a discrete-event request proxy with hedging, used to learn
//!   hedging timeouts under shifting arrival and size processes.
//! * [`abr`]: a chunked video-streaming simulator with a Markov-chain plus
//!   Ornstein-Uhlenbeck bandwidth generator, BBA, and the fake-replay guard.
//! * [`harness`]: switching scenarios, experiment runs, cross-workload
//!   evaluation and CSV output.

pub mod abr;
pub mod error;
pub mod framework;
pub mod harness;
pub mod nn;
pub mod rl;
pub mod stats;
pub mod straggler;

pub use error::{Error, Result};
