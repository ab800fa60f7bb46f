//! Cooperative job dispatching from access points to edge servers under
//! random uploading delay.
//!
//! The crate models a slotted network in which APs route arriving jobs to
//! edge servers over links with geometric uploading delay, and servers run
//! one FCFS queue per job type. It provides the exact dynamics, closed-form
//! value functions of a fixed-route baseline, a one-step improved dispatcher,
//! benchmark heuristics, an exact small-instance MDP oracle and a seeded
//! simulator.

pub mod cli;
pub mod error;
pub mod markov;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod presets;
pub mod rng;
pub mod sim;
pub mod valuefn;

pub use error::{Error, Result};
