//! Simulator and solvers for UAV-assisted hierarchical federated learning.
//!
//! Devices train locally, UAVs aggregate their covered devices at the edge, and
//! one elected UAV aggregates the fleet. The crate models link rates, delay and
//! energy costs, and three per-round decisions:
//!
//! * [`p1`] picks the local iteration count and per-device bandwidth splits with
//!   an augmented Lagrangian solver.
//! * [`p2`] scores devices and picks a selection threshold with a constrained
//!   TD3 agent.
//! * [`p3`] repositions UAVs with a two-stage greedy search and elects the
//!   global aggregator.
//!
//! [`orchestrator`] runs the round loop that ties these together.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cost;
pub mod error;
pub mod exec;
pub mod learner;
pub mod net;
pub mod orchestrator;
pub mod p1;
pub mod p2;
pub mod p3;
pub mod rng;

pub use error::{Error, Result};
