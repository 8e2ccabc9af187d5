//! Value-of-information sensor scheduling for digital-twin trajectory
//! estimation.
//!
//! A tracked agent moves in a disk; fixed sensors observe either its position
//! or its velocity. Each query interval the twin predicts its Gaussian
//! belief, decides which reachable sensors transmit over a Rician uplink, and
//! updates the belief with what they report. [`scheduler::voi_schedule`]
//! picks the fewest sensors that bring every feature's variance under its
//! requirement; four fixed-order benchmarks are included for comparison, and
//! [`experiment`] runs all of them under one seeded Monte Carlo harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dynamics;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod scheduler;
pub mod seeding;
pub mod selftest;
pub mod sensing;

pub use error::{Error, Result};
