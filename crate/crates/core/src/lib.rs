//! Edge-cloud inference scheduling: multiscale frame complexity, LSTM
//! resource-preference prediction, combinatorial-bandit server allocation,
//! and a slotted simulator that accounts accuracy, delay, compute, bandwidth
//! and energy.

// Negated comparisons are how validation rejects NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod complexity;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod scheduler;
pub mod simulator;
