//! Deterministic rover mission simulator: world model, rover plant,
//! autonomy, synthetic detection, evaluation metrics, a framed telemetry
//! protocol and the fixed-step simulation loop that ties them together.

// NaN-rejecting guards are written as negated comparisons
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autonomy;
pub mod detection;
pub mod environment;
pub mod event;
pub mod geom;
pub mod metrics;
pub mod rover;
pub mod telemetry;
pub mod scheduler;
