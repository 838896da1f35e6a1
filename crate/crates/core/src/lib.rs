//! Online learning on the probability simplex with delayed feedback and
//! optimistic hints.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod closed_forms;
pub mod envlab;
pub mod error;
pub mod ftrl;
pub mod hinting;
pub mod omd;
pub mod protocol;
pub mod schedule;
pub mod vector;

pub use error::{Error, Result};
pub use protocol::{
    run_protocol, DelayedLearner, Environment, Evaluation, HintProvider, HintSpace, Observed, RunHistory,
};
pub use schedule::{DelaySchedule, FeedbackQueue};
pub use vector::{GradientVector, SimplexWeights};
