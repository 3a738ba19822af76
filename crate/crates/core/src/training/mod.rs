//! Joint objective, scheduled sampling and the optimization loop.

mod fit;
mod loss;
mod schedule;

pub use fit::{fit, step_gradients, EpochRecord, FitResult, LossRecord, StepOutput, TrainConfig};
pub use loss::{
    binary_cross_entropy, cross_entropy_rows, joint_loss, scalar, trigger_loss, JointLoss,
    LossWeights,
};
pub use schedule::{scheduled_select, ScheduleConfig, ScheduleStats, Selection};

#[cfg(test)]
pub(crate) use fit::stream_rng;
