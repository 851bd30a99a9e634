//! Adam optimization with adaptive density control, generalized to N
//! co-trained fields with co-regularization hooks.

mod config;
mod densify;
mod log;
mod optim;
mod trainer;

pub use config::{CoRegHooks, LearningRates, Mode, StepRates, Tau, TrainConfig};
pub use densify::{
    densify_and_prune, init_field, reset_opacity, split_children, DensifyReport, OPACITY_RESET_VALUE,
    SPLIT_SCALE_DIVISOR,
};
pub use log::{LogRow, Phase, TrainingLog, LOG_CSV_MAGIC};
pub use optim::{optimize_step, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{train, TrainOutput};
