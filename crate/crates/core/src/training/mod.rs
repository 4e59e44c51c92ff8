//! Losses and the scheduled training loop.

pub mod loss;
pub mod trainer;

pub use loss::{
    loss_foot, loss_foot_grad, loss_inter, loss_inter_grad, loss_prefix, loss_prefix_grad, loss_simple,
    loss_simple_grad, total_loss, total_loss_grad, LossBreakdown, LossInputs, LossWeights,
};
pub use trainer::{
    evaluate_simple_loss, schedule_probability, CurveRow, HistorySource, Phase, ProvenanceEntry, TrainConfig, TrainPlan, TrainReport,
    Trainer,
};
