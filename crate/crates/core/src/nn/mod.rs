//! Dense multi-support and depthwise separable graph convolution networks.
//!
//! A multi-support layer computes `σ(Σ_s C_s H W_s + b)`; a depthwise
//! separable layer computes `σ((Σ_s w_s ⊙ (C_s H)) W + b)` with one shared
//! `W` and a per-support feature scaling `w_s`.

mod cv;
pub mod gradcheck;
mod layers;
mod loss;
mod model;
mod optim;
mod params;
mod train;

pub use cv::{crossvalidate, CvRepeat, CvResult};
pub use layers::{backward, forward, DropoutPlan, ForwardCache};
pub use loss::{loss, LossKind, LossOutput, MetricCounts, Targets};
pub use model::{param_count, Activation, ArchitectureOptions, LayerSpec, ModelSpec};
pub use optim::{Adam, AdamConstants};
pub use params::{add_weight_penalty_grad, weight_penalty, LayerParams, ParamGroup, Parameters};
pub use train::{
    evaluate, evaluate_set, loss_and_grad, objective, objective_grad, train_inductive, train_transductive,
    EpochMetrics, GraphSample, TrainConfig, TrainResult,
};
