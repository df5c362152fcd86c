//! Training orchestration and online inference.

pub mod checkpoint;
pub mod generate;
pub mod model;
pub mod optim;
pub mod train;

pub use checkpoint::{StepRecord, TrainState};
pub use generate::{evaluate, generate_online, replay_offline, sample_seed, Generation, GenerationTrace};
pub use model::{ForwardPass, ReactModel, SessionInputs};
pub use optim::AdamW;
pub use train::{
    epoch_order, session_gradients, stage1_objective, stage2_objective, step_eps, train_stage1, train_stage2, weights, TrainData, TrainItem,
    TrainOptions,
};
