//! Minimal neural-network toolkit: autodiff tape, parameters, optimizer,
//! checkpoints and recurrent layers.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod train;

pub use checkpoint::{ensure_compatible, shape_mismatches, Checkpoint, ModelKind};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use layers::{Dense, Gru, Lstm};
pub use optim::{global_norm, Adam, AdamConfig};
pub use params::{Bound, ParamSet, TensorShape};
pub use train::{fit, train_step, FitOptions, LossReport, Trainable};
