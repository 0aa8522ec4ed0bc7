//! Neural ODE: vector-field networks, the adaptive integrator, training and
//! prediction.

pub mod checkpoint;
pub mod network;
pub mod solver;
pub mod train;

pub use checkpoint::Checkpoint;
pub use network::{log_spaced, Layout, LayoutEntry, Network, NetworkSpec, Variant};
pub use solver::{integrate, DenseSolution, SolverConfig};
pub use train::{
    batch_loss, loss_and_gradient, predict, train, trajectory_loss, EpochRecord, StopReason, TrainConfig,
    TrainFailure, TrainOutcome, WindowBatch,
};
