//! Residual feed-forward network with categorical embeddings.
//!
//! Training runs in f64 on a single thread for bitwise determinism and
//! exact finite-difference checks; inference uses a frozen f32 predictor
//! with batch-norm folded into the linear layers.

mod config;
mod gradcheck;
mod layout;
mod net;
mod predictor;
mod train;

pub use config::ModelConfig;
pub use gradcheck::gradient_check;
pub use layout::InputLayout;
pub use net::Network;
pub use predictor::{EngagePredictor, Scratch};
pub use train::{train, Dataset, TrainOutcome, TrainRow};
