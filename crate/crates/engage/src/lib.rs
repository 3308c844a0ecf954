//! Tweet engagement prediction pipeline.
//!
//! Encodes tweet text as additive LSH sketches, scalars as multi-scale
//! sin/cos vectors, extracts historical-engagement features, and trains a
//! residual feed-forward network predicting four reaction probabilities
//! (like, reply, retweet, quote) under a single-core latency budget.

pub mod config;
pub mod data;
pub mod error;
pub mod features;
pub mod fourier;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod sketch;

pub use error::{EngageError, Result};
