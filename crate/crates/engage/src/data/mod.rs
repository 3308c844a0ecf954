//! Interaction-log schema, on-disk readers/writers, and the synthetic
//! log generator.

mod generate;
mod io;
mod record;

pub use generate::{generate_synthetic, token_topic, GeneratorConfig, SyntheticData};
pub use io::{
    read_embeddings, read_followers, read_log, write_embeddings, write_followers, write_log,
    LogReader,
};
pub use record::{
    Embeddings, FollowerSets, InteractionRecord, MediaFlags, Reaction, TweetType, REACTIONS,
};
