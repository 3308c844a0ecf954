//! Historical-engagement feature extraction: count tables, follower-Jaccard
//! user clusters, interaction-graph communities, and per-record feature
//! assembly.

mod assemble;
mod community;
mod jaccard;
mod store;

pub use assemble::{
    assemble, assemble_into, AssembledFeatures, CategoricalLayout, CAT_COUNT, NUMERIC_LEN,
};
pub use community::{community_partitions, CommunityMap};
pub use jaccard::{jaccard, similar_user_clusters};
pub use store::{build_store, FeatureStore, ReactionCounts, StoreConfig};
