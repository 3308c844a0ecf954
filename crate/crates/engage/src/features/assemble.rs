//! Per-record model input assembly: tweet sketch, raw numeric scalars, and
//! categorical ids. Never reads the reaction fields of the record being
//! featurized; missing store entries contribute zero counts.

use super::store::{FeatureStore, ReactionCounts};
use crate::data::InteractionRecord;
use crate::error::{EngageError, Result};
use crate::sketch::SketchCodec;

/// Numeric scalar block layout (Fourier-encoded downstream), fixed order:
///  0..4   pair counts (like, reply, retweet, quote)
///  4..8   reactions received by the engaged user
///  8..12  reactions given by the engaging user
/// 12..16  reactions given by the engaging user in the tweet's language
/// 16..20  engaging-user reactions on the tweet's hashtags (summed)
/// 20..24  reactions on this tweet id
/// 24..28  pair counts summed over the engaged user's similarity cluster
/// 28..32  follower/following counts (engaged f/f, engaging f/f)
/// 32      engaged account age at tweet time (seconds)
/// 33      engaging account age at tweet time (seconds)
/// 34      number of hashtags on the tweet
pub const NUMERIC_LEN: usize = 35;

/// Categorical id block, fixed order: language, tweet type, day-of-week,
/// hour-of-day, media bitfield, engaged verified, engaging verified,
/// engaging-follows-engaged, same-community flag per reaction graph.
pub const CAT_COUNT: usize = 12;

/// Vocabulary sizes of the categorical slots, in block order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoricalLayout {
    pub vocab_sizes: [usize; CAT_COUNT],
}

impl CategoricalLayout {
    pub fn new(languages: usize) -> Self {
        CategoricalLayout {
            vocab_sizes: [languages.max(1), 4, 7, 24, 16, 2, 2, 2, 2, 2, 2, 2],
        }
    }
}

/// Model input for one record, before Fourier encoding and embedding lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledFeatures {
    /// Normalized K*W sketch block.
    pub sketch: Vec<f32>,
    pub numeric: [f64; NUMERIC_LEN],
    pub categorical: [u32; CAT_COUNT],
    /// Inverse community cardinality per reaction graph; zero when the two
    /// users sit in different partitions.
    pub community_strengths: [f64; 4],
}

impl AssembledFeatures {
    pub fn zeroed(sketch_len: usize) -> Self {
        AssembledFeatures {
            sketch: vec![0.0; sketch_len],
            numeric: [0.0; NUMERIC_LEN],
            categorical: [0; CAT_COUNT],
            community_strengths: [0.0; 4],
        }
    }
}

fn put_counts(out: &mut [f64], at: usize, c: Option<&ReactionCounts>) {
    let c = c.map(|c| c.0).unwrap_or_default();
    for r in 0..4 {
        out[at + r] = c[r] as f64;
    }
}

/// Assemble features into a preallocated buffer; allocation-free, for the
/// latency-measured inference path.
pub fn assemble_into(
    record: &InteractionRecord,
    store: &FeatureStore,
    codec: &SketchCodec,
    out: &mut AssembledFeatures,
) -> Result<()> {
    if out.sketch.len() != codec.params.sketch_len() {
        return Err(EngageError::Config(format!(
            "sketch buffer {} does not match codec {}",
            out.sketch.len(),
            codec.params.sketch_len()
        )));
    }
    codec.encode_into(&record.tweet_tokens, &mut out.sketch);

    let a = record.engaged_user;
    let b = record.engaging_user;
    let n = &mut out.numeric;
    put_counts(n, 0, store.pair_counts.get(&(a, b)));
    put_counts(n, 4, store.received_counts.get(&a));
    put_counts(n, 8, store.given_counts.get(&b));
    put_counts(n, 12, store.given_counts_by_language.get(&(b, record.language)));
    let mut tag_counts = ReactionCounts::default();
    for &h in &record.hashtags {
        if let Some(c) = store.hashtag_counts.get(&(b, h)) {
            tag_counts.add(c);
        }
    }
    put_counts(n, 16, Some(&tag_counts));
    put_counts(n, 20, store.tweet_counts.get(&record.tweet_id));
    let mut cluster_counts = ReactionCounts::default();
    if let Some(&cluster) = store.similar_user_clusters.get(&a) {
        if let Some(members) = store.cluster_members.get(&cluster) {
            for &m in members {
                if let Some(c) = store.pair_counts.get(&(m, b)) {
                    cluster_counts.add(c);
                }
            }
        }
    }
    put_counts(n, 24, Some(&cluster_counts));
    n[28] = record.engaged_follower_count as f64;
    n[29] = record.engaged_following_count as f64;
    n[30] = record.engaging_follower_count as f64;
    n[31] = record.engaging_following_count as f64;
    n[32] = (record.tweet_timestamp - record.engaged_account_created) as f64;
    n[33] = (record.tweet_timestamp - record.engaging_account_created) as f64;
    n[34] = record.hashtags.len() as f64;

    let ts = record.tweet_timestamp;
    let day_of_week = (ts.div_euclid(86_400) + 4).rem_euclid(7) as u32;
    let hour = (ts.rem_euclid(86_400) / 3600) as u32;
    let mut same = [0u32; 4];
    let mut strengths = [0.0f64; 4];
    for r in 0..4 {
        let parts = &store.community_partitions[r];
        if let (Some(&(pa, size)), Some(&(pb, _))) = (parts.get(&a), parts.get(&b)) {
            if pa == pb {
                same[r] = 1;
                strengths[r] = 1.0 / size as f64;
            }
        }
    }
    out.categorical = [
        record.language as u32,
        record.tweet_type.code() as u32,
        day_of_week,
        hour,
        record.media_flags.bits() as u32,
        record.engaged_verified as u32,
        record.engaging_verified as u32,
        record.engaging_follows_engaged as u32,
        same[0],
        same[1],
        same[2],
        same[3],
    ];
    out.community_strengths = strengths;
    Ok(())
}

pub fn assemble(
    record: &InteractionRecord,
    store: &FeatureStore,
    codec: &SketchCodec,
) -> Result<AssembledFeatures> {
    let mut out = AssembledFeatures::zeroed(codec.params.sketch_len());
    assemble_into(record, store, codec, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorConfig};
    use crate::features::{build_store, StoreConfig};
    use crate::sketch::{fit_codec, SketchParams};

    fn fixture() -> (Vec<crate::data::InteractionRecord>, FeatureStore, SketchCodec) {
        let cfg = GeneratorConfig {
            impressions: 800,
            users: 50,
            tweets: 80,
            ..GeneratorConfig::default()
        };
        let data = generate_synthetic(&cfg, 4).unwrap();
        let store = build_store(&data.log, &data.followers, &StoreConfig::default()).unwrap();
        let codec = fit_codec(
            &data.embeddings,
            &SketchParams {
                depth: 4,
                width: 8,
                embedding_dim: cfg.dim,
                seed: 1,
                density_aware: true,
            },
        )
        .unwrap();
        (data.log, store, codec)
    }

    #[test]
    fn unseen_pair_gives_zero_pair_counts() {
        let (log, store, codec) = fixture();
        let mut rec = log[0].clone();
        rec.engaged_user = 900_001;
        rec.engaging_user = 900_002;
        let f = assemble(&rec, &store, &codec).unwrap();
        assert!(f.numeric[..8].iter().all(|&v| v == 0.0));
        assert!(f.numeric[24..28].iter().all(|&v| v == 0.0));
        assert_eq!(f.community_strengths, [0.0; 4]);
    }

    #[test]
    fn hashtag_count_scalar_is_tag_count() {
        let (log, store, codec) = fixture();
        let mut rec = log[0].clone();
        rec.hashtags = vec![1, 2];
        let f = assemble(&rec, &store, &codec).unwrap();
        assert_eq!(f.numeric[34], 2.0);
    }

    #[test]
    fn never_reads_reaction_fields() {
        let (log, store, codec) = fixture();
        let rec = log.iter().find(|r| r.any_reaction()).unwrap();
        let mut blanked = rec.clone();
        blanked.reaction_timestamps = [None; 4];
        let a = assemble(rec, &store, &codec).unwrap();
        let b = assemble(&blanked, &store, &codec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn assembly_is_deterministic() {
        let (log, store, codec) = fixture();
        for rec in log.iter().take(20) {
            let a = assemble(rec, &store, &codec).unwrap();
            let b = assemble(rec, &store, &codec).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cluster_counts_sum_pair_counts_over_members() {
        let (log, store, codec) = fixture();
        for rec in log.iter().take(50) {
            let f = assemble(rec, &store, &codec).unwrap();
            let cluster = store.similar_user_clusters[&rec.engaged_user];
            let mut want = [0u64; 4];
            for (&(m, b), c) in &store.pair_counts {
                if b == rec.engaging_user && store.similar_user_clusters.get(&m) == Some(&cluster)
                {
                    for r in 0..4 {
                        want[r] += c.0[r] as u64;
                    }
                }
            }
            for r in 0..4 {
                assert_eq!(f.numeric[24 + r], want[r] as f64);
            }
        }
    }
}
