//! Precomputed historical-engagement count tables, similarity clusters, and
//! community partitions. Immutable after build; safe for concurrent lookup.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::community::{community_partitions, CommunityMap};
use super::jaccard::similar_user_clusters;
use crate::data::{FollowerSets, InteractionRecord};
use crate::error::{EngageError, Result};

/// Per-reaction engagement counts (like, reply, retweet, quote). Saturating.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReactionCounts(pub [u32; 4]);

impl ReactionCounts {
    pub fn bump(&mut self, reaction: usize) {
        self.0[reaction] = self.0[reaction].saturating_add(1);
    }

    pub fn add(&mut self, other: &ReactionCounts) {
        for i in 0..4 {
            self.0[i] = self.0[i].saturating_add(other.0[i]);
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Follower-Jaccard similarity threshold for user clustering.
    pub jaccard_threshold: f64,
    pub seed: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            jaccard_threshold: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    /// (engaged, engaging) -> counts of reactions between the pair.
    pub pair_counts: HashMap<(u64, u64), ReactionCounts>,
    /// engaged user -> reactions received from anyone.
    pub received_counts: HashMap<u64, ReactionCounts>,
    /// engaging user -> reactions given to anyone.
    pub given_counts: HashMap<u64, ReactionCounts>,
    /// (engaging user, language) -> reactions given to tweets in that language.
    pub given_counts_by_language: HashMap<(u64, u16), ReactionCounts>,
    /// (engaging user, hashtag) -> reactions given to tweets carrying it.
    pub hashtag_counts: HashMap<(u64, u32), ReactionCounts>,
    /// tweet id -> reactions it received.
    pub tweet_counts: HashMap<u64, ReactionCounts>,
    /// follower-Jaccard cluster per user.
    pub similar_user_clusters: HashMap<u64, u32>,
    /// members of each cluster, sorted.
    pub cluster_members: HashMap<u32, Vec<u64>>,
    /// per reaction graph: user -> (partition id, partition size).
    pub community_partitions: [CommunityMap; 4],
}

/// Build every table from the historical rows by a single counting pass,
/// then cluster users and partition the interaction graphs.
pub fn build_store(
    history: &[InteractionRecord],
    followers: &FollowerSets,
    config: &StoreConfig,
) -> Result<FeatureStore> {
    let mut store = FeatureStore::default();
    for rec in history {
        for r in 0..4 {
            if rec.reaction_timestamps[r].is_none() {
                continue;
            }
            store
                .pair_counts
                .entry((rec.engaged_user, rec.engaging_user))
                .or_default()
                .bump(r);
            store
                .received_counts
                .entry(rec.engaged_user)
                .or_default()
                .bump(r);
            store
                .given_counts
                .entry(rec.engaging_user)
                .or_default()
                .bump(r);
            store
                .given_counts_by_language
                .entry((rec.engaging_user, rec.language))
                .or_default()
                .bump(r);
            for &h in &rec.hashtags {
                store
                    .hashtag_counts
                    .entry((rec.engaging_user, h))
                    .or_default()
                    .bump(r);
            }
            store.tweet_counts.entry(rec.tweet_id).or_default().bump(r);
        }
    }
    store.similar_user_clusters = similar_user_clusters(followers, config.jaccard_threshold)?;
    for (&u, &c) in &store.similar_user_clusters {
        store.cluster_members.entry(c).or_default().push(u);
    }
    for members in store.cluster_members.values_mut() {
        members.sort_unstable();
    }
    store.community_partitions = community_partitions(history, config.seed);
    Ok(store)
}

impl FeatureStore {
    pub fn write(&self, path: &Path, config_echo: Option<&str>) -> Result<()> {
        let file = File::create(path).map_err(|e| EngageError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            writeln!(w, "#feature-store v1")?;
            if let Some(echo) = config_echo {
                for line in echo.lines() {
                    writeln!(w, "#{line}")?;
                }
            }
            let fmt = |c: &ReactionCounts| {
                format!("{} {} {} {}", c.0[0], c.0[1], c.0[2], c.0[3])
            };
            writeln!(w, "#section pair")?;
            for (k, c) in sorted(&self.pair_counts) {
                writeln!(w, "{} {} {}", k.0, k.1, fmt(c))?;
            }
            writeln!(w, "#section received")?;
            for (k, c) in sorted(&self.received_counts) {
                writeln!(w, "{k} {}", fmt(c))?;
            }
            writeln!(w, "#section given")?;
            for (k, c) in sorted(&self.given_counts) {
                writeln!(w, "{k} {}", fmt(c))?;
            }
            writeln!(w, "#section given-lang")?;
            for (k, c) in sorted(&self.given_counts_by_language) {
                writeln!(w, "{} {} {}", k.0, k.1, fmt(c))?;
            }
            writeln!(w, "#section hashtag")?;
            for (k, c) in sorted(&self.hashtag_counts) {
                writeln!(w, "{} {} {}", k.0, k.1, fmt(c))?;
            }
            writeln!(w, "#section tweet")?;
            for (k, c) in sorted(&self.tweet_counts) {
                writeln!(w, "{k} {}", fmt(c))?;
            }
            writeln!(w, "#section clusters")?;
            for (k, c) in sorted(&self.similar_user_clusters) {
                writeln!(w, "{k} {c}")?;
            }
            for r in 0..4 {
                writeln!(w, "#section community{r}")?;
                for (k, (p, s)) in sorted(&self.community_partitions[r]) {
                    writeln!(w, "{k} {p} {s}")?;
                }
            }
            w.flush()
        })();
        res.map_err(|e| EngageError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<FeatureStore> {
        let file = File::open(path).map_err(|e| EngageError::io(path, e))?;
        let reader = BufReader::new(file);
        let mut store = FeatureStore::default();
        let mut section = String::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EngageError::io(path, e))?;
            let lineno = i + 1;
            if i == 0 {
                if line != "#feature-store v1" {
                    return Err(EngageError::parse(path, 1, "bad store header"));
                }
                continue;
            }
            if let Some(name) = line.strip_prefix("#section ") {
                section = name.to_string();
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || EngageError::parse(path, lineno, "malformed store line");
            let num = |s: &str| -> Result<u64> { s.parse().map_err(|_| bad()) };
            let counts = |fs: &[&str]| -> Result<ReactionCounts> {
                if fs.len() != 4 {
                    return Err(bad());
                }
                let mut c = ReactionCounts::default();
                for (i, s) in fs.iter().enumerate() {
                    c.0[i] = s.parse().map_err(|_| bad())?;
                }
                Ok(c)
            };
            match section.as_str() {
                "pair" => {
                    if f.len() != 6 {
                        return Err(bad());
                    }
                    store
                        .pair_counts
                        .insert((num(f[0])?, num(f[1])?), counts(&f[2..])?);
                }
                "received" | "given" | "tweet" => {
                    if f.len() != 5 {
                        return Err(bad());
                    }
                    let map = match section.as_str() {
                        "received" => &mut store.received_counts,
                        "given" => &mut store.given_counts,
                        _ => &mut store.tweet_counts,
                    };
                    map.insert(num(f[0])?, counts(&f[1..])?);
                }
                "given-lang" => {
                    if f.len() != 6 {
                        return Err(bad());
                    }
                    store.given_counts_by_language.insert(
                        (num(f[0])?, num(f[1])? as u16),
                        counts(&f[2..])?,
                    );
                }
                "hashtag" => {
                    if f.len() != 6 {
                        return Err(bad());
                    }
                    store
                        .hashtag_counts
                        .insert((num(f[0])?, num(f[1])? as u32), counts(&f[2..])?);
                }
                "clusters" => {
                    if f.len() != 2 {
                        return Err(bad());
                    }
                    store
                        .similar_user_clusters
                        .insert(num(f[0])?, num(f[1])? as u32);
                }
                s if s.starts_with("community") => {
                    if f.len() != 3 {
                        return Err(bad());
                    }
                    let r: usize = s["community".len()..].parse().map_err(|_| bad())?;
                    if r >= 4 {
                        return Err(bad());
                    }
                    store.community_partitions[r]
                        .insert(num(f[0])?, (num(f[1])? as u32, num(f[2])? as u32));
                }
                _ => return Err(EngageError::parse(path, lineno, "line outside a section")),
            }
        }
        for (&u, &c) in &store.similar_user_clusters {
            store.cluster_members.entry(c).or_default().push(u);
        }
        for members in store.cluster_members.values_mut() {
            members.sort_unstable();
        }
        Ok(store)
    }
}

fn sorted<K: Ord + Copy, V>(map: &HashMap<K, V>) -> Vec<(K, &V)> {
    let mut v: Vec<(K, &V)> = map.iter().map(|(&k, c)| (k, c)).collect();
    v.sort_by_key(|(k, _)| *k);
    v
}
