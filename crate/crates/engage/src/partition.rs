//! Leakage-controlled split of the log into target chunks.
//!
//! Each chunk serves once as training targets while every record outside it
//! feeds feature extraction. Day-window mode buckets rows by engagement day
//! (tweet creation day for negatives); k-random mode assigns rows uniformly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::data::InteractionRecord;
use crate::error::{EngageError, Result};

const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionMode {
    DayWindow,
    KRandom,
}

impl PartitionMode {
    fn name(self) -> &'static str {
        match self {
            PartitionMode::DayWindow => "day-window",
            PartitionMode::KRandom => "k-random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    /// Record index -> chunk id.
    pub chunk_of: Vec<u32>,
    pub num_chunks: u32,
    /// Chunk ids in shuffled training order.
    pub chunk_order: Vec<u32>,
}

impl PartitionPlan {
    /// Record indices belonging to a chunk, in log order.
    pub fn chunk_members(&self, chunk: u32) -> Vec<usize> {
        self.chunk_of
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == chunk)
            .map(|(i, _)| i)
            .collect()
    }

    /// Record indices outside a chunk: the feature history for that chunk.
    pub fn chunk_history(&self, chunk: u32) -> Vec<usize> {
        self.chunk_of
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != chunk)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn write(&self, path: &Path, config_echo: Option<&str>) -> Result<()> {
        let file = File::create(path).map_err(|e| EngageError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            writeln!(w, "#partition-plan v1 {} {}", self.mode.name(), self.num_chunks)?;
            if let Some(echo) = config_echo {
                for line in echo.lines() {
                    writeln!(w, "#{line}")?;
                }
            }
            let order = self
                .chunk_order
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(w, "#order {order}")?;
            for (i, c) in self.chunk_of.iter().enumerate() {
                writeln!(w, "{i}\t{c}")?;
            }
            w.flush()
        })();
        res.map_err(|e| EngageError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<PartitionPlan> {
        let file = File::open(path).map_err(|e| EngageError::io(path, e))?;
        let reader = BufReader::new(file);
        let mut mode = None;
        let mut num_chunks = 0u32;
        let mut chunk_order = Vec::new();
        let mut chunk_of = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| EngageError::io(path, e))?;
            let lineno = i + 1;
            if i == 0 {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 4 || parts[0] != "#partition-plan" || parts[1] != "v1" {
                    return Err(EngageError::parse(path, 1, "bad plan header"));
                }
                mode = Some(match parts[2] {
                    "day-window" => PartitionMode::DayWindow,
                    "k-random" => PartitionMode::KRandom,
                    m => return Err(EngageError::parse(path, 1, format!("bad mode `{m}`"))),
                });
                num_chunks = parts[3]
                    .parse()
                    .map_err(|_| EngageError::parse(path, 1, "bad chunk count"))?;
                continue;
            }
            if let Some(rest) = line.strip_prefix("#order ") {
                chunk_order = rest
                    .split(',')
                    .map(|c| c.parse().map_err(|_| EngageError::parse(path, lineno, "bad order")))
                    .collect::<Result<_>>()?;
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (idx, chunk) = line
                .split_once('\t')
                .ok_or_else(|| EngageError::parse(path, lineno, "expected index<TAB>chunk"))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| EngageError::parse(path, lineno, "bad record index"))?;
            if idx != chunk_of.len() {
                return Err(EngageError::parse(path, lineno, "record indices out of order"));
            }
            let chunk: u32 = chunk
                .parse()
                .map_err(|_| EngageError::parse(path, lineno, "bad chunk id"))?;
            if chunk >= num_chunks {
                return Err(EngageError::parse(path, lineno, "chunk id out of range"));
            }
            chunk_of.push(chunk);
        }
        Ok(PartitionPlan {
            mode: mode.ok_or_else(|| EngageError::parse(path, 1, "missing header"))?,
            chunk_of,
            num_chunks,
            chunk_order,
        })
    }
}

/// Anchor timestamp of a record for day bucketing: earliest reaction time
/// for positive rows, tweet creation time for negatives.
fn anchor_time(r: &InteractionRecord) -> i64 {
    r.first_reaction_time().unwrap_or(r.tweet_timestamp)
}

/// Bucket records into non-overlapping 24h windows. The window origin is the
/// log's minimum timestamp truncated to midnight UTC.
pub fn plan_day_windows(log: &[InteractionRecord], seed: u64) -> Result<PartitionPlan> {
    if log.is_empty() {
        return Err(EngageError::Data("cannot partition an empty log".into()));
    }
    let t_min = log.iter().map(|r| r.tweet_timestamp).min().unwrap();
    let t0 = t_min - t_min.rem_euclid(DAY);
    let chunk_of: Vec<u32> = log
        .iter()
        .map(|r| ((anchor_time(r) - t0) / DAY) as u32)
        .collect();
    let num_chunks = chunk_of.iter().max().unwrap() + 1;
    if num_chunks < 2 {
        return Err(EngageError::Data(
            "day-window partitioning needs a log spanning at least 2 days".into(),
        ));
    }
    Ok(PartitionPlan {
        mode: PartitionMode::DayWindow,
        chunk_of,
        num_chunks,
        chunk_order: shuffled_order(num_chunks, seed),
    })
}

/// Assign records to k chunks uniformly at random, balanced to within one
/// row: a seeded shuffle followed by round-robin chunk ids.
pub fn plan_k_random(log: &[InteractionRecord], k: u32, seed: u64) -> Result<PartitionPlan> {
    if k < 2 {
        return Err(EngageError::Config("k-random partitioning needs k >= 2".into()));
    }
    if (k as usize) > log.len() {
        return Err(EngageError::Data(format!(
            "k={k} exceeds row count {}",
            log.len()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..log.len()).collect();
    indices.shuffle(&mut rng);
    let mut chunk_of = vec![0u32; log.len()];
    for (pos, idx) in indices.into_iter().enumerate() {
        chunk_of[idx] = (pos as u32) % k;
    }
    Ok(PartitionPlan {
        mode: PartitionMode::KRandom,
        chunk_of,
        num_chunks: k,
        chunk_order: shuffled_order(k, seed.wrapping_add(1)),
    })
}

fn shuffled_order(n: u32, seed: u64) -> Vec<u32> {
    let mut order: Vec<u32> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorConfig};

    fn day_log(days: usize) -> Vec<InteractionRecord> {
        let cfg = GeneratorConfig {
            days,
            tweets: 4 * days,
            impressions: 40 * days,
            ..GeneratorConfig::default()
        };
        generate_synthetic(&cfg, 2).unwrap().log
    }

    #[test]
    fn twenty_one_days_gives_twenty_one_chunks() {
        let log = day_log(21);
        let plan = plan_day_windows(&log, 0).unwrap();
        assert_eq!(plan.num_chunks, 21);
        let mut seen = vec![false; 21];
        for &c in &plan.chunk_of {
            seen[c as usize] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn positive_rows_bucket_by_engagement_time() {
        let mut log = day_log(7);
        // positive row created day 4, liked day 5
        let t0 = log.iter().map(|r| r.tweet_timestamp).min().unwrap();
        let t0 = t0 - t0.rem_euclid(DAY);
        log[0].tweet_timestamp = t0 + 4 * DAY + 100;
        log[0].reaction_timestamps = [Some(t0 + 5 * DAY + 50), None, None, None];
        // negative row created day 4
        log[1].tweet_timestamp = t0 + 4 * DAY + 200;
        log[1].reaction_timestamps = [None; 4];
        let plan = plan_day_windows(&log, 0).unwrap();
        assert_eq!(plan.chunk_of[0], 5);
        assert_eq!(plan.chunk_of[1], 4);
    }

    #[test]
    fn single_day_log_is_rejected() {
        let mut log = day_log(2);
        let base = log[0].tweet_timestamp;
        for r in log.iter_mut() {
            r.tweet_timestamp = base;
            r.reaction_timestamps = [None; 4];
        }
        assert!(plan_day_windows(&log, 0).is_err());
    }

    #[test]
    fn k_random_is_balanced_and_deterministic() {
        let cfg = GeneratorConfig {
            impressions: 100_000,
            users: 300,
            tweets: 500,
            ..GeneratorConfig::default()
        };
        let log = generate_synthetic(&cfg, 9).unwrap().log;
        let n = log.len();
        let plan = plan_k_random(&log, 10, 3).unwrap();
        let plan2 = plan_k_random(&log, 10, 3).unwrap();
        assert_eq!(plan, plan2);
        let mut counts = vec![0usize; 10];
        for &c in &plan.chunk_of {
            counts[c as usize] += 1;
        }
        let expected = n / 10;
        for c in counts {
            assert!(
                (c as f64 - expected as f64).abs() < 0.05 * expected as f64,
                "chunk size {c} vs {expected}"
            );
        }
    }

    #[test]
    fn two_rows_two_chunks() {
        let log = day_log(2);
        let plan = plan_k_random(&log[..2], 2, 1).unwrap();
        let mut counts = [0; 2];
        for &c in &plan.chunk_of {
            counts[c as usize] += 1;
        }
        assert_eq!(counts, [1, 1]);
    }

    #[test]
    fn k_larger_than_rows_rejected() {
        let log = day_log(2);
        assert!(plan_k_random(&log[..3], 10, 0).is_err());
        assert!(plan_k_random(&log, 1, 0).is_err());
    }

    #[test]
    fn history_is_exact_complement() {
        let log = day_log(3);
        let plan = plan_day_windows(&log, 1).unwrap();
        for c in 0..plan.num_chunks {
            let members = plan.chunk_members(c);
            let history = plan.chunk_history(c);
            assert_eq!(members.len() + history.len(), log.len());
            let mut all: Vec<usize> = members.into_iter().chain(history).collect();
            all.sort_unstable();
            assert_eq!(all, (0..log.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn plan_round_trips() {
        let log = day_log(4);
        let plan = plan_day_windows(&log, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.tsv");
        plan.write(&path, Some("cfg x")).unwrap();
        assert_eq!(PartitionPlan::read(&path).unwrap(), plan);
    }
}
