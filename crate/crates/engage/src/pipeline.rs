//! End-to-end glue shared by the CLI and the integration tests: per-chunk
//! feature assembly against leakage-safe stores, holdout splitting, model
//! training, and grouped evaluation.

use std::io::Write as _;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::config::RunConfig;
use crate::data::{FollowerSets, InteractionRecord};
use crate::error::{EngageError, Result};
use crate::features::{assemble, build_store, AssembledFeatures};
use crate::fourier::FourierScales;
use crate::metrics::{grouped_eval, EvalReport};
use crate::model::{train, Dataset, EngagePredictor, InputLayout, TrainOutcome};
use crate::partition::{plan_day_windows, plan_k_random, PartitionPlan};
use crate::sketch::{SketchCodec, SketchParams};

pub fn sketch_params(cfg: &RunConfig, embedding_dim: usize) -> SketchParams {
    SketchParams {
        depth: cfg.sketch.depth,
        width: cfg.sketch.width,
        embedding_dim,
        seed: cfg.sketch.seed,
        density_aware: cfg.sketch.density_aware,
    }
}

pub fn make_plan(cfg: &RunConfig, log: &[InteractionRecord]) -> Result<PartitionPlan> {
    match cfg.partition.mode.as_str() {
        "day-window" => plan_day_windows(log, cfg.partition.seed),
        "k-random" => plan_k_random(log, cfg.partition.k, cfg.partition.seed),
        other => Err(EngageError::Config(format!(
            "unknown partition mode {other:?} (expected day-window or k-random)"
        ))),
    }
}

/// Features and labels for every log row, assembled chunk by chunk so each
/// row's historical features come only from its complement chunks.
#[derive(Debug, Clone)]
pub struct AssembledSet {
    /// Index of each row back into the source log.
    pub row_index: Vec<usize>,
    pub features: Vec<AssembledFeatures>,
    pub labels: Vec<[bool; 4]>,
    /// Engaged-user follower count per row, for popularity grouping.
    pub followers: Vec<u32>,
    /// Partition chunk of each row.
    pub chunk: Vec<u32>,
}

pub fn labels_of(record: &InteractionRecord) -> [bool; 4] {
    std::array::from_fn(|r| record.reaction_timestamps[r].is_some())
}

pub fn assemble_all(
    log: &[InteractionRecord],
    followers: &FollowerSets,
    codec: &SketchCodec,
    plan: &PartitionPlan,
    cfg: &RunConfig,
) -> Result<AssembledSet> {
    let mut set = AssembledSet {
        row_index: Vec::with_capacity(log.len()),
        features: Vec::with_capacity(log.len()),
        labels: Vec::with_capacity(log.len()),
        followers: Vec::with_capacity(log.len()),
        chunk: Vec::with_capacity(log.len()),
    };
    for &chunk in &plan.chunk_order {
        let history: Vec<InteractionRecord> = plan
            .chunk_history(chunk)
            .into_iter()
            .map(|i| log[i].clone())
            .collect();
        let store = build_store(&history, followers, &cfg.store)?;
        for i in plan.chunk_members(chunk) {
            let record = &log[i];
            set.row_index.push(i);
            set.features.push(assemble(record, &store, codec)?);
            set.labels.push(labels_of(record));
            set.followers.push(record.engaged_follower_count);
            set.chunk.push(chunk);
        }
    }
    Ok(set)
}

/// Deterministically split row positions into (train, holdout).
pub fn split_holdout(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(0x401d));
    order.shuffle(&mut rng);
    let held = ((n as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
    let mut holdout: Vec<usize> = order[..held].to_vec();
    let mut train: Vec<usize> = order[held..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    (train, holdout)
}

pub fn input_layout(cfg: &RunConfig) -> InputLayout {
    let sketch_len = cfg.sketch.depth * cfg.sketch.width;
    InputLayout::new(sketch_len, FourierScales::default(), &cfg.model)
}

/// Train on the given row positions: stage 1 on all of them, stage 2
/// fine-tunes on the rows of the final chunk in chronological order.
pub fn train_on(
    cfg: &RunConfig,
    layout: &InputLayout,
    set: &AssembledSet,
    train_rows: &[usize],
    plan: &PartitionPlan,
) -> Result<TrainOutcome> {
    let pack = |rows: &[usize]| -> Dataset {
        let feats: Vec<AssembledFeatures> =
            rows.iter().map(|&p| set.features[p].clone()).collect();
        let labels: Vec<[bool; 4]> = rows.iter().map(|&p| set.labels[p]).collect();
        Dataset::from_features(&feats, &labels, layout, cfg.model.pre_log)
    };
    let stage1 = pack(train_rows);
    let last_chunk = plan.chunk_order.last().copied();
    let stage2 = last_chunk.map(|c| {
        let rows: Vec<usize> = train_rows
            .iter()
            .copied()
            .filter(|&p| set.chunk[p] == c)
            .collect();
        pack(&rows)
    });
    train(&cfg.model, layout, &stage1, stage2.as_ref())
}

/// Run the frozen predictor over the given row positions and score it.
pub fn evaluate(
    predictor: &EngagePredictor,
    set: &AssembledSet,
    rows: &[usize],
    groups: usize,
) -> Result<EvalReport> {
    let mut scratch = predictor.scratch();
    let mut preds = Vec::with_capacity(rows.len());
    let mut labels = Vec::with_capacity(rows.len());
    let mut followers = Vec::with_capacity(rows.len());
    for &p in rows {
        let probs = predictor.forward_into(&set.features[p], &mut scratch)?;
        preds.push(std::array::from_fn(|t| probs[t] as f64));
        labels.push(set.labels[p]);
        followers.push(set.followers[p]);
    }
    grouped_eval(&followers, &preds, &labels, groups)
}

pub const PREDICTIONS_HEADER: &str = "#predictions v1";

pub fn write_predictions(
    path: &Path,
    config_echo: Option<&str>,
    rows: &[(u64, u64, [f32; 4])],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| EngageError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(out, "{PREDICTIONS_HEADER}")?;
        if let Some(echo) = config_echo {
            writeln!(out, "#{echo}")?;
        }
        for (tweet, user, p) in rows {
            writeln!(
                out,
                "{tweet}\t{user}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                p[0], p[1], p[2], p[3]
            )?;
        }
        writeln!(out, "#count {}", rows.len())?;
        out.flush()
    })()
    .map_err(|e| EngageError::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<(u64, u64, [f64; 4])>> {
    let text = std::fs::read_to_string(path).map_err(|e| EngageError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == PREDICTIONS_HEADER => {}
        _ => return Err(EngageError::parse(path, 1, "bad predictions header")),
    }
    let mut rows = Vec::new();
    let mut counted: Option<usize> = None;
    for (ln, line) in lines {
        if let Some(rest) = line.strip_prefix("#count ") {
            counted = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| EngageError::parse(path, ln + 1, "bad #count"))?,
            );
            continue;
        }
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(EngageError::parse(path, ln + 1, "expected 6 fields"));
        }
        let bad = |_| EngageError::parse(path, ln + 1, "bad number");
        let tweet: u64 = fields[0].parse().map_err(bad)?;
        let user: u64 = fields[1].parse().map_err(bad)?;
        let mut p = [0.0f64; 4];
        for t in 0..4 {
            p[t] = fields[2 + t]
                .parse()
                .map_err(|_| EngageError::parse(path, ln + 1, "bad probability"))?;
        }
        rows.push((tweet, user, p));
    }
    if let Some(n) = counted {
        if n != rows.len() {
            return Err(EngageError::Data(format!(
                "{}: truncated predictions ({} rows, footer says {n})",
                path.display(),
                rows.len()
            )));
        }
    }
    Ok(rows)
}
