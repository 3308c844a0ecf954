//! Command-line driver for the engagement-prediction pipeline.
//!
//! Stages communicate through files in a working directory with fixed
//! names (log.tsv, followers.tsv, embeddings.tsv, codec.txt, plan.txt,
//! model.bin, holdout.txt, preds.tsv). Every artifact echoes a digest of
//! the config it was produced with; downstream stages verify it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use engage::config::{check_config_echo, RunConfig};
use engage::data::{
    generate_synthetic, read_embeddings, read_followers, read_log, write_embeddings,
    write_followers, write_log,
};
use engage::error::{EngageError, Result};
use engage::features::AssembledFeatures;
use engage::metrics::grouped_eval;
use engage::model::EngagePredictor;
use engage::partition::PartitionPlan;
use engage::pipeline::{
    assemble_all, input_layout, make_plan, read_predictions, sketch_params, split_holdout,
    train_on, write_predictions, AssembledSet,
};
use engage::sketch::{fit_codec, SketchCodec};

#[derive(Parser)]
#[command(name = "engage", about = "Tweet engagement prediction pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DirArg {
    /// Working directory holding the pipeline artifacts.
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interaction log, follower sets, and embeddings.
    Gen {
        #[command(flatten)]
        dir: DirArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the sketch codec on the token embeddings.
    FitSketch {
        #[command(flatten)]
        dir: DirArg,
    },
    /// Assign every log row to a leakage-controlled chunk.
    Partition {
        #[command(flatten)]
        dir: DirArg,
    },
    /// Assemble features, train the model, and write model.bin plus the
    /// holdout row list.
    Train {
        #[command(flatten)]
        dir: DirArg,
    },
    /// Score the holdout rows with a trained model.
    Predict {
        #[command(flatten)]
        dir: DirArg,
    },
    /// Evaluate predictions: AP and RCE overall and by popularity group.
    Eval {
        #[command(flatten)]
        dir: DirArg,
        /// Also print machine-readable metric lines.
        #[arg(long)]
        machine: bool,
    },
    /// Measure single-core prediction latency.
    Bench {
        #[command(flatten)]
        dir: DirArg,
        /// Exit non-zero if the p95 budget is exceeded.
        #[arg(long)]
        enforce: bool,
    },
    /// Run every stage in order.
    Run {
        #[command(flatten)]
        dir: DirArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

struct Paths {
    log: PathBuf,
    followers: PathBuf,
    embeddings: PathBuf,
    codec: PathBuf,
    plan: PathBuf,
    model: PathBuf,
    holdout: PathBuf,
    preds: PathBuf,
}

impl Paths {
    fn new(dir: &Path) -> Paths {
        Paths {
            log: dir.join("log.tsv"),
            followers: dir.join("followers.tsv"),
            embeddings: dir.join("embeddings.tsv"),
            codec: dir.join("codec.txt"),
            plan: dir.join("plan.txt"),
            model: dir.join("model.bin"),
            holdout: dir.join("holdout.txt"),
            preds: dir.join("preds.tsv"),
        }
    }
}

fn cmd_gen(cfg: &RunConfig, dir: &Path, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| EngageError::io(dir, e))?;
    let p = Paths::new(dir);
    let data = generate_synthetic(&cfg.generator, seed)?;
    write_log(&p.log, &data.log, Some(&cfg.echo()))?;
    write_followers(&p.followers, &data.followers)?;
    write_embeddings(&p.embeddings, &data.embeddings)?;
    println!(
        "gen: {} rows, {} users, seed {seed} -> {}",
        data.log.len(),
        cfg.generator.users,
        dir.display()
    );
    Ok(())
}

fn cmd_fit_sketch(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = Paths::new(dir);
    let emb = read_embeddings(&p.embeddings)?;
    let codec = fit_codec(&emb, &sketch_params(cfg, emb.dim))?;
    codec.write(&p.codec, Some(&cfg.echo()))?;
    println!(
        "fit-sketch: K={} W={} over {} tokens -> {}",
        cfg.sketch.depth,
        cfg.sketch.width,
        emb.vocab,
        p.codec.display()
    );
    Ok(())
}

fn cmd_partition(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = Paths::new(dir);
    check_config_echo(&p.log, cfg)?;
    let log = read_log(&p.log)?;
    let plan = make_plan(cfg, &log)?;
    plan.write(&p.plan, Some(&cfg.echo()))?;
    println!(
        "partition: {} rows into {} chunks ({}) -> {}",
        log.len(),
        plan.num_chunks,
        cfg.partition.mode,
        p.plan.display()
    );
    Ok(())
}

fn load_assembled(cfg: &RunConfig, p: &Paths) -> Result<(AssembledSet, PartitionPlan, Vec<u64>)> {
    check_config_echo(&p.log, cfg)?;
    check_config_echo(&p.codec, cfg)?;
    check_config_echo(&p.plan, cfg)?;
    let log = read_log(&p.log)?;
    let followers = read_followers(&p.followers)?;
    let codec = SketchCodec::read(&p.codec)?;
    let plan = PartitionPlan::read(&p.plan)?;
    if plan.chunk_of.len() != log.len() {
        return Err(EngageError::Data(format!(
            "plan covers {} rows but log has {}",
            plan.chunk_of.len(),
            log.len()
        )));
    }
    let set = assemble_all(&log, &followers, &codec, &plan, cfg)?;
    let ids = set.row_index.iter().map(|&i| log[i].tweet_id).collect();
    Ok((set, plan, ids))
}

fn cmd_train(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = Paths::new(dir);
    let (set, plan, _) = load_assembled(cfg, &p)?;
    let (train_rows, holdout) =
        split_holdout(set.features.len(), cfg.partition.holdout_fraction, cfg.partition.seed);
    let layout = input_layout(cfg);
    let outcome = train_on(cfg, &layout, &set, &train_rows, &plan)?;
    let predictor = EngagePredictor::freeze(&outcome.network);
    predictor.write(&p.model, &[cfg.echo()])?;
    let lines: Vec<String> = holdout.iter().map(|h| h.to_string()).collect();
    std::fs::write(
        &p.holdout,
        format!("#holdout v1\n#{}\n{}\n", cfg.echo(), lines.join("\n")),
    )
    .map_err(|e| EngageError::io(&p.holdout, e))?;
    for (i, loss) in outcome.epoch_losses.iter().enumerate() {
        println!("train: epoch {i} mean loss {loss:.6}");
    }
    println!(
        "train: {} rows ({} held out) -> {}",
        train_rows.len(),
        holdout.len(),
        p.model.display()
    );
    Ok(())
}

fn read_holdout(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| EngageError::io(path, e))?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| EngageError::parse(path, 0, "bad holdout index"))
        })
        .collect()
}

fn cmd_predict(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let p = Paths::new(dir);
    check_config_echo(&p.model, cfg)?;
    let (set, _, _) = load_assembled(cfg, &p)?;
    let predictor = EngagePredictor::read(&p.model)?;
    let holdout = read_holdout(&p.holdout)?;
    let log = read_log(&p.log)?;
    let mut scratch = predictor.scratch();
    let mut rows = Vec::with_capacity(holdout.len());
    for &h in &holdout {
        let i = set.row_index[h];
        let probs = predictor.forward_into(&set.features[h], &mut scratch)?;
        rows.push((log[i].tweet_id, log[i].engaging_user, probs));
    }
    write_predictions(&p.preds, Some(&cfg.echo()), &rows)?;
    println!("predict: {} rows -> {}", rows.len(), p.preds.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, dir: &Path, machine: bool) -> Result<()> {
    let p = Paths::new(dir);
    check_config_echo(&p.preds, cfg)?;
    let (set, _, _) = load_assembled(cfg, &p)?;
    let holdout = read_holdout(&p.holdout)?;
    let preds = read_predictions(&p.preds)?;
    if preds.len() != holdout.len() {
        return Err(EngageError::Data(format!(
            "{} predictions for {} holdout rows",
            preds.len(),
            holdout.len()
        )));
    }
    let scores: Vec<[f64; 4]> = preds.iter().map(|(_, _, p)| *p).collect();
    let labels: Vec<[bool; 4]> = holdout.iter().map(|&h| set.labels[h]).collect();
    let followers: Vec<u32> = holdout.iter().map(|&h| set.followers[h]).collect();
    let report = grouped_eval(&followers, &scores, &labels, cfg.metrics.groups)?;
    print!("{}", report.table());
    if machine {
        print!("{}", report.machine_lines());
    }
    for r in &report.reactions {
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
    }
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

fn cmd_bench(cfg: &RunConfig, dir: &Path, enforce: bool) -> Result<()> {
    let p = Paths::new(dir);
    check_config_echo(&p.model, cfg)?;
    let log = read_log(&p.log)?;
    let followers = read_followers(&p.followers)?;
    let codec = SketchCodec::read(&p.codec)?;
    let predictor = EngagePredictor::read(&p.model)?;
    // history = whole log: store size matches what inference would see
    let store = engage::features::build_store(&log, &followers, &cfg.store)?;
    let mut scratch = predictor.scratch();
    let mut features = AssembledFeatures::zeroed(predictor.sketch_len());

    let total = cfg.bench.warmup + cfg.bench.predictions;
    let mut samples = Vec::with_capacity(cfg.bench.predictions);
    let mut sink = 0.0f32;
    for i in 0..total {
        let record = &log[i % log.len()];
        let t = Instant::now();
        engage::features::assemble_into(record, &store, &codec, &mut features)?;
        let probs = predictor.forward_into(&features, &mut scratch)?;
        let dt = t.elapsed().as_secs_f64() * 1e3;
        sink += probs[0];
        if i >= cfg.bench.warmup {
            samples.push(dt);
        }
    }
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p50 = percentile(&samples, 0.50);
    let p95 = percentile(&samples, 0.95);
    let p99 = percentile(&samples, 0.99);
    let max = *samples.last().unwrap();
    println!(
        "bench: {} predictions, p50 {:.3} ms, p95 {:.3} ms, p99 {:.3} ms, max {:.3} ms (checksum {sink:.3})",
        samples.len(),
        p50,
        p95,
        p99,
        max
    );
    if p95 > cfg.bench.p95_budget_ms {
        let msg = format!(
            "p95 latency {:.3} ms exceeds budget {:.3} ms",
            p95, cfg.bench.p95_budget_ms
        );
        if enforce {
            return Err(EngageError::BudgetExceeded(msg));
        }
        eprintln!("warning: {msg}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::Gen { dir, seed } => cmd_gen(&cfg, &dir.dir, seed),
        Command::FitSketch { dir } => cmd_fit_sketch(&cfg, &dir.dir),
        Command::Partition { dir } => cmd_partition(&cfg, &dir.dir),
        Command::Train { dir } => cmd_train(&cfg, &dir.dir),
        Command::Predict { dir } => cmd_predict(&cfg, &dir.dir),
        Command::Eval { dir, machine } => cmd_eval(&cfg, &dir.dir, machine),
        Command::Bench { dir, enforce } => cmd_bench(&cfg, &dir.dir, enforce),
        Command::Run { dir, seed } => {
            cmd_gen(&cfg, &dir.dir, seed)?;
            cmd_fit_sketch(&cfg, &dir.dir)?;
            cmd_partition(&cfg, &dir.dir)?;
            cmd_train(&cfg, &dir.dir)?;
            cmd_predict(&cfg, &dir.dir)?;
            cmd_eval(&cfg, &dir.dir, false)?;
            cmd_bench(&cfg, &dir.dir, false)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
