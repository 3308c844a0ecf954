//! Average precision, relative cross-entropy, and popularity-grouped
//! aggregation.

use std::fmt::Write as _;

use crate::data::Reaction;
use crate::error::{EngageError, Result};

const CLAMP: f64 = 1e-7;

/// Average precision: mean of precision@k over the ranks of positive
/// labels, scores sorted descending. Ties keep stable input order.
/// Returns `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Relative cross-entropy: percentage improvement of the model's mean
/// binary cross-entropy over the prior that always predicts the empirical
/// positive rate. Scores are clamped to [1e-7, 1-1e-7]. Errors when the
/// labels are single-class.
pub fn rce(scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n = labels.len();
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n {
        return Err(EngageError::Data(
            "rce needs both positive and negative labels".into(),
        ));
    }
    let prior = positives as f64 / n as f64;
    let ce = |p: f64, y: bool| -> f64 {
        let p = p.clamp(CLAMP, 1.0 - CLAMP);
        if y {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        }
    };
    let ce_model: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| ce(s, y))
        .sum::<f64>()
        / n as f64;
    let ce_prior: f64 = labels.iter().map(|&y| ce(prior, y)).sum::<f64>() / n as f64;
    Ok(100.0 * (1.0 - ce_model / ce_prior))
}

#[derive(Debug, Clone, Default)]
pub struct GroupScore {
    pub size: usize,
    pub ap: Option<f64>,
    pub rce: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ReactionReport {
    pub reaction: Reaction,
    /// Ungrouped metrics over all rows.
    pub overall_ap: Option<f64>,
    pub overall_rce: Option<f64>,
    pub groups: Vec<GroupScore>,
    /// Arithmetic mean over groups that have a defined score.
    pub mean_ap: Option<f64>,
    pub mean_rce: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub num_groups: usize,
    pub reactions: [ReactionReport; 4],
}

/// Quantile group per row by engaged-user follower count: rows sorted by
/// (count, input order), ranks split into G equal slices. Ties fall to the
/// lower group via the stable order.
pub fn quantile_groups(follower_counts: &[u32], g: usize) -> Vec<usize> {
    let n = follower_counts.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (follower_counts[i], i));
    let mut group = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        group[i] = rank * g / n.max(1);
    }
    group
}

/// Per-reaction AP/RCE over G popularity groups plus their means.
///
/// `predictions[r][i]` is the score of reaction r on row i; labels likewise.
pub fn grouped_eval(
    follower_counts: &[u32],
    predictions: &[[f64; 4]],
    labels: &[[bool; 4]],
    g: usize,
) -> Result<EvalReport> {
    if g == 0 {
        return Err(EngageError::Config("group count must be >= 1".into()));
    }
    let n = follower_counts.len();
    if predictions.len() != n || labels.len() != n {
        return Err(EngageError::Data("eval input length mismatch".into()));
    }
    if n == 0 {
        return Err(EngageError::Data("empty eval set".into()));
    }
    let groups = quantile_groups(follower_counts, g);

    let build = |reaction: Reaction| -> ReactionReport {
        let r = reaction as usize;
        let all_scores: Vec<f64> = predictions.iter().map(|p| p[r]).collect();
        let all_labels: Vec<bool> = labels.iter().map(|l| l[r]).collect();
        let mut warnings = Vec::new();
        let mut group_scores = Vec::with_capacity(g);
        for gi in 0..g {
            let idx: Vec<usize> = (0..n).filter(|&i| groups[i] == gi).collect();
            let scores: Vec<f64> = idx.iter().map(|&i| all_scores[i]).collect();
            let lab: Vec<bool> = idx.iter().map(|&i| all_labels[i]).collect();
            let ap = average_precision(&scores, &lab);
            if ap.is_none() {
                warnings.push(format!(
                    "{}: group {gi} has no positives; excluded from mean",
                    reaction.name()
                ));
            }
            let rce_v = rce(&scores, &lab).ok();
            group_scores.push(GroupScore {
                size: idx.len(),
                ap,
                rce: rce_v,
            });
        }
        let mean = |f: &dyn Fn(&GroupScore) -> Option<f64>| {
            let vals: Vec<f64> = group_scores.iter().filter_map(f).collect();
            if vals.is_empty() {
                None
            } else {
                Some(vals.iter().sum::<f64>() / vals.len() as f64)
            }
        };
        ReactionReport {
            reaction,
            overall_ap: average_precision(&all_scores, &all_labels),
            overall_rce: rce(&all_scores, &all_labels).ok(),
            mean_ap: mean(&|s| s.ap),
            mean_rce: mean(&|s| s.rce),
            groups: group_scores,
            warnings,
        }
    };

    Ok(EvalReport {
        num_groups: g,
        reactions: [
            build(Reaction::Like),
            build(Reaction::Reply),
            build(Reaction::Retweet),
            build(Reaction::Quote),
        ],
    })
}

impl EvalReport {
    /// Aligned human-readable table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<10} {:>10} {:>10} {:>10} {:>10}",
            "reaction", "AP", "RCE", "groupAP", "groupRCE"
        );
        for r in &self.reactions {
            let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
            let _ = writeln!(
                out,
                "{:<10} {:>10} {:>10} {:>10} {:>10}",
                r.reaction.name(),
                f(r.overall_ap),
                f(r.overall_rce),
                f(r.mean_ap),
                f(r.mean_rce)
            );
        }
        for r in &self.reactions {
            for wmsg in &r.warnings {
                let _ = writeln!(out, "warning: {wmsg}");
            }
        }
        out
    }

    /// Machine-readable lines: `metric<TAB>reaction<TAB>group<TAB>value`.
    /// Group `mean` carries the across-group average, `all` the ungrouped
    /// score.
    pub fn machine_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.reactions {
            let name = r.reaction.name();
            let mut emit = |metric: &str, group: String, v: Option<f64>| {
                if let Some(v) = v {
                    let _ = writeln!(out, "{metric}\t{name}\t{group}\t{v:.12}");
                }
            };
            emit("ap", "all".into(), r.overall_ap);
            emit("rce", "all".into(), r.overall_rce);
            for (gi, gscore) in r.groups.iter().enumerate() {
                emit("ap", gi.to_string(), gscore.ap);
                emit("rce", gi.to_string(), gscore.rce);
            }
            emit("ap", "mean".into(), r.mean_ap);
            emit("rce", "mean".into(), r.mean_rce);
        }
        out
    }
}
