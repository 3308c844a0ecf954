//! Finite-difference verification of the analytic gradients.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use super::net::{BatchCache, Network};
use super::train::TrainRow;

/// Leaky-ReLU activation sign pattern; finite differences are only valid
/// when the secant does not cross a kink, so perturbed evaluations must
/// agree on this.
fn sign_pattern(cache: &BatchCache) -> Vec<bool> {
    cache
        .bn_out
        .iter()
        .flat_map(|layer| layer.iter().map(|&y| y >= 0.0))
        .collect()
}

/// Compare analytic gradients against central finite differences on a
/// random subset of `samples` parameters per tensor. Returns the maximum
/// relative error max(|a-n| / max(|a|, |n|, 1e-8)). Samples whose +/-h
/// evaluations straddle a leaky-ReLU kink are skipped: the loss is not
/// differentiable there and the secant says nothing about the gradient.
pub fn gradient_check(
    net: &mut Network,
    rows: &[&TrainRow],
    samples: usize,
    seed: u64,
) -> f64 {
    let h = 1e-5;
    let (cache, _) = net.forward_batch(rows, false);
    let mut grads = net.params.zeros_like();
    net.backward_batch(&cache, rows, &mut grads);

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    let n_tensors = net.params.tensors().len();
    for ti in 0..n_tensors {
        let len = net.params.tensors()[ti].len();
        if len == 0 {
            continue;
        }
        let picks: Vec<usize> = (0..samples.min(len))
            .map(|_| rng.gen_range(0..len))
            .collect();
        for &i in &picks {
            let orig = net.params.tensors()[ti][i];
            net.params.tensors_mut()[ti][i] = orig + h;
            let (up_cache, up) = net.forward_batch(rows, false);
            net.params.tensors_mut()[ti][i] = orig - h;
            let (down_cache, down) = net.forward_batch(rows, false);
            net.params.tensors_mut()[ti][i] = orig;
            if sign_pattern(&up_cache) != sign_pattern(&down_cache) {
                continue;
            }
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors()[ti][i];
            // Below this absolute difference the secant is dominated by
            // floating-point cancellation (eps * |loss| / h), not by any
            // gradient disagreement; linear-layer biases feeding batch
            // norm, for instance, have an exactly-zero true gradient.
            if (analytic - numeric).abs() < 1e-9 {
                continue;
            }
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / denom;
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::AssembledFeatures;
    use crate::fourier::FourierScales;
    use crate::model::{Dataset, InputLayout, ModelConfig};

    fn make_net(layers: usize, seed: u64) -> (Network, Vec<TrainRow>) {
        let cfg = ModelConfig {
            hidden_width: 12,
            hidden_layers: layers,
            max_embed_dim: 3,
            languages: 4,
            seed,
            ..ModelConfig::default()
        };
        let layout = InputLayout::new(16, FourierScales::default(), &cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xabcd);
        let rows: Vec<TrainRow> = (0..12)
            .map(|_| {
                let f = AssembledFeatures {
                    sketch: (0..16).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
                    numeric: std::array::from_fn(|_| rng.gen_range(0.0..20.0)),
                    categorical: std::array::from_fn(|i| {
                        rng.gen_range(0..layout.cats.vocab_sizes[i] as u32)
                    }),
                    community_strengths: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
                };
                let y = std::array::from_fn(|_| rng.gen_bool(0.4));
                Dataset::pack_row(&f, y, &layout, false)
            })
            .collect();
        let net = Network::new(layout, cfg).unwrap();
        (net, rows)
    }

    #[test]
    fn single_block_gradients_match() {
        let (mut net, rows) = make_net(1, 7);
        let refs: Vec<&TrainRow> = rows.iter().collect();
        let err = gradient_check(&mut net, &refs, 20, 99);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn deep_residual_gradients_match() {
        let (mut net, rows) = make_net(3, 8);
        let refs: Vec<&TrainRow> = rows.iter().collect();
        let err = gradient_check(&mut net, &refs, 20, 100);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn check_does_not_mutate_state() {
        let (mut net, rows) = make_net(2, 9);
        let refs: Vec<&TrainRow> = rows.iter().collect();
        let params_before = net.params.clone();
        let stats_before = net.bn_stats.clone();
        gradient_check(&mut net, &refs, 5, 101);
        assert_eq!(net.params, params_before);
        assert_eq!(net.bn_stats, stats_before);
    }
}
