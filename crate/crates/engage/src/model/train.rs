//! Dataset packing and the two-stage AdamW training loop.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::error::Result;
use crate::features::{AssembledFeatures, CAT_COUNT};

use super::config::ModelConfig;
use super::layout::InputLayout;
use super::net::Network;

/// One training example with the dense part of the input precomputed.
/// The embedding segment stays zero; the network fills it from the current
/// tables each time the row is used.
#[derive(Debug, Clone)]
pub struct TrainRow {
    pub static_input: Vec<f64>,
    pub cats: [u32; CAT_COUNT],
    pub targets: [f64; 4],
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: Vec<TrainRow>,
}

fn signed_log1p(x: f64) -> f64 {
    x.signum() * x.abs().ln_1p()
}

impl Dataset {
    pub fn from_features(
        features: &[AssembledFeatures],
        labels: &[[bool; 4]],
        layout: &InputLayout,
        pre_log: bool,
    ) -> Dataset {
        assert_eq!(features.len(), labels.len());
        let rows = features
            .iter()
            .zip(labels)
            .map(|(f, y)| Self::pack_row(f, *y, layout, pre_log))
            .collect();
        Dataset { rows }
    }

    pub fn pack_row(
        f: &AssembledFeatures,
        y: [bool; 4],
        layout: &InputLayout,
        pre_log: bool,
    ) -> TrainRow {
        let mut input = vec![0.0f64; layout.input_dim()];
        for (dst, &s) in input[..layout.sketch_len].iter_mut().zip(&f.sketch) {
            *dst = s as f64;
        }
        let mut off = layout.sketch_len;
        let w = layout.scales.width();
        for &raw in f.numeric.iter() {
            let x = if pre_log { signed_log1p(raw) } else { raw };
            layout
                .scales
                .encode_into(x, &mut input[off..off + w])
                .expect("numeric features are finite");
            off += w;
        }
        let so = layout.strengths_offset();
        input[so..so + 4].copy_from_slice(&f.community_strengths);
        TrainRow {
            static_input: input,
            cats: f.categorical,
            targets: std::array::from_fn(|t| if y[t] { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub network: Network,
    /// Mean batch loss per epoch, stage 1 then stage 2.
    pub epoch_losses: Vec<f64>,
}

struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    fn new(net: &Network) -> AdamW {
        let shapes: Vec<usize> = net.params.tensors().iter().map(|t| t.len()).collect();
        AdamW {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, net: &mut Network, grads: &Params, lr: f64) {
        self.step += 1;
        let cfg = net.config.clone();
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let decay_mask = net.params.decay_mask();
        let gts = grads.tensors();
        for (ti, param) in net.params.tensors_mut().into_iter().enumerate() {
            let g = gts[ti];
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            let wd = if decay_mask[ti] { cfg.weight_decay } else { 0.0 };
            for i in 0..param.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                param[i] -= lr * (mhat / (vhat.sqrt() + 1e-8) + wd * param[i]);
            }
        }
    }
}

use super::net::Params;

fn run_stage(
    net: &mut Network,
    data: &Dataset,
    epochs: usize,
    rng: &mut ChaCha20Rng,
    losses: &mut Vec<f64>,
    step_base: usize,
) -> Result<usize> {
    if epochs == 0 || data.is_empty() {
        return Ok(step_base);
    }
    let batch = net.config.batch_size;
    let batches_per_epoch = data.len().div_ceil(batch);
    let total_steps = (epochs * batches_per_epoch) as f64;
    let base_lr = net.config.lr;
    let mut opt = AdamW::new(net);
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _epoch in 0..epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let rows: Vec<&TrainRow> = chunk.iter().map(|&i| &data.rows[i]).collect();
            let lr = base_lr * (1.0 - step as f64 / total_steps);
            let (cache, loss) = net.forward_batch(&rows, true);
            net.check_finite(loss, step_base + step)?;
            epoch_loss += loss;
            let mut grads = net.params.zeros_like();
            net.backward_batch(&cache, &rows, &mut grads);
            opt.apply(net, &grads, lr);
            step += 1;
        }
        losses.push(epoch_loss / batches_per_epoch as f64);
    }
    Ok(step_base + step)
}

/// Two-stage training: `stage1` epochs on the main split, then `stage2`
/// epochs of fine-tuning on the second split with a freshly restarted
/// linear learning-rate decay and optimizer state.
pub fn train(
    config: &ModelConfig,
    layout: &InputLayout,
    stage1: &Dataset,
    stage2: Option<&Dataset>,
) -> Result<TrainOutcome> {
    let mut net = Network::new(layout.clone(), config.clone())?;
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut losses = Vec::new();
    let after = run_stage(
        &mut net,
        stage1,
        config.epochs_stage1,
        &mut rng,
        &mut losses,
        0,
    )?;
    if let Some(data2) = stage2 {
        run_stage(
            &mut net,
            data2,
            config.epochs_stage2,
            &mut rng,
            &mut losses,
            after,
        )?;
    }
    Ok(TrainOutcome {
        network: net,
        epoch_losses: losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::CategoricalLayout;
    use crate::fourier::FourierScales;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            hidden_width: 16,
            hidden_layers: 2,
            max_embed_dim: 3,
            languages: 4,
            batch_size: 8,
            epochs_stage1: 2,
            epochs_stage2: 1,
            lr: 1e-3,
            ..ModelConfig::default()
        }
    }

    fn tiny_layout(cfg: &ModelConfig) -> InputLayout {
        InputLayout::new(32, FourierScales::default(), cfg)
    }

    fn synth_dataset(layout: &InputLayout, n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cats_layout = CategoricalLayout::new(4);
        let rows = (0..n)
            .map(|_| {
                let f = AssembledFeatures {
                    sketch: (0..32).map(|_| rng.gen_range(0.0f32..1.0)).collect(),
                    numeric: std::array::from_fn(|_| rng.gen_range(0.0..50.0)),
                    categorical: std::array::from_fn(|i| {
                        rng.gen_range(0..cats_layout.vocab_sizes[i] as u32)
                    }),
                    community_strengths: std::array::from_fn(|_| rng.gen_range(0.0..1.0)),
                };
                let y = std::array::from_fn(|_| rng.gen_bool(0.3));
                Dataset::pack_row(&f, y, layout, false)
            })
            .collect();
        Dataset { rows }
    }

    #[test]
    fn zero_epochs_leaves_weights_at_init() {
        let mut cfg = tiny_config();
        cfg.epochs_stage1 = 0;
        cfg.epochs_stage2 = 0;
        let layout = tiny_layout(&cfg);
        let data = synth_dataset(&layout, 16, 1);
        let out = train(&cfg, &layout, &data, None).unwrap();
        let fresh = Network::new(layout, cfg).unwrap();
        assert_eq!(out.network.params, fresh.params);
        assert!(out.epoch_losses.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_weights() {
        let cfg = tiny_config();
        let layout = tiny_layout(&cfg);
        let d1 = synth_dataset(&layout, 40, 2);
        let d2 = synth_dataset(&layout, 12, 3);
        let a = train(&cfg, &layout, &d1, Some(&d2)).unwrap();
        let b = train(&cfg, &layout, &d1, Some(&d2)).unwrap();
        assert_eq!(a.network.params, b.network.params);
        assert_eq!(a.network.bn_stats, b.network.bn_stats);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn loss_decreases_on_learnable_data() {
        let mut cfg = tiny_config();
        cfg.epochs_stage1 = 8;
        cfg.epochs_stage2 = 0;
        cfg.lr = 3e-3;
        let layout = tiny_layout(&cfg);
        // labels fully determined by one categorical slot -> learnable
        let mut data = synth_dataset(&layout, 200, 4);
        for row in &mut data.rows {
            let hot = row.cats[0] % 2 == 0;
            row.targets = std::array::from_fn(|_| if hot { 1.0 } else { 0.0 });
        }
        let out = train(&cfg, &layout, &data, None).unwrap();
        let first = out.epoch_losses[0];
        let last = *out.epoch_losses.last().unwrap();
        assert!(
            last < first * 0.8,
            "loss did not drop: first={first} last={last}"
        );
    }

    #[test]
    fn epoch_loss_count_matches_stages() {
        let cfg = tiny_config();
        let layout = tiny_layout(&cfg);
        let d1 = synth_dataset(&layout, 24, 5);
        let d2 = synth_dataset(&layout, 24, 6);
        let out = train(&cfg, &layout, &d1, Some(&d2)).unwrap();
        assert_eq!(
            out.epoch_losses.len(),
            cfg.epochs_stage1 + cfg.epochs_stage2
        );
    }
}
