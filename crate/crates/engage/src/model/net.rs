//! Forward/backward pass of the residual feed-forward network.
//!
//! Hidden block: linear -> batch norm -> leaky ReLU, with an identity skip
//! between consecutive equal-width blocks (the first projection block has
//! none). Output head: linear -> sigmoid per reaction. All math is f64 and
//! single-threaded so fixed seeds give bitwise-identical weights.

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;

use crate::error::{EngageError, Result};
use crate::features::CAT_COUNT;

use super::config::ModelConfig;
use super::layout::InputLayout;
use super::train::TrainRow;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const NUM_TASKS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    /// out x in, row-major.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub in_dim: usize,
    pub out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub embed: Vec<Vec<f64>>,
    pub blocks: Vec<BlockParams>,
    /// NUM_TASKS x hidden, row-major.
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl Params {
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut v: Vec<&Vec<f64>> = self.embed.iter().collect();
        for b in &self.blocks {
            v.push(&b.w);
            v.push(&b.b);
            v.push(&b.gamma);
            v.push(&b.beta);
        }
        v.push(&self.out_w);
        v.push(&self.out_b);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut v: Vec<&mut Vec<f64>> = self.embed.iter_mut().collect();
        for b in &mut self.blocks {
            v.push(&mut b.w);
            v.push(&mut b.b);
            v.push(&mut b.gamma);
            v.push(&mut b.beta);
        }
        v.push(&mut self.out_w);
        v.push(&mut self.out_b);
        v
    }

    /// Whether weight decay applies, per tensor, in `tensors()` order.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut v = vec![true; self.embed.len()];
        for _ in &self.blocks {
            v.extend_from_slice(&[true, false, false, false]);
        }
        v.push(true);
        v.push(false);
        v
    }

    pub fn zeros_like(&self) -> Params {
        Params {
            embed: self.embed.iter().map(|t| vec![0.0; t.len()]).collect(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockParams {
                    w: vec![0.0; b.w.len()],
                    b: vec![0.0; b.b.len()],
                    gamma: vec![0.0; b.gamma.len()],
                    beta: vec![0.0; b.beta.len()],
                    in_dim: b.in_dim,
                    out_dim: b.out_dim,
                })
                .collect(),
            out_w: vec![0.0; self.out_w.len()],
            out_b: vec![0.0; self.out_b.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub layout: InputLayout,
    pub config: ModelConfig,
    pub params: Params,
    pub bn_stats: Vec<BnStats>,
}

/// Everything the backward pass needs from one forward pass.
pub struct BatchCache {
    pub batch: usize,
    pub x: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    pub xhat: Vec<Vec<f64>>,
    pub std_inv: Vec<Vec<f64>>,
    pub bn_out: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Network {
    pub fn new(layout: InputLayout, config: ModelConfig) -> Result<Network> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let mut uniform = |n: usize, scale: f64| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
        };
        let embed = (0..CAT_COUNT)
            .map(|i| {
                let n = layout.cats.vocab_sizes[i] * layout.embed_dims[i];
                uniform(n, 0.1)
            })
            .collect();
        let h = config.hidden_width;
        let mut blocks = Vec::with_capacity(config.hidden_layers);
        let mut in_dim = layout.input_dim();
        for _ in 0..config.hidden_layers {
            let scale = 1.0 / (in_dim as f64).sqrt();
            blocks.push(BlockParams {
                w: uniform(h * in_dim, scale),
                b: vec![0.0; h],
                gamma: vec![1.0; h],
                beta: vec![0.0; h],
                in_dim,
                out_dim: h,
            });
            in_dim = h;
        }
        let out_scale = 1.0 / (h as f64).sqrt();
        let params = Params {
            embed,
            blocks,
            out_w: uniform(NUM_TASKS * h, out_scale),
            out_b: vec![0.0; NUM_TASKS],
        };
        let bn_stats = (0..config.hidden_layers)
            .map(|_| BnStats {
                mean: vec![0.0; h],
                var: vec![1.0; h],
            })
            .collect();
        Ok(Network {
            layout,
            config,
            params,
            bn_stats,
        })
    }

    /// Copy one row into the dense input vector, filling the embedding
    /// segment from the current tables.
    pub fn build_input(&self, row: &TrainRow, out: &mut [f64]) {
        out.copy_from_slice(&row.static_input);
        if self.config.zero_sketch {
            out[..self.layout.sketch_len].fill(0.0);
        }
        for i in 0..CAT_COUNT {
            let dim = self.layout.embed_dims[i];
            let vocab = self.layout.cats.vocab_sizes[i];
            let id = (row.cats[i] as usize) % vocab;
            let src = &self.params.embed[i][id * dim..(id + 1) * dim];
            let off = self.layout.embed_offset(i);
            out[off..off + dim].copy_from_slice(src);
        }
    }

    /// Training-mode forward over a batch. Batch-norm uses batch statistics;
    /// running statistics are updated only when `update_running` is set.
    pub fn forward_batch(
        &mut self,
        rows: &[&TrainRow],
        update_running: bool,
    ) -> (BatchCache, f64) {
        let batch = rows.len();
        let in_dim = self.layout.input_dim();
        let h = self.config.hidden_width;
        let slope = self.config.leaky_relu_slope;

        let mut x = vec![0.0; batch * in_dim];
        for (bi, row) in rows.iter().enumerate() {
            let dst = &mut x[bi * in_dim..(bi + 1) * in_dim];
            // inline build_input to appease the borrow on self
            dst.copy_from_slice(&row.static_input);
            if self.config.zero_sketch {
                dst[..self.layout.sketch_len].fill(0.0);
            }
            for i in 0..CAT_COUNT {
                let dim = self.layout.embed_dims[i];
                let vocab = self.layout.cats.vocab_sizes[i];
                let id = (row.cats[i] as usize) % vocab;
                let src = &self.params.embed[i][id * dim..(id + 1) * dim];
                let off = self.layout.embed_offset(i);
                dst[off..off + dim].copy_from_slice(src);
            }
        }

        let n_blocks = self.params.blocks.len();
        let mut z = Vec::with_capacity(n_blocks);
        let mut xhat = Vec::with_capacity(n_blocks);
        let mut std_inv = Vec::with_capacity(n_blocks);
        let mut bn_out = Vec::with_capacity(n_blocks);
        let mut hs: Vec<Vec<f64>> = Vec::with_capacity(n_blocks);

        for l in 0..n_blocks {
            let block = &self.params.blocks[l];
            let input: &[f64] = if l == 0 { &x } else { &hs[l - 1] };
            let (bin, bout) = (block.in_dim, block.out_dim);
            let mut zl = vec![0.0; batch * bout];
            for bi in 0..batch {
                let xrow = &input[bi * bin..(bi + 1) * bin];
                let zrow = &mut zl[bi * bout..(bi + 1) * bout];
                for o in 0..bout {
                    let wrow = &block.w[o * bin..(o + 1) * bin];
                    let mut acc = block.b[o];
                    for i in 0..bin {
                        acc += wrow[i] * xrow[i];
                    }
                    zrow[o] = acc;
                }
            }
            // batch norm over the batch dimension
            let nb = batch as f64;
            let mut mean = vec![0.0; bout];
            let mut var = vec![0.0; bout];
            for bi in 0..batch {
                for o in 0..bout {
                    mean[o] += zl[bi * bout + o];
                }
            }
            for m in mean.iter_mut() {
                *m /= nb;
            }
            for bi in 0..batch {
                for o in 0..bout {
                    let d = zl[bi * bout + o] - mean[o];
                    var[o] += d * d;
                }
            }
            for v in var.iter_mut() {
                *v /= nb;
            }
            if update_running {
                let stats = &mut self.bn_stats[l];
                for o in 0..bout {
                    stats.mean[o] = (1.0 - BN_MOMENTUM) * stats.mean[o] + BN_MOMENTUM * mean[o];
                    stats.var[o] = (1.0 - BN_MOMENTUM) * stats.var[o] + BN_MOMENTUM * var[o];
                }
            }
            let inv: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let mut xh = vec![0.0; batch * bout];
            let mut bo = vec![0.0; batch * bout];
            let mut hl = vec![0.0; batch * bout];
            for bi in 0..batch {
                for o in 0..bout {
                    let idx = bi * bout + o;
                    let xv = (zl[idx] - mean[o]) * inv[o];
                    xh[idx] = xv;
                    let y = block.gamma[o] * xv + block.beta[o];
                    bo[idx] = y;
                    let a = if y >= 0.0 { y } else { slope * y };
                    hl[idx] = if l > 0 { a + hs[l - 1][idx] } else { a };
                }
            }
            z.push(zl);
            xhat.push(xh);
            std_inv.push(inv);
            bn_out.push(bo);
            hs.push(hl);
        }

        let last = &hs[n_blocks - 1];
        let mut probs = vec![0.0; batch * NUM_TASKS];
        let mut loss = 0.0f64;
        for bi in 0..batch {
            let hrow = &last[bi * h..(bi + 1) * h];
            for t in 0..NUM_TASKS {
                let wrow = &self.params.out_w[t * h..(t + 1) * h];
                let mut acc = self.params.out_b[t];
                for i in 0..h {
                    acc += wrow[i] * hrow[i];
                }
                let p = sigmoid(acc);
                probs[bi * NUM_TASKS + t] = p;
                let y = rows[bi].targets[t];
                let pc = p.clamp(1e-12, 1.0 - 1e-12);
                loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            }
        }
        loss /= batch as f64;

        (
            BatchCache {
                batch,
                x,
                z,
                xhat,
                std_inv,
                bn_out,
                h: hs,
                probs,
            },
            loss,
        )
    }

    /// Accumulate gradients of the mean summed-BCE loss into `grads`.
    pub fn backward_batch(&self, cache: &BatchCache, rows: &[&TrainRow], grads: &mut Params) {
        let batch = cache.batch;
        let nb = batch as f64;
        let h = self.config.hidden_width;
        let n_blocks = self.params.blocks.len();
        let slope = self.config.leaky_relu_slope;

        // output head
        let mut dlogits = vec![0.0; batch * NUM_TASKS];
        for bi in 0..batch {
            for t in 0..NUM_TASKS {
                let idx = bi * NUM_TASKS + t;
                dlogits[idx] = (cache.probs[idx] - rows[bi].targets[t]) / nb;
            }
        }
        let last = &cache.h[n_blocks - 1];
        let mut dh = vec![0.0; batch * h];
        for bi in 0..batch {
            let hrow = &last[bi * h..(bi + 1) * h];
            let dhrow = &mut dh[bi * h..(bi + 1) * h];
            for t in 0..NUM_TASKS {
                let g = dlogits[bi * NUM_TASKS + t];
                grads.out_b[t] += g;
                let gw = &mut grads.out_w[t * h..(t + 1) * h];
                let w = &self.params.out_w[t * h..(t + 1) * h];
                for i in 0..h {
                    gw[i] += g * hrow[i];
                    dhrow[i] += g * w[i];
                }
            }
        }

        // hidden blocks, reversed
        for l in (0..n_blocks).rev() {
            let block = &self.params.blocks[l];
            let (bin, bout) = (block.in_dim, block.out_dim);
            // dh -> dact (skip passes dh through to the previous block)
            let mut dbn = vec![0.0; batch * bout];
            for bi in 0..batch {
                for o in 0..bout {
                    let idx = bi * bout + o;
                    let da = dh[idx];
                    let y = cache.bn_out[l][idx];
                    dbn[idx] = if y >= 0.0 { da } else { slope * da };
                }
            }
            // batch-norm backward with batch statistics
            let gblock = &mut grads.blocks[l];
            let mut dz = vec![0.0; batch * bout];
            for o in 0..bout {
                let mut sum_dxhat = 0.0;
                let mut sum_dxhat_xhat = 0.0;
                for bi in 0..batch {
                    let idx = bi * bout + o;
                    let dxh = dbn[idx] * block.gamma[o];
                    sum_dxhat += dxh;
                    sum_dxhat_xhat += dxh * cache.xhat[l][idx];
                    gblock.gamma[o] += dbn[idx] * cache.xhat[l][idx];
                    gblock.beta[o] += dbn[idx];
                }
                let inv = cache.std_inv[l][o];
                for bi in 0..batch {
                    let idx = bi * bout + o;
                    let dxh = dbn[idx] * block.gamma[o];
                    dz[idx] = inv / nb
                        * (nb * dxh - sum_dxhat - cache.xhat[l][idx] * sum_dxhat_xhat);
                }
            }
            // linear backward
            let input: &[f64] = if l == 0 { &cache.x } else { &cache.h[l - 1] };
            let mut dinput = vec![0.0; batch * bin];
            for bi in 0..batch {
                let xrow = &input[bi * bin..(bi + 1) * bin];
                let dxrow = &mut dinput[bi * bin..(bi + 1) * bin];
                for o in 0..bout {
                    let g = dz[bi * bout + o];
                    gblock.b[o] += g;
                    let gw = &mut gblock.w[o * bin..(o + 1) * bin];
                    let w = &block.w[o * bin..(o + 1) * bin];
                    for i in 0..bin {
                        gw[i] += g * xrow[i];
                        dxrow[i] += g * w[i];
                    }
                }
            }
            if l > 0 {
                // skip connection: dh_{l-1} receives both paths
                for i in 0..batch * bin {
                    dh[i] += dinput[i];
                }
            } else {
                // embedding gradients from the input segment
                let in_dim = self.layout.input_dim();
                for (bi, row) in rows.iter().enumerate() {
                    for ci in 0..CAT_COUNT {
                        let dim = self.layout.embed_dims[ci];
                        let vocab = self.layout.cats.vocab_sizes[ci];
                        let id = (row.cats[ci] as usize) % vocab;
                        let off = self.layout.embed_offset(ci);
                        let src = &dinput[bi * in_dim + off..bi * in_dim + off + dim];
                        let dst = &mut grads.embed[ci][id * dim..(id + 1) * dim];
                        for d in 0..dim {
                            dst[d] += src[d];
                        }
                    }
                }
            }
        }
    }

    /// Loss only, for finite-difference checks. Does not touch running
    /// statistics.
    pub fn batch_loss(&mut self, rows: &[&TrainRow]) -> f64 {
        self.forward_batch(rows, false).1
    }
}

impl std::fmt::Debug for BatchCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BatchCache(batch={})", self.batch)
    }
}

#[allow(unused)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<Network>();
}

impl Network {
    /// Loss of the constant prior predictor on the same rows, for lift
    /// checks.
    pub fn prior_loss(rows: &[&TrainRow]) -> f64 {
        let n = rows.len() as f64;
        let mut loss = 0.0;
        for t in 0..NUM_TASKS {
            let pos: f64 = rows.iter().map(|r| r.targets[t]).sum();
            let p = (pos / n).clamp(1e-12, 1.0 - 1e-12);
            loss -= pos * p.ln() + (n - pos) * (1.0 - p).ln();
        }
        loss / n
    }

    pub fn check_finite(&self, loss: f64, step: usize) -> Result<()> {
        if !loss.is_finite() {
            return Err(EngageError::Diverged {
                step,
                msg: format!("loss = {loss}"),
            });
        }
        Ok(())
    }
}
