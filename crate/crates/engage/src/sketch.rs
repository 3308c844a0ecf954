//! Density-aware LSH partitionings over token embeddings and additive,
//! row-normalized tweet sketches.
//!
//! A codec holds K independent partitionings of the embedding space, each
//! with W = 2^b regions cut by b random hyperplanes. Hyperplane offsets are
//! taken from projections of sampled data points, so cut positions follow
//! the data distribution. A tweet sketch is the per-region token count at
//! every depth, L2-normalized per depth row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Embeddings;
use crate::error::{EngageError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchParams {
    /// Number of independent partitionings.
    pub depth: usize,
    /// Regions per partitioning; power of two.
    pub width: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    /// When false, offsets are drawn uniformly over the projection range
    /// instead of from data-point projections (comparison baseline).
    #[serde(default = "default_true")]
    pub density_aware: bool,
}

fn default_true() -> bool {
    true
}

impl SketchParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(EngageError::Config("sketch depth must be >= 1".into()));
        }
        if self.width < 2 || !self.width.is_power_of_two() {
            return Err(EngageError::Config(
                "sketch width must be a power of two >= 2".into(),
            ));
        }
        if self.embedding_dim == 0 {
            return Err(EngageError::Config("embedding dim must be positive".into()));
        }
        Ok(())
    }

    pub fn bits(&self) -> usize {
        self.width.trailing_zeros() as usize
    }

    pub fn sketch_len(&self) -> usize {
        self.depth * self.width
    }
}

/// One cutting hyperplane: projection direction plus scalar offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub direction: Vec<f64>,
    pub offset: f64,
}

/// Fitted partitioning: hyperplanes per depth and the dense token-to-region
/// assignment table.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchCodec {
    pub params: SketchParams,
    /// depth * bits hyperplanes, depth-major.
    pub planes: Vec<Hyperplane>,
    /// vocab * depth region ids, token-major.
    pub assignments: Vec<u16>,
    pub vocab: usize,
}

/// K x W region-count matrix, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    pub depth: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

pub fn fit_codec(embeddings: &Embeddings, params: &SketchParams) -> Result<SketchCodec> {
    params.validate()?;
    if embeddings.dim != params.embedding_dim {
        return Err(EngageError::Config(format!(
            "embedding dim {} does not match sketch params dim {}",
            embeddings.dim, params.embedding_dim
        )));
    }
    if embeddings.vocab < params.width {
        return Err(EngageError::Data(format!(
            "vocab {} smaller than sketch width {}",
            embeddings.vocab, params.width
        )));
    }
    if embeddings.data.iter().any(|v| !v.is_finite()) {
        return Err(EngageError::Data("non-finite embedding value".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
    let bits = params.bits();
    let dim = params.embedding_dim;
    let mut planes = Vec::with_capacity(params.depth * bits);
    for _ in 0..params.depth {
        for _ in 0..bits {
            let direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let offset = if params.density_aware {
                // cut through a uniformly sampled data point
                let p = rng.gen_range(0..embeddings.vocab);
                dot(&direction, embeddings.row(p))
            } else {
                let projections: Vec<f64> = (0..embeddings.vocab)
                    .map(|i| dot(&direction, embeddings.row(i)))
                    .collect();
                let lo = projections.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = projections.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                rng.gen_range(lo..=hi)
            };
            planes.push(Hyperplane { direction, offset });
        }
    }

    let mut assignments = vec![0u16; embeddings.vocab * params.depth];
    for token in 0..embeddings.vocab {
        let row = embeddings.row(token);
        for k in 0..params.depth {
            let mut region = 0u16;
            for b in 0..bits {
                let plane = &planes[k * bits + b];
                if dot(&plane.direction, row) - plane.offset > 0.0 {
                    region |= 1 << b;
                }
            }
            assignments[token * params.depth + k] = region;
        }
    }

    Ok(SketchCodec {
        params: *params,
        planes,
        assignments,
        vocab: embeddings.vocab,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SketchCodec {
    /// Region ids for one token, one per depth.
    pub fn regions(&self, token: u32) -> Option<&[u16]> {
        let t = token as usize;
        if t >= self.vocab {
            return None;
        }
        Some(&self.assignments[t * self.params.depth..(t + 1) * self.params.depth])
    }

    /// Raw (pre-normalization) region counts for a token sequence, written
    /// into `out` (length depth*width). Out-of-vocabulary tokens contribute
    /// nothing.
    pub fn count_into(&self, tokens: &[u32], out: &mut [f32]) {
        debug_assert_eq!(out.len(), self.params.sketch_len());
        out.fill(0.0);
        let w = self.params.width;
        for &t in tokens {
            if let Some(regions) = self.regions(t) {
                for (k, &r) in regions.iter().enumerate() {
                    out[k * w + r as usize] += 1.0;
                }
            }
        }
    }

    /// Normalized sketch into `out`: each depth row scaled to unit L2 norm
    /// (all-zero rows stay zero). Allocation-free; OOV tokens contribute
    /// nothing.
    pub fn encode_into(&self, tokens: &[u32], out: &mut [f32]) {
        self.count_into(tokens, out);
        let w = self.params.width;
        for k in 0..self.params.depth {
            let row = &mut out[k * w..(k + 1) * w];
            let norm: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                for v in row.iter_mut() {
                    *v /= norm;
                }
            }
        }
    }

    /// Strict encoder: errors on out-of-vocabulary token ids.
    pub fn encode_tokens(&self, tokens: &[u32]) -> Result<Sketch> {
        if let Some(&bad) = tokens.iter().find(|&&t| (t as usize) >= self.vocab) {
            return Err(EngageError::Data(format!(
                "token id {bad} out of range (vocab {})",
                self.vocab
            )));
        }
        let mut values = vec![0.0f32; self.params.sketch_len()];
        self.encode_into(tokens, &mut values);
        Ok(Sketch {
            depth: self.params.depth,
            width: self.params.width,
            values,
        })
    }

    pub fn write(&self, path: &Path, config_echo: Option<&str>) -> Result<()> {
        let file = File::create(path).map_err(|e| EngageError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            writeln!(
                w,
                "#sketch-codec v1 {} {} {} {}",
                self.params.depth, self.params.width, self.params.embedding_dim, self.params.seed
            )?;
            if let Some(echo) = config_echo {
                for line in echo.lines() {
                    writeln!(w, "#{line}")?;
                }
            }
            writeln!(w, "#density-aware {}", self.params.density_aware as u8)?;
            writeln!(w, "#vocab {}", self.vocab)?;
            writeln!(w, "#planes")?;
            for p in &self.planes {
                // `{}` is the shortest exact round-trip form
                let dir = p
                    .direction
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(w, "{dir} {}", p.offset)?;
            }
            writeln!(w, "#assignments")?;
            for t in 0..self.vocab {
                let regions = &self.assignments[t * self.params.depth..(t + 1) * self.params.depth];
                let line = regions
                    .iter()
                    .map(|r| r.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(w, "{line}")?;
            }
            w.flush()
        })();
        res.map_err(|e| EngageError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<SketchCodec> {
        let file = File::open(path).map_err(|e| EngageError::io(path, e))?;
        let reader = BufReader::new(file);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| EngageError::parse(path, 1, "empty codec file"))?;
        let header = header.map_err(|e| EngageError::io(path, e))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "#sketch-codec" || parts[1] != "v1" {
            return Err(EngageError::parse(path, 1, "bad codec header"));
        }
        let mut params = SketchParams {
            depth: parse(path, 1, parts[2])?,
            width: parse(path, 1, parts[3])?,
            embedding_dim: parse(path, 1, parts[4])?,
            seed: parse(path, 1, parts[5])?,
            density_aware: true,
        };
        params.validate()?;
        let bits = params.bits();
        let mut vocab = None;
        let mut planes = Vec::new();
        let mut assignments = Vec::new();
        #[derive(PartialEq)]
        enum Section {
            Head,
            Planes,
            Assignments,
        }
        let mut section = Section::Head;
        for (i, line) in lines {
            let line = line.map_err(|e| EngageError::io(path, e))?;
            let lineno = i + 1;
            if line.is_empty() {
                continue;
            }
            match line.as_str() {
                "#planes" => {
                    section = Section::Planes;
                    continue;
                }
                "#assignments" => {
                    section = Section::Assignments;
                    continue;
                }
                _ => {}
            }
            if let Some(rest) = line.strip_prefix("#vocab ") {
                vocab = Some(parse(path, lineno, rest.trim())?);
                continue;
            }
            if let Some(rest) = line.strip_prefix("#density-aware ") {
                params.density_aware = rest.trim() == "1";
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            match section {
                Section::Planes => {
                    let vals: std::result::Result<Vec<f64>, _> =
                        line.split_whitespace().map(str::parse).collect();
                    let mut vals = vals
                        .map_err(|_| EngageError::parse(path, lineno, "bad plane value"))?;
                    if vals.len() != params.embedding_dim + 1 {
                        return Err(EngageError::parse(path, lineno, "wrong plane width"));
                    }
                    let offset = vals.pop().unwrap();
                    planes.push(Hyperplane {
                        direction: vals,
                        offset,
                    });
                }
                Section::Assignments => {
                    for r in line.split_whitespace() {
                        let r: u16 =
                            parse(path, lineno, r)?;
                        if (r as usize) >= params.width {
                            return Err(EngageError::parse(path, lineno, "region out of range"));
                        }
                        assignments.push(r);
                    }
                }
                Section::Head => {
                    return Err(EngageError::parse(path, lineno, "unexpected line before #planes"))
                }
            }
        }
        let vocab =
            vocab.ok_or_else(|| EngageError::parse(path, 0, "missing #vocab line"))?;
        if planes.len() != params.depth * bits {
            return Err(EngageError::parse(path, 0, "wrong plane count"));
        }
        if assignments.len() != vocab * params.depth {
            return Err(EngageError::parse(path, 0, "wrong assignment count"));
        }
        Ok(SketchCodec {
            params,
            planes,
            assignments,
            vocab,
        })
    }
}

fn parse<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| EngageError::parse(path, line, format!("bad value `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, GeneratorConfig};
    use proptest::prelude::*;

    fn toy_embeddings(vocab: usize, dim: usize, seed: u64) -> Embeddings {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut e = Embeddings::zeros(vocab, dim);
        for v in e.data.iter_mut() {
            *v = rand::Rng::sample::<f64, _>(&mut rng, StandardNormal);
        }
        e
    }

    fn toy_codec() -> SketchCodec {
        let emb = toy_embeddings(64, 8, 11);
        fit_codec(
            &emb,
            &SketchParams {
                depth: 4,
                width: 8,
                embedding_dim: 8,
                seed: 42,
                density_aware: true,
            },
        )
        .unwrap()
    }

    #[test]
    fn every_token_gets_a_region() {
        let codec = toy_codec();
        for t in 0..codec.vocab as u32 {
            for &r in codec.regions(t).unwrap() {
                assert!((r as usize) < codec.params.width);
            }
        }
    }

    #[test]
    fn identical_embeddings_share_regions() {
        let mut emb = toy_embeddings(32, 6, 3);
        let row: Vec<f64> = emb.row(5).to_vec();
        emb.row_mut(9).copy_from_slice(&row);
        let codec = fit_codec(
            &emb,
            &SketchParams {
                depth: 6,
                width: 8,
                embedding_dim: 6,
                seed: 1,
                density_aware: true,
            },
        )
        .unwrap();
        assert_eq!(codec.regions(5), codec.regions(9));
    }

    #[test]
    fn fit_is_deterministic() {
        let emb = toy_embeddings(64, 8, 11);
        let params = SketchParams {
            depth: 4,
            width: 8,
            embedding_dim: 8,
            seed: 42,
            density_aware: true,
        };
        let a = fit_codec(&emb, &params).unwrap();
        let b = fit_codec(&emb, &params).unwrap();
        assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn rejects_small_vocab_and_dim_mismatch() {
        let emb = toy_embeddings(4, 8, 0);
        let params = SketchParams {
            depth: 2,
            width: 8,
            embedding_dim: 8,
            seed: 0,
            density_aware: true,
        };
        assert!(fit_codec(&emb, &params).is_err());
        let emb = toy_embeddings(64, 6, 0);
        assert!(fit_codec(&emb, &params).is_err());
    }

    #[test]
    fn empty_tokens_zero_sketch() {
        let codec = toy_codec();
        let s = codec.encode_tokens(&[]).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_token_rows_are_one_hot() {
        let codec = toy_codec();
        let s = codec.encode_tokens(&[7]).unwrap();
        for k in 0..s.depth {
            let row = &s.values[k * s.width..(k + 1) * s.width];
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            assert_eq!(ones, 1);
            assert_eq!(zeros, s.width - 1);
        }
    }

    #[test]
    fn duplicate_token_normalizes_to_same_sketch() {
        let codec = toy_codec();
        let once = codec.encode_tokens(&[7]).unwrap();
        let twice = codec.encode_tokens(&[7, 7]).unwrap();
        assert_eq!(once.values, twice.values);
        // pre-normalization counts differ
        let mut c1 = vec![0.0f32; codec.params.sketch_len()];
        let mut c2 = vec![0.0f32; codec.params.sketch_len()];
        codec.count_into(&[7], &mut c1);
        codec.count_into(&[7, 7], &mut c2);
        assert!(c1.iter().zip(&c2).all(|(a, b)| *b == 2.0 * *a));
    }

    #[test]
    fn strict_encoder_rejects_oov() {
        let codec = toy_codec();
        assert!(codec.encode_tokens(&[1, 9999]).is_err());
        // lenient path ignores them
        let mut out = vec![0.0f32; codec.params.sketch_len()];
        codec.encode_into(&[9999], &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn topic_coherence_same_topic_pairs_collide_more() {
        let cfg = GeneratorConfig {
            topics: 3,
            dim: 8,
            vocab: 384,
            ..GeneratorConfig::default()
        };
        let data = generate_synthetic(&cfg, 13).unwrap();
        let codec = fit_codec(
            &data.embeddings,
            &SketchParams {
                depth: 8,
                width: 16,
                embedding_dim: 8,
                seed: 5,
                density_aware: true,
            },
        )
        .unwrap();
        let (same, cross) = topic_collision_rates(&codec, &cfg);
        assert!(same > cross, "same {same} cross {cross}");
    }

    /// Mean share-a-region rate over all token pairs, split by topic match.
    fn topic_collision_rates(codec: &SketchCodec, cfg: &GeneratorConfig) -> (f64, f64) {
        use crate::data::token_topic;
        let mut same = (0u64, 0u64);
        let mut cross = (0u64, 0u64);
        for a in 0..codec.vocab as u32 {
            for b in (a + 1)..codec.vocab as u32 {
                let ra = codec.regions(a).unwrap();
                let rb = codec.regions(b).unwrap();
                let hits = ra.iter().zip(rb).filter(|(x, y)| x == y).count() as u64;
                let bucket = if token_topic(a, cfg) == token_topic(b, cfg) {
                    &mut same
                } else {
                    &mut cross
                };
                bucket.0 += hits;
                bucket.1 += codec.params.depth as u64;
            }
        }
        (
            same.0 as f64 / same.1 as f64,
            cross.0 as f64 / cross.1 as f64,
        )
    }

    #[test]
    fn codec_serialization_round_trips() {
        let codec = toy_codec();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("codec.txt");
        codec.write(&path, Some("cfg abc")).unwrap();
        let back = SketchCodec::read(&path).unwrap();
        assert_eq!(codec, back);
    }

    proptest! {
        #[test]
        fn additive_and_permutation_invariant(
            a in proptest::collection::vec(0u32..64, 0..30),
            b in proptest::collection::vec(0u32..64, 0..30),
        ) {
            let codec = toy_codec();
            let len = codec.params.sketch_len();
            let (mut ca, mut cb, mut cab) = (vec![0.0f32; len], vec![0.0f32; len], vec![0.0f32; len]);
            codec.count_into(&a, &mut ca);
            codec.count_into(&b, &mut cb);
            let ab: Vec<u32> = a.iter().chain(&b).copied().collect();
            codec.count_into(&ab, &mut cab);
            for i in 0..len {
                prop_assert_eq!(cab[i], ca[i] + cb[i]);
            }
            // permutation invariance
            let mut rev: Vec<u32> = ab.clone();
            rev.reverse();
            let s1 = codec.encode_tokens(&ab).unwrap();
            let s2 = codec.encode_tokens(&rev).unwrap();
            prop_assert_eq!(&s1.values, &s2.values);
            // row norms in {0, 1}
            for k in 0..codec.params.depth {
                let row = &s1.values[k * codec.params.width..(k + 1) * codec.params.width];
                let n: f32 = row.iter().map(|v| v * v).sum::<f32>().sqrt();
                prop_assert!(n.abs() < 1e-9 || (n - 1.0).abs() < 1e-6);
            }
        }
    }
}
