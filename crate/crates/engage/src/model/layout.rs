use crate::features::{CategoricalLayout, CAT_COUNT};
use crate::fourier::FourierScales;

use super::config::ModelConfig;

/// Descriptor of the concatenated model input:
/// sketch | fourier(numerics) | embedded categoricals | community strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct InputLayout {
    pub sketch_len: usize,
    pub scales: FourierScales,
    pub cats: CategoricalLayout,
    pub embed_dims: [usize; CAT_COUNT],
}

impl InputLayout {
    pub fn new(sketch_len: usize, scales: FourierScales, config: &ModelConfig) -> Self {
        let cats = CategoricalLayout::new(config.languages);
        let embed_dims =
            std::array::from_fn(|i| config.max_embed_dim.min(cats.vocab_sizes[i]));
        InputLayout {
            sketch_len,
            scales,
            cats,
            embed_dims,
        }
    }

    pub fn fourier_len(&self) -> usize {
        crate::features::NUMERIC_LEN * self.scales.width()
    }

    pub fn embed_len(&self) -> usize {
        self.embed_dims.iter().sum()
    }

    pub fn input_dim(&self) -> usize {
        self.sketch_len + self.fourier_len() + self.embed_len() + 4
    }

    /// Offset of the embedding segment for categorical slot `i`.
    pub fn embed_offset(&self, i: usize) -> usize {
        self.sketch_len + self.fourier_len() + self.embed_dims[..i].iter().sum::<usize>()
    }

    pub fn strengths_offset(&self) -> usize {
        self.input_dim() - 4
    }
}
