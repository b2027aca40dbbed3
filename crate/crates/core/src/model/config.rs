use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyper-parameters of the contextual transducer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Output vocabulary including blank at index 0.
    pub vocab_size: usize,
    pub d_feat: usize,
    pub d_model: usize,
    pub num_encoder_layers: usize,
    /// Heads of both the encoder self-attention and the biasing adapters.
    pub num_heads: usize,
    pub ff_dim: usize,
    /// Context embedding and adapter attention width (`D`).
    pub adapter_dim: usize,
    /// 1-based encoder blocks followed by a biasing adapter.
    pub injection_layers: Vec<usize>,
    pub bias_predictor: bool,
    /// BiLSTM layers of the context encoder; hidden size is `adapter_dim`.
    pub context_layers: usize,
    pub context_embed_dim: usize,
    /// Tokens of history seen by the stateless predictor.
    pub predictor_context: usize,
    pub predictor_embed_dim: usize,
    pub joiner_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 28,
            d_feat: 16,
            d_model: 64,
            num_encoder_layers: 6,
            num_heads: 4,
            ff_dim: 128,
            adapter_dim: 128,
            injection_layers: vec![3, 6],
            bias_predictor: false,
            context_layers: 2,
            context_embed_dim: 32,
            predictor_context: 2,
            predictor_embed_dim: 32,
            joiner_dim: 64,
        }
    }
}

/// Scalar parameter counts of each side of the partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCounts {
    pub base: usize,
    pub biasing: usize,
}

impl ParameterCounts {
    pub fn biasing_fraction(&self) -> f64 {
        self.biasing as f64 / (self.base + self.biasing) as f64
    }
}

impl ModelConfig {
    /// Parameter counts computed from the dimensions alone.
    pub fn parameter_counts(&self) -> ParameterCounts {
        let (d, v, f, ff, j) = (self.d_model, self.vocab_size, self.d_feat, self.ff_dim, self.joiner_dim);
        let block = 2 * d + (3 * d * d + 3 * d) + (d * d + d) + 2 * d + (d * ff + ff) + (ff * d + d);
        let ep = self.predictor_embed_dim;
        let base = (2 * f * d + d)
            + self.num_encoder_layers * block
            + v * ep
            + (self.predictor_context * ep * d + d)
            + d * j
            + (d * j + j)
            + (j * v + v);
        let mut biasing = 0;
        if self.is_contextual() {
            let h = self.adapter_dim;
            biasing += v * self.context_embed_dim;
            for l in 0..self.context_layers {
                let input = if l == 0 { self.context_embed_dim } else { 2 * h };
                biasing += 2 * ((input + h) * 4 * h + 4 * h);
            }
            biasing += 2 * h * h + h;
            let adapters = self.injection_layers.len() + usize::from(self.bias_predictor);
            biasing += adapters * (2 * d + d * h + 2 * h * h + h * d);
        }
        ParameterCounts { base, biasing }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::Config(m));
        if self.vocab_size < 2 {
            return bad(format!("vocab_size {} < 2", self.vocab_size));
        }
        for (name, v) in [
            ("d_feat", self.d_feat),
            ("d_model", self.d_model),
            ("num_encoder_layers", self.num_encoder_layers),
            ("num_heads", self.num_heads),
            ("ff_dim", self.ff_dim),
            ("adapter_dim", self.adapter_dim),
            ("context_layers", self.context_layers),
            ("context_embed_dim", self.context_embed_dim),
            ("predictor_context", self.predictor_context),
            ("predictor_embed_dim", self.predictor_embed_dim),
            ("joiner_dim", self.joiner_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.d_model % self.num_heads != 0 || self.adapter_dim % self.num_heads != 0 {
            return bad(format!(
                "d_model {} and adapter_dim {} must be divisible by num_heads {}",
                self.d_model, self.adapter_dim, self.num_heads
            ));
        }
        let mut seen = Vec::new();
        for &l in &self.injection_layers {
            if l == 0 || l > self.num_encoder_layers {
                return bad(format!(
                    "injection layer {l} outside 1..={}",
                    self.num_encoder_layers
                ));
            }
            if seen.contains(&l) {
                return bad(format!("injection layer {l} listed twice"));
            }
            seen.push(l);
        }
        Ok(())
    }

    /// Whether any adapter (and hence the context encoder) exists.
    pub fn is_contextual(&self) -> bool {
        !self.injection_layers.is_empty() || self.bias_predictor
    }

    /// The same architecture with every adapter removed.
    /// Whether two configs describe the same base (non-biasing) network;
    /// adapter-only fields are ignored.
    pub fn same_base(&self, other: &ModelConfig) -> bool {
        let strip = |c: &ModelConfig| ModelConfig {
            adapter_dim: 0,
            context_layers: 0,
            context_embed_dim: 0,
            ..c.without_adapters()
        };
        strip(self) == strip(other)
    }

    pub fn without_adapters(&self) -> Self {
        Self {
            injection_layers: Vec::new(),
            bias_predictor: false,
            ..self.clone()
        }
    }

    /// Middle and last layers, the default early-injection placement.
    pub fn mid_and_last(layers: usize) -> Vec<usize> {
        let mid = layers.div_ceil(2);
        if mid == layers {
            vec![layers]
        } else {
            vec![mid, layers]
        }
    }
}
