//! Run configuration, read from TOML.

use std::path::Path;

use contextbias_core::data::SynthConfig;
use contextbias_core::model::ModelConfig;
use contextbias_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasingConfig {
    pub perturb_prob: f64,
    pub n_distractors_train: usize,
    pub n_distractors_eval: usize,
    /// Probability of discarding a training utterance without rare words.
    pub drop_no_rare_prob: f64,
    /// Seed of the persisted evaluation lists.
    pub eval_list_seed: u64,
}

impl Default for BiasingConfig {
    fn default() -> Self {
        Self {
            perturb_prob: 0.2,
            n_distractors_train: 100,
            n_distractors_eval: 100,
            drop_no_rare_prob: 0.8,
            eval_list_seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub beam: usize,
    pub max_symbols: usize,
    /// Shallow-fusion bonus per matched token.
    pub fusion_lambda: f64,
    /// Candidate bonuses tried on the dev set when tuning fusion.
    pub fusion_lambda_grid: Vec<f64>,
    /// Greedy dev WER the base model must reach.
    pub base_wer_threshold: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam: 4,
            max_symbols: 8,
            fusion_lambda: 2.0,
            fusion_lambda_grid: vec![0.5, 1.0, 2.0, 3.0, 4.0],
            base_wer_threshold: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub data: SynthConfig,
    pub base_training: TrainConfig,
    pub biasing_training: TrainConfig,
    pub biasing: BiasingConfig,
    pub decode: DecodeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            model: ModelConfig {
                d_model: 48,
                ff_dim: 96,
                adapter_dim: 8,
                context_embed_dim: 16,
                predictor_embed_dim: 24,
                joiner_dim: 48,
                ..ModelConfig::default()
            },
            data: SynthConfig::default(),
            base_training: TrainConfig { steps: 1500, lr: 3e-3, ..TrainConfig::default() },
            biasing_training: TrainConfig { steps: 600, lr: 3e-3, ..TrainConfig::default() },
            biasing: BiasingConfig::default(),
            decode: DecodeConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg_err = |e: &dyn std::fmt::Display| Error::Config(e.to_string().trim().replace('\n', " "));
        let user: toml::Table = toml::from_str(text).map_err(|e| cfg_err(&e))?;
        // Sections given partially keep the run defaults for absent keys.
        let mut merged = toml::Table::try_from(Self::default()).map_err(|e| cfg_err(&e))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into().map_err(|e| cfg_err(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every section before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.data.validate()?;
        self.base_training.validate()?;
        self.biasing_training.validate()?;
        if self.model.d_feat != self.data.d_feat {
            return Err(Error::Config(format!(
                "model.d_feat {} differs from data.d_feat {}",
                self.model.d_feat, self.data.d_feat
            )));
        }
        if self.model.vocab_size != contextbias_core::text::CharVocab::SIZE {
            return Err(Error::Config(format!(
                "model.vocab_size must be {} for the character vocabulary",
                contextbias_core::text::CharVocab::SIZE
            )));
        }
        let b = &self.biasing;
        for (name, p) in [("perturb_prob", b.perturb_prob), ("drop_no_rare_prob", b.drop_no_rare_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("biasing.{name} {p} outside [0, 1]")));
            }
        }
        let d = &self.decode;
        if d.beam == 0 || d.max_symbols == 0 {
            return Err(Error::Config("decode.beam and decode.max_symbols must be positive".into()));
        }
        if !(d.fusion_lambda >= 0.0) || d.fusion_lambda_grid.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Config("fusion lambdas must be non-negative".into()));
        }
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
