//! Flat key-value run configuration read from a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shapeword::dataset::SynthConfig;
use shapeword::model::{ModelConfig, PipelineConfig};
use shapeword::vocab::VocabConfig;
use shapeword::{Error, Result};

/// Every key is optional; missing keys take the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub classes: Option<usize>,
    pub channels: Option<usize>,
    pub length: Option<usize>,
    pub per_class: Option<usize>,
    pub sigma: Option<f64>,
    pub motif: Option<usize>,
    pub data_seed: Option<u64>,

    pub test_fraction: Option<f64>,
    pub split_seed: Option<u64>,

    pub scales: Option<Vec<usize>>,
    pub words: Option<usize>,
    pub top_k: Option<usize>,
    pub per_class_samples: Option<usize>,
    pub stride: Option<usize>,
    pub vocab_seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,

    pub embed_dim: Option<usize>,
    pub layer_depth: Option<usize>,
    pub kernel_size: Option<usize>,
    pub out_channels: Option<usize>,
    pub dilations: Option<Vec<usize>>,
    pub sfi_out_channels: Option<usize>,
    pub sfi_kernel: Option<usize>,
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                RunConfig::parse(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn synth(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            class_count: self.classes.unwrap_or(d.class_count),
            channel_count: self.channels.unwrap_or(d.channel_count),
            length: self.length.unwrap_or(d.length),
            samples_per_class: self.per_class.unwrap_or(d.samples_per_class),
            noise_sigma: self.sigma.unwrap_or(d.noise_sigma),
            motif_length: self.motif.unwrap_or(d.motif_length),
            seed: self.data_seed.unwrap_or(d.seed),
        }
    }

    pub fn vocab(&self) -> VocabConfig {
        let d = VocabConfig::default();
        VocabConfig {
            scales: self.scales.clone().unwrap_or(d.scales),
            words_per_block: self.words.or(d.words_per_block),
            samples_per_class: self.per_class_samples.unwrap_or(d.samples_per_class),
            top_k: self.top_k.unwrap_or(d.top_k),
            stride: self.stride.unwrap_or(d.stride),
            seed: self.vocab_seed.unwrap_or(d.seed),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            tol: self.tol.unwrap_or(d.tol),
        }
    }

    pub fn model(&self) -> ModelConfig {
        let d = ModelConfig::default();
        let layer_depth = self.layer_depth.unwrap_or(d.layer_depth);
        ModelConfig {
            scales: self.scales.clone().unwrap_or(d.scales),
            embed_dim: self.embed_dim.unwrap_or(d.embed_dim),
            layer_depth,
            kernel_size: self.kernel_size.unwrap_or(d.kernel_size),
            out_channels: self.out_channels.unwrap_or(d.out_channels),
            dilations: self
                .dilations
                .clone()
                .unwrap_or_else(|| ModelConfig::doubling_dilations(layer_depth)),
            sfi_out_channels: self.sfi_out_channels.unwrap_or(d.sfi_out_channels),
            sfi_kernel: self.sfi_kernel.unwrap_or(d.sfi_kernel),
            lambda: self.lambda.unwrap_or(d.lambda),
            tau: self.tau.unwrap_or(d.tau),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            seed: self.seed.unwrap_or(d.seed),
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            vocab: self.vocab(),
            model: self.model(),
        }
    }

    pub fn test_fraction(&self) -> f64 {
        self.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION)
    }

    pub fn split_seed(&self) -> u64 {
        self.split_seed.unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_library_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.synth(), SynthConfig::default());
        assert_eq!(cfg.vocab(), VocabConfig::default());
        assert_eq!(cfg.model(), ModelConfig::default());
    }

    #[test]
    fn keys_map_onto_configs() {
        let cfg = RunConfig::parse("scales = [5, 15]\nwords = 4\nlambda = 1\nlayer_depth = 2\nsigma = 0.1\n").unwrap();
        assert_eq!(cfg.vocab().scales, vec![5, 15]);
        assert_eq!(cfg.model().scales, vec![5, 15]);
        assert_eq!(cfg.vocab().words_per_block, Some(4));
        assert_eq!(cfg.model().lambda, 1.0);
        assert_eq!(cfg.model().dilations, vec![1, 2]);
        assert_eq!(cfg.synth().noise_sigma, 0.1);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("lamda = 0.5"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("epochs = \"ten\""), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("scales = 10"), Err(Error::Config(_))));
    }
}
