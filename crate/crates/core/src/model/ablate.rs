use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::train::{evaluate, train, EpochRecord};
use super::{ExampleSet, ModelConfig};
use crate::dataset::Dataset;
use crate::discretize::mst;
use crate::error::{Error, Result};
use crate::vocab::{build_vocabulary, VocabConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    /// Multi-scale ShapeWord input with the contrastive term.
    Full,
    /// ShapeWord input at the first scale only, no contrastive term.
    NoCclm,
    /// Raw channels into a single encoder, no contrastive term.
    NoSd,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 3] = [AblationVariant::Full, AblationVariant::NoCclm, AblationVariant::NoSd];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationVariant::Full => "full",
            AblationVariant::NoCclm => "no_cclm",
            AblationVariant::NoSd => "no_sd",
        }
    }
}

impl fmt::Display for AblationVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}; expected full, no_cclm or no_sd")))
    }
}

/// Vocabulary and model settings for a train/test run. The model's scales
/// decide which scales the vocabulary is built for.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub vocab: VocabConfig,
    pub model: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub variant: AblationVariant,
    pub metrics: MetricsReport,
    pub history: Vec<EpochRecord>,
    pub vocab_fingerprint: Option<String>,
}

/// Builds a vocabulary on `train`, discretizes both splits, trains on the
/// training corpus and evaluates on the test corpus.
pub fn run_pipeline(train_set: &Dataset, test_set: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    let scales = cfg.model.scales.clone();
    let vocab_cfg = VocabConfig {
        scales: scales.clone(),
        ..cfg.vocab.clone()
    };
    let vocab = build_vocabulary(train_set, &vocab_cfg)?;
    let train_corpus = ExampleSet::from_corpus(&mst(train_set, &vocab, &scales)?);
    let test_corpus = ExampleSet::from_corpus(&mst(test_set, &vocab, &scales)?);
    let trained = train(&train_corpus, &cfg.model)?;
    let metrics = evaluate(&trained.model, &test_corpus)?;
    Ok(PipelineOutcome {
        variant: AblationVariant::Full,
        metrics,
        history: trained.history,
        vocab_fingerprint: Some(vocab.fingerprint()),
    })
}

/// Trains and evaluates one variant; all variants share the seeds in `cfg`.
pub fn ablate(
    train_set: &Dataset,
    test_set: &Dataset,
    variant: AblationVariant,
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    match variant {
        AblationVariant::Full => run_pipeline(train_set, test_set, cfg),
        AblationVariant::NoCclm => {
            let first = *cfg
                .model
                .scales
                .first()
                .ok_or_else(|| Error::Config("no scales configured".into()))?;
            let single = PipelineConfig {
                vocab: cfg.vocab.clone(),
                model: ModelConfig {
                    scales: vec![first],
                    lambda: 0.0,
                    ..cfg.model.clone()
                },
            };
            let mut out = run_pipeline(train_set, test_set, &single)?;
            out.variant = variant;
            Ok(out)
        }
        AblationVariant::NoSd => {
            let train_raw = ExampleSet::from_raw(train_set);
            let test_raw = ExampleSet::from_raw(test_set);
            let model_cfg = ModelConfig {
                scales: train_raw.scales.clone(),
                lambda: 0.0,
                ..cfg.model.clone()
            };
            let trained = train(&train_raw, &model_cfg)?;
            let metrics = evaluate(&trained.model, &test_raw)?;
            Ok(PipelineOutcome {
                variant,
                metrics,
                history: trained.history,
                vocab_fingerprint: None,
            })
        }
    }
}
