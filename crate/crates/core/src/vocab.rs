//! ShapeWord vocabularies: per-(variable, scale) k-means prototypes of the
//! top-ranked shapelets, plus the ShapeWord-vs-shapelet quality report.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::kmeans::{kmeans, KMeansConfig};
use crate::shapelets::{
    fstat, sdist_profile, select_shapelets, SelectionConfig, ShapeletCandidate, ShapeletQuality,
    FSTAT_EPSILON,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeWordEntry {
    pub token: usize,
    pub variable: usize,
    pub scale: usize,
    pub centroid: Vec<f64>,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub scales: Vec<usize>,
    pub channel_count: usize,
    pub words_per_block: usize,
    pub entries: Vec<ShapeWordEntry>,
}

impl Vocabulary {
    /// Checks that every (variable, scale) block holds tokens `0..k` exactly
    /// once with centroids of the block's length.
    pub fn validate(&self) -> Result<()> {
        let k = self.words_per_block;
        if k == 0 || self.channel_count == 0 || self.scales.is_empty() {
            return Err(Error::Shape("vocabulary has an empty dimension".into()));
        }
        let mut seen = vec![false; self.channel_count * self.scales.len() * k];
        for e in &self.entries {
            let si = self.scale_index(e.scale).ok_or_else(|| {
                Error::Shape(format!("entry scale {} not among {:?}", e.scale, self.scales))
            })?;
            if e.variable >= self.channel_count || e.token >= k {
                return Err(Error::Shape(format!(
                    "entry (variable {}, token {}) outside {}x{k}",
                    e.variable, e.token, self.channel_count
                )));
            }
            if e.centroid.len() != e.scale {
                return Err(Error::Shape(format!(
                    "centroid of length {} at scale {}",
                    e.centroid.len(),
                    e.scale
                )));
            }
            let slot = (e.variable * self.scales.len() + si) * k + e.token;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Shape(format!(
                    "duplicate token {} for variable {} scale {}",
                    e.token, e.variable, e.scale
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Shape("vocabulary has a gap in its token blocks".into()));
        }
        Ok(())
    }

    pub fn scale_index(&self, scale: usize) -> Option<usize> {
        self.scales.iter().position(|&s| s == scale)
    }

    /// Entries for one (variable, scale) block, ordered by token.
    pub fn block(&self, variable: usize, scale: usize) -> Vec<&ShapeWordEntry> {
        let mut out: Vec<&ShapeWordEntry> = self
            .entries
            .iter()
            .filter(|e| e.variable == variable && e.scale == scale)
            .collect();
        out.sort_by_key(|e| e.token);
        out
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("vocabulary serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self, meta: Option<&serde_json::Value>) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let (Some(meta), serde_json::Value::Object(map)) = (meta, &mut value) {
            map.insert("meta".into(), meta.clone());
        }
        Ok(serde_json::to_string_pretty(&value)?)
    }

    /// Parses a vocabulary file, ignoring an optional `meta` member.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("meta");
        }
        let vocab: Vocabulary = serde_json::from_value(value)?;
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_json(&text)
    }
}

/// Settings for [`build_vocabulary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub scales: Vec<usize>,
    /// Words per (variable, scale); `None` means the class count.
    pub words_per_block: Option<usize>,
    pub samples_per_class: usize,
    pub top_k: usize,
    pub stride: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            scales: vec![10, 25, 50],
            words_per_block: None,
            samples_per_class: 10,
            top_k: 100,
            stride: 1,
            seed: 0,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// Top-ranked shapelets retained for one (variable, scale) block.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedBlock {
    pub variable: usize,
    pub scale: usize,
    pub shapelets: Vec<ShapeletQuality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedVocabulary {
    pub vocabulary: Vocabulary,
    pub selected: Vec<SelectedBlock>,
}

/// Derives an independent stream seed for one block.
pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Selects shapelets and clusters them into ShapeWords for every variable and
/// scale, keeping the selected shapelets alongside the vocabulary.
pub fn fit_vocabulary(train: &Dataset, cfg: &VocabConfig) -> Result<FittedVocabulary> {
    if cfg.scales.is_empty() {
        return Err(Error::Config("at least one scale is required".into()));
    }
    let mut sorted = cfg.scales.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != cfg.scales.len() {
        return Err(Error::Config(format!("duplicate scales in {:?}", cfg.scales)));
    }
    if let Some(&bad) = cfg.scales.iter().find(|&&l| l == 0 || l > train.length()) {
        return Err(Error::Config(format!(
            "scale {bad} must be in 1..={} (series length)",
            train.length()
        )));
    }
    let k = cfg.words_per_block.unwrap_or(train.class_count());
    if k == 0 {
        return Err(Error::Config("words per block must be at least 1".into()));
    }
    if cfg.top_k < k {
        return Err(Error::Config(format!(
            "top_k {} is smaller than the {k} words per block",
            cfg.top_k
        )));
    }
    let mut entries = Vec::new();
    let mut selected = Vec::new();
    for variable in 0..train.channel_count() {
        for &scale in &cfg.scales {
            let block_seed = mix_seed(cfg.seed, variable as u64, scale as u64);
            let sel = SelectionConfig {
                samples_per_class: cfg.samples_per_class,
                top_k: cfg.top_k,
                stride: cfg.stride,
                seed: block_seed,
            };
            let shapelets = select_shapelets(train, variable, scale, &sel)?;
            let points: Vec<Vec<f64>> =
                shapelets.iter().map(|q| q.candidate.values.clone()).collect();
            let km = kmeans(
                &points,
                &KMeansConfig {
                    k,
                    seed: block_seed ^ 0x6B6D,
                    max_iter: cfg.max_iter,
                    tol: cfg.tol,
                },
            )?;
            let sizes = km.cluster_sizes();
            for (token, centroid) in km.centroids.into_iter().enumerate() {
                entries.push(ShapeWordEntry {
                    token,
                    variable,
                    scale,
                    centroid,
                    member_count: sizes[token],
                });
            }
            selected.push(SelectedBlock {
                variable,
                scale,
                shapelets,
            });
        }
    }
    let vocabulary = Vocabulary {
        scales: cfg.scales.clone(),
        channel_count: train.channel_count(),
        words_per_block: k,
        entries,
    };
    vocabulary.validate()?;
    Ok(FittedVocabulary {
        vocabulary,
        selected,
    })
}

pub fn build_vocabulary(train: &Dataset, cfg: &VocabConfig) -> Result<Vocabulary> {
    fit_vocabulary(train, cfg).map(|f| f.vocabulary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleQuality {
    pub scale: usize,
    pub shapeword_mean_fstat: f64,
    pub shapelet_mean_fstat: f64,
    pub shapewords_higher: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabQualityReport {
    pub validation_size: usize,
    pub scales: Vec<ScaleQuality>,
}

fn mean_fstat<'a>(
    patterns: impl Iterator<Item = (usize, &'a [f64])>,
    validation: &[&Sample],
    labels: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (variable, values) in patterns {
        let cand = ShapeletCandidate {
            values: values.to_vec(),
            variable,
            source_id: String::new(),
            offset: 0,
        };
        total += fstat(&sdist_profile(&cand, validation)?, labels, FSTAT_EPSILON)?;
        count += 1;
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Mean F-statistic of ShapeWord centroids versus the retained shapelets,
/// per scale, both scored over `validation`.
pub fn evaluate_vocabulary(fitted: &FittedVocabulary, validation: &Dataset) -> Result<VocabQualityReport> {
    if validation.present_classes() < 2 {
        return Err(Error::Domain(
            "validation set needs at least 2 classes".into(),
        ));
    }
    let refs: Vec<&Sample> = validation.samples().iter().collect();
    let labels = validation.labels();
    let vocab = &fitted.vocabulary;
    let mut scales = Vec::with_capacity(vocab.scales.len());
    for &scale in &vocab.scales {
        let words = mean_fstat(
            vocab
                .entries
                .iter()
                .filter(|e| e.scale == scale)
                .map(|e| (e.variable, e.centroid.as_slice())),
            &refs,
            &labels,
        )?;
        let shapelets = mean_fstat(
            fitted
                .selected
                .iter()
                .filter(|b| b.scale == scale)
                .flat_map(|b| {
                    b.shapelets
                        .iter()
                        .map(move |q| (b.variable, q.candidate.values.as_slice()))
                }),
            &refs,
            &labels,
        )?;
        scales.push(ScaleQuality {
            scale,
            shapeword_mean_fstat: words,
            shapelet_mean_fstat: shapelets,
            shapewords_higher: words > shapelets,
        });
    }
    Ok(VocabQualityReport {
        validation_size: validation.len(),
        scales,
    })
}
