//! The multi-scale classifier: one dilated causal convolutional encoder per
//! scale, a convolutional scale-aware feature integrator, and a linear head,
//! trained on cross-entropy plus a cross-scale InfoNCE term.

mod ablate;
mod metrics;
mod train;

pub use ablate::{ablate, run_pipeline, AblationVariant, PipelineConfig, PipelineOutcome};
pub use metrics::{metrics_from_predictions, MetricsReport};
pub use train::{evaluate, joint_loss, predict, train, EpochRecord, LossParts, Trained};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::diffcore::{ConvSpec, Graph, ParamStore, Tensor, Var};
use crate::discretize::MultiScaleCorpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub scales: Vec<usize>,
    pub embed_dim: usize,
    pub layer_depth: usize,
    pub kernel_size: usize,
    pub out_channels: usize,
    pub dilations: Vec<usize>,
    pub sfi_out_channels: usize,
    pub sfi_kernel: usize,
    pub lambda: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scales: vec![10, 25, 50],
            embed_dim: 16,
            layer_depth: 3,
            kernel_size: 3,
            out_channels: 50,
            dilations: vec![1, 2, 4],
            sfi_out_channels: 4,
            sfi_kernel: 3,
            lambda: 0.5,
            tau: 1.0,
            batch_size: 30,
            epochs: 50,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("layer_depth", self.layer_depth),
            ("kernel_size", self.kernel_size),
            ("out_channels", self.out_channels),
            ("sfi_out_channels", self.sfi_out_channels),
            ("sfi_kernel", self.sfi_kernel),
            ("batch_size", self.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::Config("scales must be a non-empty list of positive lengths".into()));
        }
        if self.dilations.len() != self.layer_depth || self.dilations.contains(&0) {
            return Err(Error::Config(format!(
                "need {} positive dilations, got {:?}",
                self.layer_depth, self.dilations
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau {} must be > 0", self.tau)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.lambda > 0.0 && self.scales.len() < 2 {
            return Err(Error::Config(
                "lambda > 0 needs at least 2 scales for the contrastive term".into(),
            ));
        }
        Ok(())
    }

    /// Dilations 1, 2, 4, ... for the given depth.
    pub fn doubling_dilations(depth: usize) -> Vec<usize> {
        (0..depth).map(|i| 1usize << i).collect()
    }

    pub fn integrated_len(&self) -> usize {
        self.sfi_out_channels * self.out_channels
    }
}

/// What an encoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputKind {
    /// Token rows per variable, embedded through per-variable tables.
    Tokens { channel_count: usize, words_per_block: usize },
    /// Raw real-valued channels.
    Raw { channel_count: usize },
}

impl InputKind {
    pub fn channel_count(&self) -> usize {
        match *self {
            InputKind::Tokens { channel_count, .. } | InputKind::Raw { channel_count } => channel_count,
        }
    }
}

/// One view (scale) of a sample as seen by its encoder.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderInput {
    Tokens(Vec<Vec<usize>>),
    Raw(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub label: usize,
    /// One input per model scale, in scale order.
    pub views: Vec<EncoderInput>,
}

/// Examples plus the metadata a model needs to be built for them.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleSet {
    pub input: InputKind,
    pub scales: Vec<usize>,
    pub class_count: usize,
    pub vocab_fingerprint: Option<String>,
    pub examples: Vec<Example>,
}

impl ExampleSet {
    pub fn from_corpus(corpus: &MultiScaleCorpus) -> Self {
        ExampleSet {
            input: InputKind::Tokens {
                channel_count: corpus.channel_count,
                words_per_block: corpus.words_per_block,
            },
            scales: corpus.scales.clone(),
            class_count: corpus.class_count,
            vocab_fingerprint: Some(corpus.vocab_fingerprint.clone()),
            examples: corpus
                .entries
                .iter()
                .map(|e| Example {
                    id: e.id.clone(),
                    label: e.label,
                    views: e
                        .sentences
                        .iter()
                        .map(|s| EncoderInput::Tokens(s.tokens.clone()))
                        .collect(),
                })
                .collect(),
        }
    }

    /// A single raw view per sample, recorded as scale 1 (one point per step).
    pub fn from_raw(ds: &Dataset) -> Self {
        ExampleSet {
            input: InputKind::Raw {
                channel_count: ds.channel_count(),
            },
            scales: vec![1],
            class_count: ds.class_count(),
            vocab_fingerprint: None,
            examples: ds
                .samples()
                .iter()
                .map(|s| Example {
                    id: s.id.clone(),
                    label: s.label,
                    views: vec![EncoderInput::Raw(s.channels.clone())],
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }

    pub fn present_classes(&self) -> usize {
        let mut seen = vec![false; self.class_count];
        for e in &self.examples {
            seen[e.label] = true;
        }
        seen.into_iter().filter(|s| *s).count()
    }
}

/// Parameter names, in one place.
pub(crate) mod names {
    pub fn embed(scale: usize, variable: usize) -> String {
        format!("enc{scale}.embed{variable}")
    }
    pub fn conv_w(scale: usize, layer: usize) -> String {
        format!("enc{scale}.conv{layer}.w")
    }
    pub fn conv_b(scale: usize, layer: usize) -> String {
        format!("enc{scale}.conv{layer}.b")
    }
    pub fn proj_w(scale: usize, layer: usize) -> String {
        format!("enc{scale}.proj{layer}.w")
    }
    pub fn proj_b(scale: usize, layer: usize) -> String {
        format!("enc{scale}.proj{layer}.b")
    }
    pub const SFI_W: &str = "sfi.w";
    pub const SFI_B: &str = "sfi.b";
    pub const HEAD_W: &str = "head.w";
    pub const HEAD_B: &str = "head.b";
}

/// Model structure plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeWordNet {
    pub config: ModelConfig,
    pub input: InputKind,
    pub class_count: usize,
    pub params: ParamStore,
}

impl ShapeWordNet {
    /// Builds the network with seeded uniform `±1/sqrt(fan_in)` weights.
    /// `scale_count` is the number of encoders.
    pub fn new(config: ModelConfig, input: InputKind, scale_count: usize, class_count: usize) -> Result<Self> {
        config.validate()?;
        if scale_count != config.scales.len() {
            return Err(Error::Config(format!(
                "{scale_count} inputs per sample but {} configured scales",
                config.scales.len()
            )));
        }
        if class_count < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {class_count}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        let p = config.out_channels;
        let first_in = match input {
            InputKind::Tokens { channel_count, words_per_block } => {
                if words_per_block == 0 || channel_count == 0 {
                    return Err(Error::Config("empty token vocabulary".into()));
                }
                channel_count * config.embed_dim
            }
            InputKind::Raw { channel_count } => channel_count,
        };
        for u in 0..scale_count {
            if let InputKind::Tokens { channel_count, words_per_block } = input {
                for v in 0..channel_count {
                    params.insert_uniform(names::embed(u, v), &[words_per_block, config.embed_dim], 1.0, &mut rng);
                }
            }
            for layer in 0..config.layer_depth {
                let cin = if layer == 0 { first_in } else { p };
                let conv_bound = 1.0 / ((cin * config.kernel_size) as f64).sqrt();
                params.insert_uniform(names::conv_w(u, layer), &[p, cin, config.kernel_size], conv_bound, &mut rng);
                params.insert_uniform(names::conv_b(u, layer), &[p], conv_bound, &mut rng);
                let proj_bound = 1.0 / (cin as f64).sqrt();
                params.insert_uniform(names::proj_w(u, layer), &[p, cin, 1], proj_bound, &mut rng);
                params.insert_uniform(names::proj_b(u, layer), &[p], proj_bound, &mut rng);
            }
        }
        let sfi_bound = 1.0 / ((scale_count * config.sfi_kernel) as f64).sqrt();
        params.insert_uniform(names::SFI_W, &[config.sfi_out_channels, scale_count, config.sfi_kernel], sfi_bound, &mut rng);
        params.insert_uniform(names::SFI_B, &[config.sfi_out_channels], sfi_bound, &mut rng);
        let q = config.integrated_len();
        let head_bound = 1.0 / (q as f64).sqrt();
        params.insert_uniform(names::HEAD_W, &[class_count, q], head_bound, &mut rng);
        params.insert_uniform(names::HEAD_B, &[class_count], head_bound, &mut rng);
        Ok(ShapeWordNet {
            config,
            input,
            class_count,
            params,
        })
    }

    /// A fresh model shaped for `set` with the given config.
    pub fn for_examples(config: ModelConfig, set: &ExampleSet) -> Result<Self> {
        ShapeWordNet::new(config, set.input, set.scales.len(), set.class_count)
    }

    pub fn scale_count(&self) -> usize {
        self.config.scales.len()
    }

    /// Builds the encoder input for one view: embedded tokens stacked by
    /// variable into `[(d * E) x s]`, or the raw `[d x n]` channels.
    fn encoder_input(&self, g: &mut Graph, scale: usize, view: &EncoderInput) -> Result<Var> {
        match (view, self.input) {
            (EncoderInput::Tokens(rows), InputKind::Tokens { channel_count, .. }) => {
                if rows.len() != channel_count {
                    return Err(Error::Shape(format!(
                        "{} token rows for {channel_count} variables",
                        rows.len()
                    )));
                }
                let s = rows[0].len();
                if s == 0 || rows.iter().any(|r| r.len() != s) {
                    return Err(Error::Shape("token rows must be non-empty and equally long".into()));
                }
                let mut parts = Vec::with_capacity(rows.len());
                for (v, row) in rows.iter().enumerate() {
                    let table = g.param(&self.params, &names::embed(scale, v))?;
                    let emb = g.embed(table, row)?;
                    parts.push(g.transpose(emb)?);
                }
                g.concat_rows(&parts)
            }
            (EncoderInput::Raw(channels), InputKind::Raw { channel_count }) => {
                if channels.len() != channel_count {
                    return Err(Error::Shape(format!(
                        "{} raw channels for {channel_count} expected",
                        channels.len()
                    )));
                }
                let t = Tensor::from_rows(channels)?;
                if t.dim(1) == 0 {
                    return Err(Error::Shape("empty raw series".into()));
                }
                Ok(g.input(t))
            }
            _ => Err(Error::Incompatible("input kind does not match the model".into())),
        }
    }

    /// Activations of every conv layer (`[p x s]`, before pooling) and the
    /// pooled representation.
    pub fn encode_layers(&self, g: &mut Graph, scale: usize, view: &EncoderInput) -> Result<(Vec<Var>, Var)> {
        let cfg = &self.config;
        let mut x = self.encoder_input(g, scale, view)?;
        let mut layers = Vec::with_capacity(cfg.layer_depth);
        for layer in 0..cfg.layer_depth {
            let cin = g.value(x).dim(0);
            let w = g.param(&self.params, &names::conv_w(scale, layer))?;
            let b = g.param(&self.params, &names::conv_b(scale, layer))?;
            let conv = g.conv1d(x, w, b, ConvSpec::causal(cin, cfg.out_channels, cfg.kernel_size, cfg.dilations[layer]))?;
            let pw = g.param(&self.params, &names::proj_w(scale, layer))?;
            let pb = g.param(&self.params, &names::proj_b(scale, layer))?;
            let skip = g.conv1d(x, pw, pb, ConvSpec::causal(cin, cfg.out_channels, 1, 1))?;
            let sum = g.add(conv, skip)?;
            x = g.relu(sum);
            layers.push(x);
        }
        let pooled = g.global_max_pool(x)?;
        Ok((layers, pooled))
    }

    /// Representation `e` (length `p`) of one view through its scale's encoder.
    pub fn encode(&self, g: &mut Graph, scale: usize, view: &EncoderInput) -> Result<Var> {
        self.encode_layers(g, scale, view).map(|(_, e)| e)
    }

    /// Fuses the `h` per-scale representations: stacked as `[h x p]`
    /// channels, one same-padded convolution, flattened to `q`.
    pub fn integrate(&self, g: &mut Graph, reps: &[Var]) -> Result<Var> {
        let h = self.scale_count();
        if reps.len() != h {
            return Err(Error::Shape(format!("{} representations for {h} scales", reps.len())));
        }
        let stacked = g.stack(reps)?;
        let w = g.param(&self.params, names::SFI_W)?;
        let b = g.param(&self.params, names::SFI_B)?;
        let spec = ConvSpec::same(h, self.config.sfi_out_channels, self.config.sfi_kernel);
        let fused = g.conv1d(stacked, w, b, spec)?;
        let q = g.value(fused).len();
        g.reshape(fused, &[q])
    }

    pub fn classify(&self, g: &mut Graph, fused: Var) -> Result<Var> {
        let w = g.param(&self.params, names::HEAD_W)?;
        let b = g.param(&self.params, names::HEAD_B)?;
        g.linear(fused, w, b)
    }

    /// Per-scale representations and logits of one example.
    pub fn forward(&self, g: &mut Graph, example: &Example) -> Result<(Vec<Var>, Var)> {
        if example.views.len() != self.scale_count() {
            return Err(Error::Shape(format!(
                "example {} has {} views, model has {} scales",
                example.id,
                example.views.len(),
                self.scale_count()
            )));
        }
        let reps = example
            .views
            .iter()
            .enumerate()
            .map(|(u, view)| self.encode(g, u, view))
            .collect::<Result<Vec<_>>>()?;
        let fused = self.integrate(g, &reps)?;
        let logits = self.classify(g, fused)?;
        Ok((reps, logits))
    }

    pub fn logits(&self, example: &Example) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let (_, logits) = self.forward(&mut g, example)?;
        Ok(g.value(logits).values.clone())
    }

    /// Representation of one view, evaluated eagerly.
    pub fn representation(&self, scale: usize, view: &EncoderInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let e = self.encode(&mut g, scale, view)?;
        Ok(g.value(e).clone())
    }
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
