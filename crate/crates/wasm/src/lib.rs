//! WebAssembly bindings: synthetic series, distance profiles and
//! discretization into ShapeWord tokens.

use shapeword::dataset::{generate_synthetic, znormalize, znormalize_channel, Dataset, Sample, SynthConfig};
use shapeword::discretize::discretize_sample;
use shapeword::shapelets::sdist;
use shapeword::vocab::{build_vocabulary, Vocabulary, VocabConfig};
use shapeword::Result;
use wasm_bindgen::prelude::*;

fn js(e: shapeword::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// One z-normalized single-channel series carrying the motif of `class`.
pub fn synthetic_series(class: usize, length: usize, motif: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let ds = generate_synthetic(&SynthConfig {
        class_count: class + 1,
        channel_count: 1,
        length,
        samples_per_class: 1,
        noise_sigma: sigma,
        motif_length: motif,
        seed,
    })?;
    let mut series = ds.samples()[class].channels[0].clone();
    znormalize_channel(&mut series);
    Ok(series)
}

/// Euclidean distance between `query` and the window of `series` at every
/// offset; its minimum is the shapelet distance.
pub fn distance_profile(query: &[f64], series: &[f64]) -> Result<Vec<f64>> {
    sdist(query, series)?;
    Ok(series
        .windows(query.len())
        .map(|w| w.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect())
}

/// A single-scale vocabulary fitted on a small synthetic training set.
pub struct Fitted {
    vocab: Vocabulary,
    scale: usize,
}

impl Fitted {
    pub fn fit(scale: usize, words: usize, seed: u64) -> Result<Self> {
        let train: Dataset = znormalize(&generate_synthetic(&SynthConfig {
            channel_count: 1,
            length: 200,
            samples_per_class: 10,
            motif_length: 40,
            seed,
            ..SynthConfig::default()
        })?);
        let vocab = build_vocabulary(
            &train,
            &VocabConfig {
                scales: vec![scale],
                words_per_block: Some(words),
                samples_per_class: 4,
                top_k: 30,
                seed,
                ..VocabConfig::default()
            },
        )?;
        Ok(Fitted { vocab, scale })
    }

    pub fn tokens(&self, series: &[f64]) -> Result<Vec<usize>> {
        let sample = Sample {
            id: String::new(),
            label: 0,
            channels: vec![series.to_vec()],
        };
        Ok(discretize_sample(&sample, &self.vocab, self.scale)?.tokens.remove(0))
    }

    /// Centroids in token order.
    pub fn centroids(&self) -> Vec<Vec<f64>> {
        let mut block = self.vocab.block(0, self.scale);
        block.sort_by_key(|e| e.token);
        block.into_iter().map(|e| e.centroid.clone()).collect()
    }
}

#[wasm_bindgen(js_name = synthSeries)]
pub fn synth_series(class: u32, length: u32, motif: u32, sigma: f64, seed: u32) -> std::result::Result<Vec<f64>, JsError> {
    synthetic_series(class as usize, length as usize, motif as usize, sigma, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = distanceProfile)]
pub fn distance_profile_js(query: &[f64], series: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    distance_profile(query, series).map_err(js)
}

#[wasm_bindgen]
pub struct Discretizer(Fitted);

#[wasm_bindgen]
impl Discretizer {
    #[wasm_bindgen(constructor)]
    pub fn new(scale: u32, words: u32, seed: u32) -> std::result::Result<Discretizer, JsError> {
        Fitted::fit(scale as usize, words as usize, seed as u64).map(Discretizer).map_err(js)
    }

    pub fn tokens(&self, series: &[f64]) -> std::result::Result<Vec<u32>, JsError> {
        self.0
            .tokens(series)
            .map(|t| t.into_iter().map(|x| x as u32).collect())
            .map_err(js)
    }

    /// All centroids concatenated in token order.
    pub fn centroids(&self) -> Vec<f64> {
        self.0.centroids().concat()
    }

    pub fn scale(&self) -> u32 {
        self.0.scale as u32
    }
}
