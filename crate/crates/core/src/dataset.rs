//! Labeled multivariate time-series datasets: JSONL ingestion, synthetic
//! generation, normalization, stratified splitting and label subsampling.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled sample with `d` channels of equal length `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub label: usize,
    pub channels: Vec<Vec<f64>>,
}

impl Sample {
    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A collection of samples sharing channel count and length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    class_count: usize,
    channel_count: usize,
    length: usize,
}

impl Dataset {
    /// Builds a dataset, checking shapes, labels and id uniqueness.
    pub fn new(samples: Vec<Sample>, class_count: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Domain("dataset has no samples".into()))?;
        let channel_count = first.channel_count();
        let length = first.len();
        if channel_count == 0 || length == 0 {
            return Err(Error::Shape(format!(
                "sample {} needs at least one channel with at least one value",
                first.id
            )));
        }
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            check_sample_shape(s, channel_count, length)?;
            if s.label >= class_count {
                return Err(Error::Domain(format!(
                    "sample {} has label {} but class count is {class_count}",
                    s.id, s.label
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Domain(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset {
            samples,
            class_count,
            channel_count,
            length,
        })
    }

    /// Builds a dataset with the class count inferred as `max label + 1`.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let class_count = samples.iter().map(|s| s.label + 1).max().unwrap_or(0);
        Dataset::new(samples, class_count)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Number of samples per class, indexed by label.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Number of distinct labels that actually occur.
    pub fn present_classes(&self) -> usize {
        self.class_histogram().iter().filter(|&&c| c > 0).count()
    }

    /// Sample indices grouped by label, in dataset order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.class_count];
        for (i, s) in self.samples.iter().enumerate() {
            groups[s.label].push(i);
        }
        groups
    }

    /// New dataset holding the samples at `indices` (in that order) with
    /// the same class count.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Dataset::new(samples, self.class_count)
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}

fn check_sample_shape(s: &Sample, channel_count: usize, length: usize) -> Result<()> {
    if s.channels.len() != channel_count {
        return Err(Error::Shape(format!(
            "sample {} has {} channels, expected {channel_count}",
            s.id,
            s.channels.len()
        )));
    }
    for (c, ch) in s.channels.iter().enumerate() {
        if ch.len() != length {
            return Err(Error::Shape(format!(
                "sample {} channel {c} has length {}, expected {length}",
                s.id,
                ch.len()
            )));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleRecord {
    id: String,
    label: usize,
    channels: Vec<Vec<f64>>,
}

/// Parses a JSON Lines dataset. A leading `{"meta": ...}` line, as written by
/// [`write_dataset`], is skipped; blank lines are ignored.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if samples.is_empty() && is_meta_line(trimmed) {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let sample = Sample {
            id: rec.id,
            label: rec.label,
            channels: rec.channels,
        };
        let (d, n) = *shape.get_or_insert((sample.channel_count(), sample.len()));
        check_sample_shape(&sample, d, n).map_err(|e| match e {
            Error::Shape(m) => Error::Shape(format!("line {lineno}: {m}")),
            other => other,
        })?;
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no samples".into(),
        });
    }
    Dataset::from_samples(samples)
}

fn is_meta_line(line: &str) -> bool {
    matches!(
        serde_json::from_str::<serde_json::Value>(line),
        Ok(serde_json::Value::Object(ref m)) if m.contains_key("meta") && !m.contains_key("channels")
    )
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file))
}

/// Writes the dataset as JSON Lines, optionally preceded by a meta line.
pub fn write_dataset<W: Write>(
    ds: &Dataset,
    meta: Option<&serde_json::Value>,
    mut out: W,
) -> Result<()> {
    let mut emit = |line: String| writeln!(out, "{line}").map_err(|e| Error::io("<output>", e));
    if let Some(meta) = meta {
        emit(serde_json::to_string(&serde_json::json!({ "meta": meta }))?)?;
    }
    for s in ds.samples() {
        emit(serde_json::to_string(s)?)?;
    }
    Ok(())
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub class_count: usize,
    pub channel_count: usize,
    pub length: usize,
    pub samples_per_class: usize,
    pub noise_sigma: f64,
    pub motif_length: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            class_count: 3,
            channel_count: 2,
            length: 500,
            samples_per_class: 100,
            noise_sigma: 0.3,
            motif_length: 50,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.channel_count == 0 || self.length == 0 {
            return Err(Error::Config(
                "class_count, channel_count and length must be positive".into(),
            ));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be at least 1".into()));
        }
        if self.motif_length == 0 || self.motif_length > self.length {
            return Err(Error::Config(format!(
                "motif_length {} must be in 1..={}",
                self.motif_length, self.length
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// The deterministic motif planted into every sample of `class`.
///
/// Class 0 is one sine period, class 1 a unit square pulse, class 2 a
/// linear chirp sweeping 1 to 4 cycles per window, and class `k >= 3` a
/// sine with `k` periods.
pub fn class_motif(class: usize, len: usize) -> Vec<f64> {
    use std::f64::consts::TAU;
    let m = len as f64;
    (0..len)
        .map(|t| {
            let x = t as f64 / m;
            match class {
                0 => (TAU * x).sin(),
                1 => 1.0,
                2 => (TAU * (x + 1.5 * x * x)).sin(),
                k => (TAU * k as f64 * x).sin(),
            }
        })
        .collect()
}

/// Generates a labeled dataset of noisy series carrying class motifs.
///
/// Each channel is `noise_sigma` times standard Gaussian noise plus the class
/// motif added at a uniformly drawn offset (independently per channel).
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let motifs: Vec<Vec<f64>> = (0..cfg.class_count)
        .map(|k| class_motif(k, cfg.motif_length))
        .collect();
    let total = cfg.class_count * cfg.samples_per_class;
    let mut samples = Vec::with_capacity(total);
    for class in 0..cfg.class_count {
        for _ in 0..cfg.samples_per_class {
            let channels = (0..cfg.channel_count)
                .map(|_| {
                    let mut ch: Vec<f64> = (0..cfg.length)
                        .map(|_| cfg.noise_sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let offset = rng.random_range(0..=cfg.length - cfg.motif_length);
                    for (x, m) in ch[offset..].iter_mut().zip(&motifs[class]) {
                        *x += m;
                    }
                    ch
                })
                .collect();
            samples.push(Sample {
                id: format!("s{:06}", samples.len()),
                label: class,
                channels,
            });
        }
    }
    Dataset::new(samples, cfg.class_count)
}

/// Z-normalizes one channel in place with the population standard deviation.
/// Constant channels become all zeros.
pub fn znormalize_channel(ch: &mut [f64]) {
    if ch.is_empty() {
        return;
    }
    let n = ch.len() as f64;
    let mean = ch.iter().sum::<f64>() / n;
    let var = ch.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std <= f64::EPSILON * mean.abs().max(1.0) {
        ch.iter_mut().for_each(|x| *x = 0.0);
    } else {
        ch.iter_mut().for_each(|x| *x = (*x - mean) / std);
    }
}

/// Z-normalizes every channel of every sample.
pub fn znormalize(ds: &Dataset) -> Dataset {
    let mut out = ds.clone();
    for s in &mut out.samples {
        for ch in &mut s.channels {
            znormalize_channel(ch);
        }
    }
    out
}

/// Stratified train/test split. Each class contributes
/// `round(count * test_fraction)` samples to the test side.
pub fn split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.len() < 2 {
        return Err(Error::Config("split needs at least 2 samples".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut group in ds.indices_by_class() {
        group.shuffle(&mut rng);
        let n_test = (group.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&group[..n_test]);
        train.extend_from_slice(&group[n_test..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config(format!(
            "test fraction {test_fraction} leaves an empty split ({} train, {} test)",
            train.len(),
            test.len()
        )));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((ds.select(&train)?, ds.select(&test)?))
}

/// Keeps at most `per_class` randomly chosen samples of each class,
/// preserving the original order.
pub fn subsample_labels(ds: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for mut group in ds.indices_by_class() {
        if group.len() > per_class {
            group.shuffle(&mut rng);
            group.truncate(per_class);
        }
        keep.extend(group);
    }
    keep.sort_unstable();
    ds.select(&keep)
}

/// Draws `min(per_class, class size)` samples of every class, returned in
/// class-major order. Used by shapelet selection and validation sets.
pub fn sample_per_class(ds: &Dataset, per_class: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut picked = Vec::new();
    for mut group in ds.indices_by_class() {
        group.shuffle(rng);
        group.truncate(per_class);
        group.sort_unstable();
        picked.extend(group);
    }
    picked
}

/// Per-class counts as an ordered map, handy for reports.
pub fn class_counts(ds: &Dataset) -> BTreeMap<usize, usize> {
    ds.class_histogram()
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn two_record_file() -> String {
        let a = r#"{"id":"a","label":0,"channels":[[1,2,3,4,5,6,7,8],[0,0,0,0,0,0,0,0]]}"#;
        let b = r#"{"id":"b","label":1,"channels":[[8,7,6,5,4,3,2,1],[1,1,1,1,1,1,1,1]]}"#;
        format!("{a}\n{b}\n")
    }

    #[test]
    fn parses_two_records() {
        let ds = parse_dataset(Cursor::new(two_record_file())).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.class_count(), 2);
        assert_eq!(ds.channel_count(), 2);
        assert_eq!(ds.length(), 8);
    }

    #[test]
    fn ragged_channels_are_shape_errors() {
        let bad = r#"{"id":"a","label":0,"channels":[[1,2,3,4,5,6,7,8],[1,2,3,4,5,6,7]]}"#;
        let err = parse_dataset(Cursor::new(bad)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)), "{err}");
    }

    #[test]
    fn empty_file_reports_no_samples() {
        let err = parse_dataset(Cursor::new("")).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
        assert!(err.to_string().contains("no samples"));
    }

    #[test]
    fn malformed_record_names_its_line() {
        let text = format!("{}{{\"id\": 3}}\n", two_record_file());
        match parse_dataset(Cursor::new(text)).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn meta_line_round_trip() {
        let ds = parse_dataset(Cursor::new(two_record_file())).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, Some(&serde_json::json!({"tool_version": "x"})), &mut buf).unwrap();
        assert_eq!(parse_dataset(Cursor::new(buf)).unwrap(), ds);
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let cfg = SynthConfig::default();
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.len(), 300);
        assert_eq!(a.class_histogram(), vec![100, 100, 100]);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_noise_plants_exact_motifs() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            samples_per_class: 3,
            length: 80,
            motif_length: 20,
            ..SynthConfig::default()
        };
        let ds = generate_synthetic(&cfg).unwrap();
        for s in ds.samples() {
            let motif = class_motif(s.label, 20);
            for ch in &s.channels {
                let found = ch.windows(20).any(|w| w == motif.as_slice());
                assert!(found, "motif missing in {}", s.id);
            }
        }
    }

    #[test]
    fn motif_longer_than_series_is_rejected() {
        let cfg = SynthConfig {
            motif_length: 600,
            ..SynthConfig::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn znormalize_examples() {
        let mut ch = vec![1.0, 2.0, 3.0];
        znormalize_channel(&mut ch);
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((ch[0] + expected).abs() < 1e-12);
        assert!(ch[1].abs() < 1e-12);
        assert!((ch[2] - expected).abs() < 1e-12);
        assert!((ch[2] - 1.224_744_871_391_589).abs() < 1e-12);

        let mut flat = vec![5.0, 5.0, 5.0];
        znormalize_channel(&mut flat);
        assert_eq!(flat, vec![0.0; 3]);
    }

    #[test]
    fn stratified_split_counts() {
        let ds = generate_synthetic(&SynthConfig::default()).unwrap();
        let (train, test) = split(&ds, 0.2, 3).unwrap();
        assert_eq!(test.len(), 60);
        assert_eq!(test.class_histogram(), vec![20, 20, 20]);
        assert_eq!(train.len(), 240);
        let (train2, test2) = split(&ds, 0.2, 3).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_rejects_empty_sides() {
        let ds = parse_dataset(Cursor::new(two_record_file())).unwrap();
        assert!(matches!(split(&ds, 0.999, 1), Err(Error::Config(_))));
    }

    #[test]
    fn subsample_saturates_and_is_deterministic() {
        let ds = generate_synthetic(&SynthConfig {
            samples_per_class: 20,
            length: 60,
            motif_length: 10,
            ..SynthConfig::default()
        })
        .unwrap();
        let sub = subsample_labels(&ds, 10, 5).unwrap();
        assert_eq!(sub.class_histogram(), vec![10, 10, 10]);
        assert_eq!(sub, subsample_labels(&ds, 10, 5).unwrap());
        assert_eq!(subsample_labels(&ds, 1000, 5).unwrap(), ds);
    }
}
