//! Shapelet candidates, shapelet distance and F-statistic ranking.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_per_class, Dataset, Sample};
use crate::error::{Error, Result};

/// Denominator floor for the F-statistic.
pub const FSTAT_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletCandidate {
    pub values: Vec<f64>,
    pub variable: usize,
    pub source_id: String,
    pub offset: usize,
}

/// A scored candidate: its sDist profile over an evaluation set and the
/// resulting F-statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletQuality {
    pub candidate: ShapeletCandidate,
    pub distances: Vec<f64>,
    pub fstat: f64,
}

/// Sliding-window candidates of length `len` from one channel of `sample`.
pub fn extract_candidates(
    sample: &Sample,
    variable: usize,
    len: usize,
    stride: usize,
) -> Result<Vec<ShapeletCandidate>> {
    let channel = sample.channels.get(variable).ok_or_else(|| {
        Error::Index(format!(
            "variable {variable} out of range for {} channels",
            sample.channel_count()
        ))
    })?;
    if len == 0 || len > channel.len() {
        return Err(Error::Shape(format!(
            "shapelet length {len} must be in 1..={}",
            channel.len()
        )));
    }
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    Ok((0..=channel.len() - len)
        .step_by(stride)
        .map(|offset| ShapeletCandidate {
            values: channel[offset..offset + len].to_vec(),
            variable,
            source_id: sample.id.clone(),
            offset,
        })
        .collect())
}

/// Minimum Euclidean distance between `shapelet` and any equal-length window
/// of `series`.
///
/// Windows whose running squared sum already exceeds the best one are
/// abandoned; the surviving minimum is summed left to right in full, so the
/// result is bitwise equal to an exhaustive scan.
pub fn sdist(shapelet: &[f64], series: &[f64]) -> Result<f64> {
    let l = shapelet.len();
    if l == 0 || l > series.len() {
        return Err(Error::Shape(format!(
            "shapelet length {l} must be in 1..={}",
            series.len()
        )));
    }
    let mut best = f64::INFINITY;
    for window in series.windows(l) {
        let mut acc = 0.0;
        let mut abandoned = false;
        for (a, b) in shapelet.iter().zip(window) {
            let d = a - b;
            acc += d * d;
            if acc > best {
                abandoned = true;
                break;
            }
        }
        if !abandoned && acc < best {
            best = acc;
            if best == 0.0 {
                break;
            }
        }
    }
    Ok(best.sqrt())
}

/// sDist of the candidate against its variable in every evaluation sample.
pub fn sdist_profile(candidate: &ShapeletCandidate, eval_set: &[&Sample]) -> Result<Vec<f64>> {
    eval_set
        .iter()
        .map(|s| {
            let ch = s.channels.get(candidate.variable).ok_or_else(|| {
                Error::Index(format!(
                    "variable {} out of range for sample {}",
                    candidate.variable, s.id
                ))
            })?;
            sdist(&candidate.values, ch)
        })
        .collect()
}

/// Convenience wrapper over a whole dataset.
pub fn sdist_profile_dataset(candidate: &ShapeletCandidate, eval_set: &Dataset) -> Result<Vec<f64>> {
    let refs: Vec<&Sample> = eval_set.samples().iter().collect();
    sdist_profile(candidate, &refs)
}

/// Between-class over within-class variance ratio of a distance profile.
///
/// Only labels that occur count as classes. `epsilon` is added to the
/// within-class term; when every class has a single member that term is
/// taken as zero.
pub fn fstat(distances: &[f64], labels: &[usize], epsilon: f64) -> Result<f64> {
    if distances.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} distances but {} labels",
            distances.len(),
            labels.len()
        )));
    }
    let width = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; width];
    let mut counts = vec![0usize; width];
    for (&d, &y) in distances.iter().zip(labels) {
        sums[y] += d;
        counts[y] += 1;
    }
    let classes: Vec<usize> = (0..width).filter(|&c| counts[c] > 0).collect();
    let v = classes.len();
    if v < 2 {
        return Err(Error::Domain(format!(
            "F-statistic needs at least 2 classes, found {v}"
        )));
    }
    let n = distances.len();
    let grand = distances.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = (0..width)
        .map(|c| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { 0.0 })
        .collect();
    let between = classes
        .iter()
        .map(|&c| (means[c] - grand).powi(2))
        .sum::<f64>()
        / (v - 1) as f64;
    let within_ss: f64 = distances
        .iter()
        .zip(labels)
        .map(|(&d, &y)| (d - means[y]).powi(2))
        .sum();
    let within = if n > v { within_ss / (n - v) as f64 } else { 0.0 };
    Ok(between / (within + epsilon))
}

/// Settings for [`select_shapelets`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub samples_per_class: usize,
    pub top_k: usize,
    pub stride: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            samples_per_class: 10,
            top_k: 100,
            stride: 1,
            seed: 0,
        }
    }
}

/// Descending F-statistic, then smaller offset, then smaller source id.
pub fn rank_order(a: &ShapeletQuality, b: &ShapeletQuality) -> Ordering {
    b.fstat
        .total_cmp(&a.fstat)
        .then(a.candidate.offset.cmp(&b.candidate.offset))
        .then_with(|| a.candidate.source_id.cmp(&b.candidate.source_id))
}

/// Scores every candidate over the evaluation samples.
pub fn score_candidates(
    candidates: Vec<ShapeletCandidate>,
    eval_set: &[&Sample],
) -> Result<Vec<ShapeletQuality>> {
    let labels: Vec<usize> = eval_set.iter().map(|s| s.label).collect();
    let score = |candidate: ShapeletCandidate| -> Result<ShapeletQuality> {
        let distances = sdist_profile(&candidate, eval_set)?;
        let fstat = fstat(&distances, &labels, FSTAT_EPSILON)?;
        Ok(ShapeletQuality {
            candidate,
            distances,
            fstat,
        })
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        candidates.into_par_iter().map(score).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        candidates.into_iter().map(score).collect()
    }
}

/// For every window `i` of `source` (length `len`), the start of the nearest
/// window of `target`. Dot products are carried along diagonals of the
/// window-pair grid, so the cost does not grow with `len`.
fn nearest_window_starts(source: &[f64], target: &[f64], len: usize) -> Vec<usize> {
    let ns = source.len() - len + 1;
    let nt = target.len() - len + 1;
    let window_sq = |x: &[f64]| -> Vec<f64> { x.windows(len).map(|w| w.iter().map(|v| v * v).sum()).collect() };
    let (ss, tt) = (window_sq(source), window_sq(target));
    let mut best = vec![f64::INFINITY; ns];
    let mut best_j = vec![0usize; ns];
    for k in -(ns as isize - 1)..nt as isize {
        let (mut i, mut j) = ((-k).max(0) as usize, k.max(0) as usize);
        let mut dot: f64 = source[i..i + len].iter().zip(&target[j..j + len]).map(|(a, b)| a * b).sum();
        loop {
            let d = ss[i] + tt[j] - 2.0 * dot;
            if d < best[i] || (d == best[i] && j < best_j[i]) {
                best[i] = d;
                best_j[i] = j;
            }
            if i + 1 >= ns || j + 1 >= nt {
                break;
            }
            dot += source[i + len] * target[j + len] - source[i] * target[j];
            i += 1;
            j += 1;
        }
    }
    best_j
}

fn window_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Scores every sliding window of every evaluation sample against the whole
/// evaluation set. The nearest window is located with running dot products
/// and its distance recomputed directly, so each entry agrees with [`sdist`]
/// up to near-ties at the rounding level.
fn score_all_windows(
    eval_set: &[&Sample],
    variable: usize,
    len: usize,
    stride: usize,
) -> Result<Vec<ShapeletQuality>> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let labels: Vec<usize> = eval_set.iter().map(|s| s.label).collect();
    let channel = |s: &Sample| -> Result<Vec<f64>> {
        s.channels
            .get(variable)
            .cloned()
            .ok_or_else(|| Error::Index(format!("variable {variable} out of range for sample {}", s.id)))
    };
    let channels = eval_set.iter().map(|s| channel(s)).collect::<Result<Vec<_>>>()?;
    let per_source = |src: usize| -> Result<Vec<ShapeletQuality>> {
        let source = &channels[src];
        let starts: Vec<Vec<usize>> = channels
            .iter()
            .map(|target| nearest_window_starts(source, target, len))
            .collect();
        (0..=source.len() - len)
            .step_by(stride)
            .map(|offset| {
                let values = source[offset..offset + len].to_vec();
                let distances: Vec<f64> = channels
                    .iter()
                    .zip(&starts)
                    .map(|(target, st)| window_distance(&values, &target[st[offset]..st[offset] + len]))
                    .collect();
                let fstat = fstat(&distances, &labels, FSTAT_EPSILON)?;
                Ok(ShapeletQuality {
                    candidate: ShapeletCandidate {
                        values,
                        variable,
                        source_id: eval_set[src].id.clone(),
                        offset,
                    },
                    distances,
                    fstat,
                })
            })
            .collect()
    };
    #[cfg(feature = "parallel")]
    let nested: Vec<Vec<ShapeletQuality>> = {
        use rayon::prelude::*;
        (0..eval_set.len()).into_par_iter().map(per_source).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let nested: Vec<Vec<ShapeletQuality>> = (0..eval_set.len()).map(per_source).collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Random-sampling single-scan shapelet discovery for one variable and length.
///
/// Draws up to `samples_per_class` samples from each class; those samples are
/// both the candidate sources and the evaluation set. Returns the `top_k`
/// best candidates in [`rank_order`].
pub fn select_shapelets(
    train: &Dataset,
    variable: usize,
    len: usize,
    cfg: &SelectionConfig,
) -> Result<Vec<ShapeletQuality>> {
    if variable >= train.channel_count() {
        return Err(Error::Index(format!(
            "variable {variable} out of range for {} channels",
            train.channel_count()
        )));
    }
    if len == 0 || len > train.length() {
        return Err(Error::Shape(format!(
            "shapelet length {len} must be in 1..={}",
            train.length()
        )));
    }
    if cfg.top_k == 0 || cfg.samples_per_class == 0 {
        return Err(Error::Config(
            "top_k and samples_per_class must be at least 1".into(),
        ));
    }
    if train.present_classes() < 2 {
        return Err(Error::Domain(
            "shapelet selection needs at least 2 classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picked = sample_per_class(train, cfg.samples_per_class, &mut rng);
    let eval_set: Vec<&Sample> = picked.iter().map(|&i| &train.samples()[i]).collect();
    let mut scored = score_all_windows(&eval_set, variable, len, cfg.stride)?;
    scored.sort_by(rank_order);
    scored.truncate(cfg.top_k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, label: usize, ch: Vec<f64>) -> Sample {
        Sample {
            id: id.into(),
            label,
            channels: vec![ch],
        }
    }

    #[test]
    fn candidate_counts() {
        let s = sample("a", 0, (0..10).map(f64::from).collect());
        assert_eq!(extract_candidates(&s, 0, 5, 1).unwrap().len(), 6);
        let whole = extract_candidates(&s, 0, 10, 1).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0].values, s.channels[0]);
        let strided = extract_candidates(&s, 0, 4, 3).unwrap();
        let offsets: Vec<usize> = strided.iter().map(|c| c.offset).collect();
        assert_eq!(offsets, vec![0, 3, 6]);
        assert!(matches!(extract_candidates(&s, 0, 11, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn sdist_examples() {
        assert_eq!(sdist(&[0.0, 1.0], &[3.0, 0.0, 1.0, 5.0]).unwrap(), 0.0);
        let d = sdist(&[1.0, 1.0], &[0.0, 2.0, 4.0]).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(sdist(&[5.0], &[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!(matches!(sdist(&[1.0; 4], &[1.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn profile_examples() {
        let a = sample("a", 0, vec![0.0, 2.0, 4.0]);
        let b = sample("b", 1, vec![3.0, 0.0, 1.0, 5.0]);
        let verbatim = ShapeletCandidate {
            values: vec![2.0, 4.0],
            variable: 0,
            source_id: "a".into(),
            offset: 1,
        };
        assert_eq!(sdist_profile(&verbatim, &[&a]).unwrap(), vec![0.0]);
        // windows of b: (3,0) -> 1+16, (0,1) -> 4+9, (1,5) -> 1+1
        let prof = sdist_profile(&verbatim, &[&a, &b]).unwrap();
        assert_eq!(prof, vec![0.0, 2f64.sqrt()]);
        assert!(sdist_profile(&verbatim, &[]).unwrap().is_empty());
    }

    #[test]
    fn fstat_examples() {
        let f = fstat(&[0.0, 0.2, 1.0, 1.2], &[0, 0, 1, 1], FSTAT_EPSILON).unwrap();
        assert!((f - 25.0).abs() / 25.0 < 1e-9, "{f}");
        let zero = fstat(&[1.0, 2.0, 1.0, 2.0], &[0, 0, 1, 1], FSTAT_EPSILON).unwrap();
        assert_eq!(zero, 0.0);
        let floor = fstat(&[0.0, 0.0, 1.0, 1.0], &[0, 0, 1, 1], 1e-12).unwrap();
        assert!((floor / 5e11 - 1.0).abs() < 1e-12);
        assert!(matches!(
            fstat(&[1.0, 2.0], &[0, 0], FSTAT_EPSILON),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_member_classes_use_epsilon_only() {
        let f = fstat(&[0.0, 1.0], &[0, 1], 1e-12).unwrap();
        assert!((f / 0.5e12 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn selection_saturates_and_sorts() {
        let samples = vec![
            sample("a", 0, vec![0.0, 0.0, 1.0, 0.0, 0.0]),
            sample("b", 0, vec![0.0, 1.0, 0.0, 0.0, 0.0]),
            sample("c", 1, vec![0.0, 0.0, 0.0, -1.0, 0.0]),
            sample("d", 1, vec![-1.0, 0.0, 0.0, 0.0, 0.0]),
        ];
        let ds = Dataset::new(samples, 2).unwrap();
        let cfg = SelectionConfig {
            top_k: 1000,
            ..SelectionConfig::default()
        };
        let out = select_shapelets(&ds, 0, 3, &cfg).unwrap();
        assert_eq!(out.len(), 4 * 3);
        assert!(out.windows(2).all(|w| rank_order(&w[0], &w[1]).is_le()));
        assert_eq!(out, select_shapelets(&ds, 0, 3, &cfg).unwrap());
    }

    #[test]
    fn selection_needs_two_classes() {
        let ds = Dataset::new(vec![sample("a", 0, vec![1.0, 2.0, 3.0])], 1).unwrap();
        let err = select_shapelets(&ds, 0, 2, &SelectionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn window_scan_matches_candidate_scoring() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Sample> = (0..6)
            .map(|i| sample(&format!("s{i}"), i % 2, (0..40).map(|_| rng.random_range(-2.0..2.0)).collect()))
            .collect();
        let refs: Vec<&Sample> = samples.iter().collect();
        for (len, stride) in [(1, 1), (7, 1), (12, 3), (40, 1)] {
            let fast = score_all_windows(&refs, 0, len, stride).unwrap();
            let mut candidates = Vec::new();
            for s in &refs {
                candidates.extend(extract_candidates(s, 0, len, stride).unwrap());
            }
            let slow = score_candidates(candidates, &refs).unwrap();
            assert_eq!(fast.len(), slow.len());
            for (a, b) in fast.iter().zip(&slow) {
                assert_eq!(a.candidate, b.candidate);
                for (x, y) in a.distances.iter().zip(&b.distances) {
                    assert!((x - y).abs() < 1e-10, "{x} {y}");
                }
                assert!((a.fstat - b.fstat).abs() <= 1e-8 * b.fstat.abs().max(1.0));
            }
        }
    }
}
