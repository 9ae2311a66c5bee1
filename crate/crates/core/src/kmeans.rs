//! Lloyd's k-means with k-means++ seeding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Inertia after each centroid update, in iteration order.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the smaller index.
pub fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // rounding can leave `target` just above the last weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // fewer distinct points than k: take the first unused index
            (0..points.len()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn means(points: &[Vec<f64>], assignments: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        let c = c as f64;
        s.iter_mut().for_each(|v| *v /= c);
    }
    sums
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignments.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        match far {
            Some(i) => assignments[i] = empty,
            None => return,
        }
    }
}

fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// Clusters `points` into `cfg.k` groups.
///
/// Iterates assignment and mean updates until no centroid moves by more than
/// `tol` (Euclidean) or `max_iter` is reached. Returned centroids are the
/// means of the returned assignments.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult> {
    let k = cfg.k;
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Domain(format!(
            "k-means needs at least k={k} points, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Shape(format!(
            "point of dimension {} among points of dimension {dim}",
            bad.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![0usize; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iter.max(1) {
        iterations += 1;
        for (a, p) in assignments.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        repair_empty(points, &centroids, &mut assignments, k);
        let next = means(points, &assignments, k, dim);
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        history.push(inertia(points, &centroids, &assignments));
        if shift < cfg.tol {
            break;
        }
    }
    Ok(KMeansResult {
        centroids,
        assignments,
        inertia_history: history,
        iterations,
    })
}
