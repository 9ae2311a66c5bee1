//! Independent reference implementations used as test oracles.

#![allow(dead_code)]

/// Minimum Euclidean distance over all windows, no pruning.
pub fn brute_sdist(shapelet: &[f64], series: &[f64]) -> f64 {
    let l = shapelet.len();
    let mut best = f64::INFINITY;
    for start in 0..=series.len() - l {
        let mut acc = 0.0;
        for m in 0..l {
            let d = shapelet[m] - series[start + m];
            acc += d * d;
        }
        if acc < best {
            best = acc;
        }
    }
    best.sqrt()
}

/// Between-class over within-class variance, written out with per-class
/// member lists.
pub fn direct_fstat(d: &[f64], labels: &[usize], epsilon: f64) -> f64 {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let v = classes.len() as f64;
    let n = d.len() as f64;
    let grand = d.iter().sum::<f64>() / n;
    let mut between = 0.0;
    let mut within = 0.0;
    for &c in &classes {
        let members: Vec<f64> = d.iter().zip(labels).filter(|(_, &l)| l == c).map(|(x, _)| *x).collect();
        let mean = members.iter().sum::<f64>() / members.len() as f64;
        between += (mean - grand).powi(2);
        within += members.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    }
    let within_term = if n > v { within / (n - v) } else { 0.0 };
    (between / (v - 1.0)) / (within_term + epsilon)
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
