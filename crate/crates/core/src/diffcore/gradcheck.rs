use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Check every coordinate when the model has at most this many,
    /// otherwise a random subset of this size.
    pub max_coords: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            max_coords: 400,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// (parameter, index, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares tape gradients of `build`'s scalar output against central
/// finite differences over the store's parameters.
pub fn grad_check<F>(store: &ParamStore, build: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut analytic_store = store.clone();
    analytic_store.zero_grad();
    let mut g = Graph::new();
    let loss = build(&mut g, &analytic_store)?;
    g.backward(loss, &mut analytic_store)?;

    let coords: Vec<(String, usize)> = store
        .iter()
        .flat_map(|(name, p)| (0..p.value.len()).map(move |i| (name.to_string(), i)))
        .collect();
    let chosen: Vec<usize> = if coords.len() <= cfg.max_coords {
        (0..coords.len()).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut idx = sample(&mut rng, coords.len(), cfg.max_coords).into_vec();
        idx.sort_unstable();
        idx
    };

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let loss = build(&mut g, s)?;
        Ok(g.value(loss).item())
    };
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: chosen.len(),
        worst: None,
    };
    for &c in &chosen {
        let (name, i) = &coords[c];
        let original = probe.value(name)?.values[*i];
        probe.value_mut(name)?.values[*i] = original + cfg.step;
        let plus = eval(&probe)?;
        probe.value_mut(name)?.values[*i] = original - cfg.step;
        let minus = eval(&probe)?;
        probe.value_mut(name)?.values[*i] = original;
        let numeric = (plus - minus) / (2.0 * cfg.step);
        let analytic = analytic_store.grad(name)?[*i];
        let err = relative_error(analytic, numeric);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((name.clone(), *i, analytic, numeric));
        }
    }
    Ok(report)
}
