use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Param {
    fn new(value: Tensor) -> Self {
        let n = value.len();
        Param {
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Named parameters with gradient accumulators and Adam moments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
    step: u64,
    pending: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), Param::new(value));
    }

    /// Inserts a parameter drawn uniformly from `[-bound, bound]`.
    pub fn insert_uniform(&mut self, name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut impl Rng) {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.insert(name, Tensor { shape: shape.to_vec(), values });
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::Index(format!("unknown parameter {name}")))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::Index(format!("unknown parameter {name}")))
    }

    pub fn grad(&self, name: &str) -> Result<&[f64]> {
        self.params
            .get(name)
            .map(|p| p.grad.as_slice())
            .ok_or_else(|| Error::Index(format!("unknown parameter {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn accumulate(&mut self, name: &str, grad: &[f64]) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Index(format!("unknown parameter {name}")))?;
        for (g, d) in p.grad.iter_mut().zip(grad) {
            *g += d;
        }
        self.pending = true;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.pending = false;
    }

    /// Whether gradients were accumulated since the last step.
    pub fn has_pending_grad(&self) -> bool {
        self.pending
    }

    /// Flat copy of all parameter values, in name order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.values().flat_map(|p| p.value.values.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps_hat >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// One bias-corrected Adam update of every parameter, then zeroes gradients.
pub fn adam_step(store: &mut ParamStore, cfg: &AdamConfig) -> Result<()> {
    cfg.validate()?;
    if !store.pending {
        return Err(Error::State("optimizer step without accumulated gradients".into()));
    }
    store.step += 1;
    let t = store.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for p in store.params.values_mut() {
        for i in 0..p.grad.len() {
            let g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = p.m[i] / c1;
            let v_hat = p.v[i] / c2;
            p.value.values[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps_hat);
        }
    }
    store.zero_grad();
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    step: u64,
    params: BTreeMap<String, Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

/// Serializes parameter values (not optimizer moments) as a checkpoint.
pub fn checkpoint_to_json(store: &ParamStore, meta: Option<&serde_json::Value>) -> Result<String> {
    let file = CheckpointFile {
        step: store.step,
        params: store
            .params
            .iter()
            .map(|(k, p)| (k.clone(), p.value.clone()))
            .collect(),
        meta: meta.cloned(),
    };
    Ok(serde_json::to_string(&file)?)
}

/// Parses a checkpoint, returning the store and the optional meta object.
pub fn checkpoint_from_json(text: &str) -> Result<(ParamStore, Option<serde_json::Value>)> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    let mut store = ParamStore::new();
    for (name, t) in file.params {
        let t = Tensor::new(t.shape, t.values)?;
        store.insert(name, t);
    }
    store.step = file.step;
    Ok((store, file.meta))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ParamStore, Option<serde_json::Value>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_json(&text)
}

/// Checks that `loaded` has exactly the names and shapes of `reference`.
pub fn check_compatible(loaded: &ParamStore, reference: &ParamStore) -> Result<()> {
    for (name, p) in reference.iter() {
        match loaded.get(name) {
            Some(q) if q.value.shape == p.value.shape => {}
            Some(q) => {
                return Err(Error::Incompatible(format!(
                    "parameter {name} has shape {:?}, model expects {:?}",
                    q.value.shape, p.value.shape
                )))
            }
            None => return Err(Error::Incompatible(format!("checkpoint lacks parameter {name}"))),
        }
    }
    if let Some(extra) = loaded.names().find(|n| reference.get(n).is_none()) {
        return Err(Error::Incompatible(format!("unexpected parameter {extra}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::scalar(0.0));
        s.accumulate("theta", &[0.5]).unwrap();
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        let theta = s.value("theta").unwrap().item();
        assert!((theta + 0.001).abs() < 1e-10, "{theta}");
        assert_eq!(s.grad("theta").unwrap(), &[0.0]);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::vector(vec![1.5, -2.0]));
        s.accumulate("theta", &[0.0, 0.0]).unwrap();
        adam_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.value("theta").unwrap().values, vec![1.5, -2.0]);
    }

    #[test]
    fn step_without_backward_is_state_error() {
        let mut s = ParamStore::new();
        s.insert("theta", Tensor::scalar(0.0));
        assert!(matches!(adam_step(&mut s, &AdamConfig::default()), Err(Error::State(_))));
    }

    #[test]
    fn identical_stores_step_identically() {
        let mut a = ParamStore::new();
        a.insert("w", Tensor::vector(vec![0.3, -0.1, 2.0]));
        let mut b = a.clone();
        for s in [&mut a, &mut b] {
            for _ in 0..5 {
                s.accumulate("w", &[0.1, -0.7, 1e-3]).unwrap();
                adam_step(s, &AdamConfig::default()).unwrap();
            }
        }
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_and_shape_check() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::new(vec![2, 2], vec![0.1, 1.0 / 3.0, -2.5e-17, 7.0]).unwrap());
        s.insert("b", Tensor::vector(vec![std::f64::consts::PI]));
        let text = checkpoint_to_json(&s, Some(&serde_json::json!({"k": 1}))).unwrap();
        let (back, meta) = checkpoint_from_json(&text).unwrap();
        assert_eq!(back.flat_values(), s.flat_values());
        assert_eq!(meta.unwrap()["k"], 1);
        check_compatible(&back, &s).unwrap();

        let mut other = ParamStore::new();
        other.insert("a", Tensor::zeros(&[4]));
        other.insert("b", Tensor::zeros(&[1]));
        assert!(matches!(check_compatible(&other, &s), Err(Error::Incompatible(_))));
    }
}
