use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{metrics_from_predictions, MetricsReport};
use super::{argmax, Example, ExampleSet, ModelConfig, ShapeWordNet};
use crate::diffcore::{adam_step, cross_scale_loss, AdamConfig, Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Graph nodes of one batch objective.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub ce: Var,
    /// Present only when the contrastive term enters the objective.
    pub sc: Option<Var>,
    /// Cross-scale loss value for reporting, whether or not it was used.
    pub sc_value: f64,
}

/// Mean cross-entropy over the batch plus `lambda` times the cross-scale
/// InfoNCE loss of the batch representations.
pub fn joint_loss(g: &mut Graph, model: &ShapeWordNet, batch: &[&Example], lambda: f64, tau: f64) -> Result<LossParts> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Domain("empty batch".into()));
    }
    let h = model.scale_count();
    if lambda > 0.0 && h < 2 {
        return Err(Error::Config("lambda > 0 needs at least 2 scales".into()));
    }
    if lambda > 0.0 && n < 2 {
        return Err(Error::Domain("contrastive term needs at least 2 samples per batch".into()));
    }
    let mut per_scale: Vec<Vec<Var>> = vec![Vec::with_capacity(n); h];
    let mut ce_terms = Vec::with_capacity(n);
    for ex in batch {
        if ex.label >= model.class_count {
            return Err(Error::Index(format!("label {} outside 0..{}", ex.label, model.class_count)));
        }
        let (reps, logits) = model.forward(g, ex)?;
        for (u, r) in reps.into_iter().enumerate() {
            per_scale[u].push(r);
        }
        ce_terms.push(g.softmax_cross_entropy(logits, ex.label)?);
    }
    let ce = g.mean(&ce_terms)?;
    let mut sc = None;
    let mut sc_value = 0.0;
    if lambda > 0.0 {
        let mats = per_scale.iter().map(|reps| g.stack(reps)).collect::<Result<Vec<_>>>()?;
        let l = g.cross_scale(&mats, tau)?;
        sc_value = g.value(l).item();
        sc = Some(l);
    } else if h >= 2 && n >= 2 {
        let mats: Vec<Tensor> = per_scale
            .iter()
            .map(|reps| Tensor::from_rows(&reps.iter().map(|&r| g.value(r).values.clone()).collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        sc_value = cross_scale_loss(&mats, tau)?;
    }
    let total = match sc {
        Some(l) => g.weighted_sum(&[(ce, 1.0), (l, lambda)])?,
        None => ce,
    };
    Ok(LossParts { total, ce, sc, sc_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub sc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: ShapeWordNet,
    pub history: Vec<EpochRecord>,
}

/// Shuffled batches of `size`; a trailing batch of one sample joins the
/// previous batch.
pub(crate) fn batches(count: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(size.max(1)).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        let tail = out.pop().unwrap_or_default();
        if let Some(prev) = out.last_mut() {
            prev.extend(tail);
        }
    }
    out
}

/// Trains a freshly initialised model on `set`.
pub fn train(set: &ExampleSet, cfg: &ModelConfig) -> Result<Trained> {
    if set.scales != cfg.scales {
        return Err(Error::Incompatible(format!(
            "corpus scales {:?} differ from configured scales {:?}",
            set.scales, cfg.scales
        )));
    }
    if set.present_classes() < 2 {
        return Err(Error::Domain("training needs at least 2 classes".into()));
    }
    let model = ShapeWordNet::for_examples(cfg.clone(), set)?;
    train_model(model, set)
}

/// Continues training `model` on `set` for `model.config.epochs` epochs.
pub fn train_model(mut model: ShapeWordNet, set: &ExampleSet) -> Result<Trained> {
    let cfg = model.config.clone();
    if cfg.lambda > 0.0 && set.len() < 2 {
        return Err(Error::Domain("contrastive training needs at least 2 samples".into()));
    }
    let adam = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let (mut loss_sum, mut ce_sum, mut sc_sum) = (0.0, 0.0, 0.0);
        let plan = batches(set.len(), cfg.batch_size, &mut rng);
        for idx in &plan {
            let batch: Vec<&Example> = idx.iter().map(|&i| &set.examples[i]).collect();
            let mut g = Graph::new();
            let parts = joint_loss(&mut g, &model, &batch, cfg.lambda, cfg.tau)?;
            loss_sum += g.value(parts.total).item();
            ce_sum += g.value(parts.ce).item();
            sc_sum += parts.sc_value;
            g.backward(parts.total, &mut model.params)?;
            adam_step(&mut model.params, &adam)?;
        }
        let nb = plan.len().max(1) as f64;
        history.push(EpochRecord {
            epoch,
            loss: loss_sum / nb,
            ce: ce_sum / nb,
            sc: sc_sum / nb,
        });
    }
    Ok(Trained { model, history })
}

/// Predicted class of every example, in order.
pub fn predict(model: &ShapeWordNet, set: &ExampleSet) -> Result<Vec<usize>> {
    let one = |ex: &Example| model.logits(ex).map(|l| argmax(&l));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        set.examples.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        set.examples.iter().map(one).collect()
    }
}

pub fn evaluate(model: &ShapeWordNet, set: &ExampleSet) -> Result<MetricsReport> {
    if set.is_empty() {
        return Err(Error::Domain("cannot evaluate an empty set".into()));
    }
    check_compatible_set(model, set)?;
    let preds = predict(model, set)?;
    metrics_from_predictions(&preds, &set.labels(), model.class_count)
}

pub(crate) fn check_compatible_set(model: &ShapeWordNet, set: &ExampleSet) -> Result<()> {
    if model.input != set.input {
        return Err(Error::Incompatible(format!(
            "model input {:?} but data provides {:?}",
            model.input, set.input
        )));
    }
    if set.class_count > model.class_count {
        return Err(Error::Incompatible(format!(
            "data has {} classes, model predicts {}",
            set.class_count, model.class_count
        )));
    }
    if set.examples.iter().any(|e| e.views.len() != model.scale_count()) {
        return Err(Error::Incompatible("number of scales differs from the model".into()));
    }
    Ok(())
}
