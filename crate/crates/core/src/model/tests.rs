use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::train::batches;
use super::*;
use crate::dataset::{Dataset, Sample};
use crate::diffcore::{grad_check, softmax_cross_entropy, GradCheckConfig};

fn small_config(scales: Vec<usize>) -> ModelConfig {
    ModelConfig {
        scales,
        embed_dim: 4,
        out_channels: 6,
        epochs: 3,
        batch_size: 4,
        ..ModelConfig::default()
    }
}

fn tokens_input(d: usize, k: usize) -> InputKind {
    InputKind::Tokens {
        channel_count: d,
        words_per_block: k,
    }
}

fn random_example(rng: &mut ChaCha8Rng, id: usize, label: usize, d: usize, k: usize, lens: &[usize]) -> Example {
    Example {
        id: format!("e{id}"),
        label,
        views: lens
            .iter()
            .map(|&s| EncoderInput::Tokens((0..d).map(|_| (0..s).map(|_| rng.random_range(0..k)).collect()).collect()))
            .collect(),
    }
}

/// Class c: every token equals c (mod k) in every view.
fn separable_set(per_class: usize, classes: usize, d: usize, lens: &[usize]) -> ExampleSet {
    let examples = (0..classes * per_class)
        .map(|i| {
            let label = i % classes;
            Example {
                id: format!("e{i}"),
                label,
                views: lens.iter().map(|&s| EncoderInput::Tokens(vec![vec![label; s]; d])).collect(),
            }
        })
        .collect();
    ExampleSet {
        input: tokens_input(d, classes),
        scales: lens.to_vec(),
        class_count: classes,
        vocab_fingerprint: None,
        examples,
    }
}

fn zeroed(model: &mut ShapeWordNet) {
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for n in names {
        model.params.value_mut(&n).unwrap().values.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[test]
fn default_shapes() {
    let cfg = ModelConfig::default();
    assert_eq!(cfg.integrated_len(), 200);
    let model = ShapeWordNet::new(cfg, tokens_input(2, 3), 3, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let ex = random_example(&mut rng, 0, 0, 2, 3, &[50, 20, 10]);
    let mut g = Graph::new();
    let (reps, logits) = model.forward(&mut g, &ex).unwrap();
    for r in reps {
        assert_eq!(g.value(r).shape, vec![50]);
    }
    assert_eq!(g.value(logits).shape, vec![3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shape_laws_hold_for_random_configs(
        embed_dim in 1usize..5,
        depth in 1usize..4,
        kernel in 1usize..4,
        p in 1usize..6,
        sfi_out in 1usize..4,
        sfi_half in 0usize..3,
        h in 1usize..4,
        d in 1usize..3,
        k in 2usize..4,
        classes in 2usize..5,
        seed in 0u64..1000,
    ) {
        let scales: Vec<usize> = (1..=h).collect();
        let cfg = ModelConfig {
            scales,
            embed_dim,
            layer_depth: depth,
            kernel_size: kernel,
            out_channels: p,
            dilations: ModelConfig::doubling_dilations(depth),
            sfi_out_channels: sfi_out,
            sfi_kernel: 2 * sfi_half + 1,
            lambda: if h > 1 { 0.5 } else { 0.0 },
            seed,
            ..ModelConfig::default()
        };
        let model = ShapeWordNet::new(cfg, tokens_input(d, k), h, classes).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lens: Vec<usize> = (0..h).map(|_| rng.random_range(1..12)).collect();
        let ex = random_example(&mut rng, 0, 0, d, k, &lens);
        let mut g = Graph::new();
        let reps: Vec<Var> = ex.views.iter().enumerate().map(|(u, v)| model.encode(&mut g, u, v).unwrap()).collect();
        for &r in &reps {
            prop_assert_eq!(&g.value(r).shape, &vec![p]);
        }
        let fused = model.integrate(&mut g, &reps).unwrap();
        prop_assert_eq!(&g.value(fused).shape, &vec![sfi_out * p]);
        let logits = model.classify(&mut g, fused).unwrap();
        prop_assert_eq!(&g.value(logits).shape, &vec![classes]);
    }
}

#[test]
fn identical_sentences_give_identical_representations() {
    let model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(2, 3), 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ex = random_example(&mut rng, 0, 0, 2, 3, &[9, 4]);
    let a = model.representation(0, &ex.views[0]).unwrap();
    let b = model.representation(0, &ex.views[0].clone()).unwrap();
    assert_eq!(a.values, b.values);
}

#[test]
fn final_token_does_not_reach_earlier_positions() {
    let model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(2, 4), 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ex = random_example(&mut rng, 0, 0, 2, 4, &[12, 5]);
    let EncoderInput::Tokens(rows) = &ex.views[0] else { unreachable!() };
    let mut changed = rows.clone();
    for row in &mut changed {
        let last = row.len() - 1;
        row[last] = (row[last] + 1) % 4;
    }
    let mut g = Graph::new();
    let (base, _) = model.encode_layers(&mut g, 0, &ex.views[0]).unwrap();
    let (alt, _) = model.encode_layers(&mut g, 0, &EncoderInput::Tokens(changed)).unwrap();
    let s = 12;
    let mut any_diff_at_end = false;
    for (a, b) in base.iter().zip(&alt) {
        let (a, b) = (g.value(*a), g.value(*b));
        assert_eq!(a.shape, vec![6, s]);
        for c in 0..6 {
            for t in 0..s - 1 {
                assert_eq!(a.values[c * s + t], b.values[c * s + t]);
            }
            any_diff_at_end |= a.values[c * s + s - 1] != b.values[c * s + s - 1];
        }
    }
    assert!(any_diff_at_end);
}

#[test]
fn token_out_of_range_is_index_error() {
    let model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(1, 3), 2, 2).unwrap();
    let view = EncoderInput::Tokens(vec![vec![0, 3]]);
    assert!(matches!(model.representation(0, &view), Err(Error::Index(_))));
}

#[test]
fn single_scale_unit_kernel_integration_scales_the_representation() {
    let cfg = ModelConfig {
        sfi_out_channels: 2,
        sfi_kernel: 1,
        lambda: 0.0,
        ..small_config(vec![10])
    };
    let mut model = ShapeWordNet::new(cfg, tokens_input(1, 3), 1, 2).unwrap();
    *model.params.value_mut(names::SFI_W).unwrap() = Tensor::new(vec![2, 1, 1], vec![1.0, -2.0]).unwrap();
    *model.params.value_mut(names::SFI_B).unwrap() = Tensor::zeros(&[2]);
    let mut g = Graph::new();
    let e = model.encode(&mut g, 0, &EncoderInput::Tokens(vec![vec![0, 2, 1]])).unwrap();
    let fused = model.integrate(&mut g, &[e]).unwrap();
    let ev = g.value(e).values.clone();
    let fv = &g.value(fused).values;
    assert_eq!(&fv[..6], ev.as_slice());
    let doubled: Vec<f64> = ev.iter().map(|x| -2.0 * x).collect();
    assert_eq!(&fv[6..], doubled.as_slice());
}

#[test]
fn integrate_rejects_wrong_count_and_depends_on_scale_order() {
    let model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(1, 3), 2, 2).unwrap();
    let mut g = Graph::new();
    let a = g.input(Tensor::vector(vec![1.0, 0.0, 2.0, 0.5, 0.0, 3.0]));
    let b = g.input(Tensor::vector(vec![0.0, 1.0, 0.0, 0.0, 4.0, 1.0]));
    assert!(matches!(model.integrate(&mut g, &[a]), Err(Error::Shape(_))));
    let ab = model.integrate(&mut g, &[a, b]).unwrap();
    let ba = model.integrate(&mut g, &[b, a]).unwrap();
    assert_ne!(g.value(ab).values, g.value(ba).values);
}

#[test]
fn classify_follows_the_bias_when_weights_vanish() {
    let mut model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(1, 3), 2, 5).unwrap();
    zeroed(&mut model);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ex = random_example(&mut rng, 0, 0, 1, 3, &[5, 2]);
    let logits = model.logits(&ex).unwrap();
    assert_eq!(logits, vec![0.0; 5]);
    assert_eq!(argmax(&logits), 0);
    let mut b = vec![0.0; 5];
    b[3] = 10.0;
    *model.params.value_mut(names::HEAD_B).unwrap() = Tensor::vector(b);
    assert_eq!(argmax(&model.logits(&ex).unwrap()), 3);
}

#[test]
fn prediction_is_invariant_to_uniform_bias_offset() {
    let mut model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(2, 3), 2, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let exs: Vec<Example> = (0..10).map(|i| random_example(&mut rng, i, 0, 2, 3, &[6, 3])).collect();
    let before: Vec<usize> = exs.iter().map(|e| argmax(&model.logits(e).unwrap())).collect();
    for x in model.params.value_mut(names::HEAD_B).unwrap().values.iter_mut() {
        *x += 123.5;
    }
    let after: Vec<usize> = exs.iter().map(|e| argmax(&model.logits(e).unwrap())).collect();
    assert_eq!(before, after);
}

#[test]
fn zero_lambda_loss_is_the_mean_cross_entropy() {
    let model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(2, 3), 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let exs: Vec<Example> = (0..5).map(|i| random_example(&mut rng, i, i % 3, 2, 3, &[8, 3])).collect();
    let batch: Vec<&Example> = exs.iter().collect();
    let mut g = Graph::new();
    let parts = joint_loss(&mut g, &model, &batch, 0.0, 1.0).unwrap();
    assert_eq!(parts.total, parts.ce);
    assert!(parts.sc.is_none());
    let oracle: f64 = exs
        .iter()
        .map(|e| softmax_cross_entropy(&Tensor::vector(model.logits(e).unwrap()), e.label).unwrap())
        .sum::<f64>()
        / exs.len() as f64;
    assert_eq!(g.value(parts.total).item(), oracle);
}

#[test]
fn zero_parameters_give_uniform_losses() {
    let mut model = ShapeWordNet::new(small_config(vec![10, 25]), tokens_input(2, 3), 2, 3).unwrap();
    zeroed(&mut model);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let exs: Vec<Example> = (0..6).map(|i| random_example(&mut rng, i, i % 3, 2, 3, &[7, 4])).collect();
    let batch: Vec<&Example> = exs.iter().collect();
    let mut g = Graph::new();
    let parts = joint_loss(&mut g, &model, &batch, 0.5, 1.0).unwrap();
    let ce = g.value(parts.ce).item();
    assert!((ce - 3f64.ln()).abs() < 1e-12);
    // every representation is the zero vector, so each anchor is uniform over 6
    assert!((parts.sc_value - 6f64.ln()).abs() < 1e-12);
    let total = g.value(parts.total).item();
    assert!((total - (3f64.ln() + 0.5 * 6f64.ln())).abs() < 1e-12);
}

#[test]
fn joint_loss_preconditions() {
    let single = ModelConfig {
        lambda: 0.0,
        ..small_config(vec![10])
    };
    let model = ShapeWordNet::new(single, tokens_input(1, 2), 1, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let exs: Vec<Example> = (0..3).map(|i| random_example(&mut rng, i, i % 2, 1, 2, &[4])).collect();
    let batch: Vec<&Example> = exs.iter().collect();
    let mut g = Graph::new();
    assert!(matches!(joint_loss(&mut g, &model, &batch, 0.5, 1.0), Err(Error::Config(_))));
    let parts = joint_loss(&mut g, &model, &batch, 0.0, 1.0).unwrap();
    assert_eq!(parts.sc_value, 0.0);

    let bad = ModelConfig {
        lambda: 0.5,
        ..small_config(vec![10])
    };
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn joint_gradients_match_finite_differences() {
    let cfg = ModelConfig {
        embed_dim: 2,
        out_channels: 3,
        layer_depth: 2,
        dilations: vec![1, 2],
        sfi_out_channels: 2,
        ..small_config(vec![4, 8])
    };
    let model = ShapeWordNet::new(cfg, tokens_input(2, 3), 2, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let exs: Vec<Example> = (0..4).map(|i| random_example(&mut rng, i, i % 3, 2, 3, &[6, 3])).collect();
    let batch: Vec<&Example> = exs.iter().collect();
    let report = grad_check(
        &model.params,
        |g, s| {
            let m = ShapeWordNet {
                params: s.clone(),
                ..model.clone()
            };
            joint_loss(g, &m, &batch, 0.5, 1.0).map(|p| p.total)
        },
        &GradCheckConfig {
            max_coords: 150,
            ..GradCheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn batches_cover_every_index_and_fold_singletons() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = batches(61, 30, &mut rng);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![30, 31]);
    let b = batches(62, 30, &mut rng);
    assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![30, 30, 2]);
    let mut all: Vec<usize> = b.into_iter().flatten().collect();
    all.sort_unstable();
    assert_eq!(all, (0..62).collect::<Vec<_>>());
}

#[test]
fn training_is_deterministic_and_records_every_epoch() {
    let set = separable_set(4, 3, 2, &[6, 3]);
    let cfg = small_config(vec![6, 3]);
    let a = train(&set, &cfg).unwrap();
    let b = train(&set, &cfg).unwrap();
    assert_eq!(a.history.len(), cfg.epochs);
    assert_eq!(a.model.params.flat_values(), b.model.params.flat_values());
    assert_eq!(a.history, b.history);
    let c = train(&set, &ModelConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.model.params.flat_values(), c.model.params.flat_values());
}

#[test]
fn training_reduces_cross_entropy_on_separable_tokens() {
    let set = separable_set(6, 3, 2, &[6, 3]);
    let cfg = ModelConfig {
        epochs: 30,
        learning_rate: 0.01,
        ..small_config(vec![6, 3])
    };
    let trained = train(&set, &cfg).unwrap();
    let first = trained.history.first().unwrap().ce;
    let last = trained.history.last().unwrap().ce;
    assert!(last < first, "{first} -> {last}");
    let report = evaluate(&trained.model, &set).unwrap();
    assert_eq!(report.acc, 1.0);
}

#[test]
fn raw_input_trains_and_evaluates() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let samples: Vec<Sample> = (0..12)
        .map(|i| {
            let label = i % 2;
            let level = if label == 0 { -1.0 } else { 1.0 };
            Sample {
                id: format!("r{i}"),
                label,
                channels: vec![(0..16).map(|_| level + 0.1 * rng.random_range(-1.0..1.0)).collect()],
            }
        })
        .collect();
    let ds = Dataset::from_samples(samples).unwrap();
    let set = ExampleSet::from_raw(&ds);
    let cfg = ModelConfig {
        lambda: 0.0,
        epochs: 20,
        learning_rate: 0.01,
        ..small_config(set.scales.clone())
    };
    let trained = train(&set, &cfg).unwrap();
    assert!(trained.model.params.get(&names::embed(0, 0)).is_none());
    assert_eq!(evaluate(&trained.model, &set).unwrap().acc, 1.0);

    let tokens = separable_set(2, 2, 1, &[1]);
    assert!(matches!(evaluate(&trained.model, &tokens), Err(Error::Incompatible(_))));
}

#[test]
fn training_and_evaluation_errors() {
    let mut set = separable_set(3, 2, 1, &[4, 2]);
    let cfg = small_config(vec![4, 2]);
    assert!(matches!(train(&set, &small_config(vec![4, 3])), Err(Error::Incompatible(_))));
    for e in &mut set.examples {
        e.label = 1;
    }
    assert!(matches!(train(&set, &cfg), Err(Error::Domain(_))));
    let good = separable_set(3, 2, 1, &[4, 2]);
    let trained = train(&good, &ModelConfig { epochs: 1, ..cfg }).unwrap();
    let empty = ExampleSet {
        examples: Vec::new(),
        ..good
    };
    assert!(matches!(evaluate(&trained.model, &empty), Err(Error::Domain(_))));
}

#[test]
fn evaluation_confusion_sums_to_corpus_size() {
    let set = separable_set(5, 3, 1, &[5, 2]);
    let trained = train(&set, &ModelConfig { epochs: 1, ..small_config(vec![5, 2]) }).unwrap();
    let report = evaluate(&trained.model, &set).unwrap();
    assert_eq!(report.total(), set.len());
    for (c, row) in report.confusion.iter().enumerate() {
        assert_eq!(row.iter().sum::<usize>(), set.labels().iter().filter(|&&l| l == c).count());
    }
}

#[test]
fn variant_names_round_trip() {
    for v in AblationVariant::ALL {
        assert_eq!(v.as_str().parse::<AblationVariant>().unwrap(), v);
    }
    assert!(matches!("none".parse::<AblationVariant>(), Err(Error::Config(_))));
}
