use shapeword::dataset::{generate_synthetic, load_dataset, split, write_dataset, znormalize, Dataset, SynthConfig};
use shapeword::diffcore::{check_compatible, checkpoint_from_json, checkpoint_to_json};
use shapeword::discretize::{load_corpus, mst, write_corpus};
use shapeword::model::{ablate, evaluate, run_pipeline, train, AblationVariant, ExampleSet, ModelConfig, PipelineConfig};
use shapeword::vocab::{build_vocabulary, Vocabulary, VocabConfig};
use shapeword::Error;

fn small_data(seed: u64) -> (Dataset, Dataset) {
    let ds = generate_synthetic(&SynthConfig {
        length: 60,
        motif_length: 12,
        samples_per_class: 8,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    split(&znormalize(&ds), 0.25, seed).unwrap()
}

fn small_config() -> PipelineConfig {
    PipelineConfig {
        vocab: VocabConfig {
            samples_per_class: 3,
            top_k: 12,
            ..VocabConfig::default()
        },
        model: ModelConfig {
            scales: vec![4, 12],
            out_channels: 8,
            embed_dim: 4,
            epochs: 3,
            batch_size: 6,
            ..ModelConfig::default()
        },
    }
}

#[test]
fn artifacts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let (train_ds, _) = small_data(1);
    let data_path = dir.path().join("train.jsonl");
    write_dataset(&train_ds, Some(&serde_json::json!({"tool_version": "t"})), std::fs::File::create(&data_path).unwrap()).unwrap();
    let loaded = load_dataset(&data_path).unwrap();
    assert_eq!(loaded.samples(), train_ds.samples());

    let cfg = small_config();
    let vocab = build_vocabulary(&train_ds, &VocabConfig { scales: cfg.model.scales.clone(), ..cfg.vocab.clone() }).unwrap();
    let vocab_path = dir.path().join("vocab.json");
    std::fs::write(&vocab_path, vocab.to_json(Some(&serde_json::json!({"k": 1}))).unwrap()).unwrap();
    let vocab_back = Vocabulary::load(&vocab_path).unwrap();
    assert_eq!(vocab_back, vocab);
    assert_eq!(vocab_back.fingerprint(), vocab.fingerprint());

    let corpus = mst(&train_ds, &vocab, &cfg.model.scales).unwrap();
    let corpus_path = dir.path().join("corpus.jsonl");
    write_corpus(&corpus, None, std::fs::File::create(&corpus_path).unwrap()).unwrap();
    assert_eq!(load_corpus(&corpus_path).unwrap(), corpus);

    let trained = train(&ExampleSet::from_corpus(&corpus), &cfg.model).unwrap();
    let text = checkpoint_to_json(&trained.model.params, None).unwrap();
    let (params, _) = checkpoint_from_json(&text).unwrap();
    check_compatible(&params, &trained.model.params).unwrap();
    assert_eq!(params.flat_values(), trained.model.params.flat_values());
}

#[test]
fn full_variant_is_the_train_evaluate_composition() {
    let (train_ds, test_ds) = small_data(2);
    let cfg = small_config();
    let out = run_pipeline(&train_ds, &test_ds, &cfg).unwrap();
    let vocab = build_vocabulary(&train_ds, &VocabConfig { scales: cfg.model.scales.clone(), ..cfg.vocab.clone() }).unwrap();
    let tr = ExampleSet::from_corpus(&mst(&train_ds, &vocab, &cfg.model.scales).unwrap());
    let te = ExampleSet::from_corpus(&mst(&test_ds, &vocab, &cfg.model.scales).unwrap());
    let trained = train(&tr, &cfg.model).unwrap();
    assert_eq!(out.metrics, evaluate(&trained.model, &te).unwrap());
    assert_eq!(out.history, trained.history);
    assert_eq!(out.vocab_fingerprint, Some(vocab.fingerprint()));
    assert_eq!(ablate(&train_ds, &test_ds, AblationVariant::Full, &cfg).unwrap(), out);
}

#[test]
fn reduced_variants_run() {
    let (train_ds, test_ds) = small_data(3);
    let cfg = small_config();
    let no_cclm = ablate(&train_ds, &test_ds, AblationVariant::NoCclm, &cfg).unwrap();
    assert!(no_cclm.history.iter().all(|h| h.sc == 0.0));
    let no_sd = ablate(&train_ds, &test_ds, AblationVariant::NoSd, &cfg).unwrap();
    assert!(no_sd.vocab_fingerprint.is_none());
    for out in [&no_cclm, &no_sd] {
        assert_eq!(out.metrics.total(), test_ds.len());
        assert!((0.0..=1.0).contains(&out.metrics.acc));
    }
}

#[test]
fn corpus_from_another_vocabulary_is_rejected() {
    let (train_ds, test_ds) = small_data(4);
    let cfg = small_config();
    let trained_on = ExampleSet::from_corpus(&mst(
        &train_ds,
        &build_vocabulary(&train_ds, &VocabConfig { scales: cfg.model.scales.clone(), ..cfg.vocab.clone() }).unwrap(),
        &cfg.model.scales,
    ).unwrap());
    let trained = train(&trained_on, &cfg.model).unwrap();
    let raw = ExampleSet::from_raw(&test_ds);
    assert!(matches!(evaluate(&trained.model, &raw), Err(Error::Incompatible(_))));
}
