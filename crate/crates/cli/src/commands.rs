use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use shapeword::dataset::{self, generate_synthetic, load_dataset, sample_per_class, write_dataset, znormalize, Dataset};
use shapeword::diffcore::{check_compatible, checkpoint_to_json, load_checkpoint};
use shapeword::discretize::{load_corpus, mst, write_corpus, MultiScaleCorpus};
use shapeword::model::{
    ablate as run_variant, evaluate as score, run_pipeline, train as fit_model, AblationVariant, ExampleSet, InputKind,
    MetricsReport, ModelConfig, PipelineConfig, PipelineOutcome, ShapeWordNet,
};
use shapeword::vocab::{evaluate_vocabulary, fit_vocabulary, Vocabulary};
use shapeword::{Error, Result};

use crate::config::RunConfig;
use crate::{AblateArgs, DiscretizeArgs, EvaluateArgs, FitVocabArgs, SplitArgs, SweepArgs, SweepParam, SynthArgs, TrainArgs};

const TOOL_VERSION: &str = concat!("shapeword ", env!("CARGO_PKG_VERSION"));
const VALIDATION_PER_CLASS: usize = 10;

fn meta(config: impl Serialize) -> Result<Value> {
    Ok(json!({ "tool_version": TOOL_VERSION, "config": serde_json::to_value(config)? }))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut out = create(path)?;
    out.write_all(text.as_bytes())
        .and_then(|_| out.write_all(b"\n"))
        .and_then(|_| out.flush())
        .map_err(|e| io_error(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

/// Loads a dataset and z-normalizes every channel.
fn ingest(path: &Path) -> Result<Dataset> {
    load_dataset(path).map(|ds| znormalize(&ds))
}

fn check_scales(scales: &[usize], length: usize) -> Result<()> {
    match scales.iter().find(|&&l| l == 0 || l > length) {
        Some(l) => Err(Error::Config(format!("scale {l} must lie in 1..={length} (series length)"))),
        None => Ok(()),
    }
}

/// Training and test sets: either two files, or a stratified split of one.
fn train_test(data: &Path, test_data: Option<&Path>, cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let ds = ingest(data)?;
    match test_data {
        Some(p) => Ok((ds, ingest(p)?)),
        None => dataset::split(&ds, cfg.test_fraction(), cfg.split_seed()),
    }
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.classes = a.classes.or(cfg.classes);
    cfg.channels = a.channels.or(cfg.channels);
    cfg.length = a.length.or(cfg.length);
    cfg.per_class = a.per_class.or(cfg.per_class);
    cfg.sigma = a.sigma.or(cfg.sigma);
    cfg.motif = a.motif.or(cfg.motif);
    cfg.data_seed = a.seed.or(cfg.data_seed);
    let synth = cfg.synth();
    let ds = generate_synthetic(&synth)?;
    let mut out = create(&a.out)?;
    write_dataset(&ds, Some(&meta(&synth)?), &mut out)?;
    out.flush().map_err(|e| io_error(&a.out, e))?;
    println!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(())
}

pub fn split(a: SplitArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.test_fraction = a.test_fraction.or(cfg.test_fraction);
    cfg.split_seed = a.seed.or(cfg.split_seed);
    let ds = load_dataset(&a.data)?;
    let (train, test) = dataset::split(&ds, cfg.test_fraction(), cfg.split_seed())?;
    let m = meta(json!({ "test_fraction": cfg.test_fraction(), "split_seed": cfg.split_seed() }))?;
    for (set, path) in [(&train, &a.train_out), (&test, &a.test_out)] {
        let mut out = create(path)?;
        write_dataset(set, Some(&m), &mut out)?;
        out.flush().map_err(|e| io_error(path, e))?;
    }
    println!("{} train, {} test", train.len(), test.len());
    Ok(())
}

pub fn fit_vocab(a: FitVocabArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.scales = a.scales.or(cfg.scales);
    cfg.words = a.words.or(cfg.words);
    cfg.top_k = a.top_k.or(cfg.top_k);
    cfg.per_class_samples = a.per_class_samples.or(cfg.per_class_samples);
    cfg.vocab_seed = a.seed.or(cfg.vocab_seed);
    let vcfg = cfg.vocab();
    let ds = ingest(&a.data)?;
    check_scales(&vcfg.scales, ds.length())?;
    let fitted = fit_vocabulary(&ds, &vcfg)?;
    write_text(&a.out, &fitted.vocabulary.to_json(Some(&meta(&vcfg)?))?)?;
    println!(
        "{} words over scales {:?}, fingerprint {}",
        fitted.vocabulary.entries.len(),
        vcfg.scales,
        fitted.vocabulary.fingerprint()
    );
    if let Some(path) = a.report {
        let mut rng = ChaCha8Rng::seed_from_u64(vcfg.seed ^ 0x7661_6c69);
        let validation = ds.select(&sample_per_class(&ds, VALIDATION_PER_CLASS, &mut rng))?;
        let report = evaluate_vocabulary(&fitted, &validation)?;
        for s in &report.scales {
            println!(
                "scale {}: shapeword mean F {:.4}, shapelet mean F {:.4}",
                s.scale, s.shapeword_mean_fstat, s.shapelet_mean_fstat
            );
        }
        let mut doc = serde_json::to_value(&report)?;
        doc["meta"] = meta(&vcfg)?;
        write_json(&path, &doc)?;
    }
    Ok(())
}

pub fn discretize(a: DiscretizeArgs) -> Result<()> {
    let ds = ingest(&a.data)?;
    let vocab = Vocabulary::load(&a.vocab)?;
    let scales = a.scales.unwrap_or_else(|| vocab.scales.clone());
    check_scales(&scales, ds.length())?;
    if let Some(l) = scales.iter().find(|&&l| vocab.scale_index(l).is_none()) {
        return Err(Error::Incompatible(format!("vocabulary has no words of length {l}")));
    }
    let corpus = mst(&ds, &vocab, &scales)?;
    let mut out = create(&a.out)?;
    write_corpus(&corpus, Some(&meta(json!({ "scales": scales }))?), &mut out)?;
    out.flush().map_err(|e| io_error(&a.out, e))?;
    println!("{} sentences per sample, scales {:?}", scales.len(), scales);
    Ok(())
}

/// The corpus restricted to `scales`, in that order.
fn corpus_at(corpus: &MultiScaleCorpus, scales: &[usize]) -> Result<MultiScaleCorpus> {
    if corpus.scales == scales {
        return Ok(corpus.clone());
    }
    corpus.restrict_scales(scales).map_err(|e| match e {
        Error::Config(m) => Error::Incompatible(m),
        other => other,
    })
}

#[derive(Serialize, serde::Deserialize)]
struct ModelMeta {
    tool_version: String,
    config: ModelConfig,
    input: InputKind,
    class_count: usize,
    vocab_fingerprint: Option<String>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    cfg.seed = a.seed.or(cfg.seed);
    cfg.epochs = a.epochs.or(cfg.epochs);
    cfg.lambda = a.lambda.or(cfg.lambda);
    let corpus = load_corpus(&a.corpus)?;
    if cfg.scales.is_none() {
        cfg.scales = Some(corpus.scales.clone());
    }
    let mcfg = cfg.model();
    mcfg.validate()?;
    let set = ExampleSet::from_corpus(&corpus_at(&corpus, &mcfg.scales)?);
    let trained = fit_model(&set, &mcfg)?;
    let m = ModelMeta {
        tool_version: TOOL_VERSION.into(),
        config: mcfg,
        input: trained.model.input,
        class_count: trained.model.class_count,
        vocab_fingerprint: set.vocab_fingerprint.clone(),
    };
    write_text(&a.out_model, &checkpoint_to_json(&trained.model.params, Some(&serde_json::to_value(&m)?))?)?;
    if let Some(path) = &a.out_history {
        write_json(path, &trained.history)?;
    }
    if let Some(last) = trained.history.last() {
        println!(
            "epoch {}: loss {:.5} (ce {:.5}, sc {:.5})",
            last.epoch, last.loss, last.ce, last.sc
        );
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(ShapeWordNet, Option<String>)> {
    let (params, meta) = load_checkpoint(path)?;
    let meta: ModelMeta = serde_json::from_value(
        meta.ok_or_else(|| Error::Incompatible(format!("{}: checkpoint has no model header", path.display())))?,
    )
    .map_err(|e| Error::Incompatible(format!("{}: bad model header: {e}", path.display())))?;
    let mut model = ShapeWordNet::new(meta.config.clone(), meta.input, meta.config.scales.len(), meta.class_count)?;
    check_compatible(&params, &model.params)?;
    model.params = params;
    Ok((model, meta.vocab_fingerprint))
}

#[derive(Serialize)]
struct MetricsDoc<'a> {
    #[serde(flatten)]
    metrics: &'a MetricsReport,
    meta: Value,
}

fn print_metrics(label: &str, m: &MetricsReport) {
    println!("{label}acc {:.4}, maf1 {:.4} over {} samples", m.acc, m.maf1, m.total());
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (model, fingerprint) = load_model(&a.model)?;
    let corpus = load_corpus(&a.corpus)?;
    if fingerprint.as_deref() != Some(corpus.vocab_fingerprint.as_str()) {
        return Err(Error::Incompatible(format!(
            "corpus was built with vocabulary {}, model was trained on {}",
            corpus.vocab_fingerprint,
            fingerprint.as_deref().unwrap_or("raw input")
        )));
    }
    let set = ExampleSet::from_corpus(&corpus_at(&corpus, &model.config.scales)?);
    let metrics = score(&model, &set)?;
    let doc = MetricsDoc {
        metrics: &metrics,
        meta: json!({ "tool_version": TOOL_VERSION, "vocab_fingerprint": corpus.vocab_fingerprint, "scales": model.config.scales }),
    };
    match &a.report {
        Some(path) => {
            write_json(path, &doc)?;
            print_metrics("", &metrics);
        }
        None => println!("{}", serde_json::to_string_pretty(&doc)?),
    }
    Ok(())
}

fn pipeline_config(cfg: &mut RunConfig, seed: Option<u64>) -> PipelineConfig {
    if let Some(s) = seed {
        cfg.seed = Some(s);
        cfg.vocab_seed = Some(s);
    }
    cfg.pipeline()
}

fn check_pipeline(p: &PipelineConfig, train: &Dataset) -> Result<()> {
    p.model.validate()?;
    check_scales(&p.model.scales, train.length())
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let p = pipeline_config(&mut cfg, a.seed);
    let (train, test) = train_test(&a.data, a.test_data.as_deref(), &cfg)?;
    if a.variant != AblationVariant::NoSd {
        check_pipeline(&p, &train)?;
    }
    let out = run_variant(&train, &test, a.variant, &p)?;
    print_metrics(&format!("{}: ", out.variant), &out.metrics);
    if let Some(path) = &a.report {
        let mut doc = serde_json::to_value(&out)?;
        doc["meta"] = meta(&p)?;
        write_json(path, &doc)?;
    }
    Ok(())
}

fn parse_value<T: std::str::FromStr>(param: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad {param} value {raw:?}")))
}

/// One sweep point. Lambda and scale count vary the full model; word count
/// and word length use the single-scale variant without the contrastive term.
fn sweep_point(param: SweepParam, raw: &str, base: &PipelineConfig, train: &Dataset, test: &Dataset) -> Result<PipelineOutcome> {
    let mut p = base.clone();
    let variant = match param {
        SweepParam::Lambda => {
            p.model.lambda = parse_value("lambda", raw)?;
            AblationVariant::Full
        }
        SweepParam::Scales => {
            let n: usize = parse_value("scales", raw)?;
            if n == 0 || n > base.model.scales.len() {
                return Err(Error::Config(format!(
                    "scale count {n} must lie in 1..={} (configured scales {:?})",
                    base.model.scales.len(),
                    base.model.scales
                )));
            }
            p.model.scales.truncate(n);
            if n == 1 {
                p.model.lambda = 0.0;
            }
            AblationVariant::Full
        }
        SweepParam::Words => {
            p.vocab.words_per_block = Some(parse_value("words", raw)?);
            AblationVariant::NoCclm
        }
        SweepParam::Length => {
            p.model.scales = vec![parse_value("length", raw)?];
            AblationVariant::NoCclm
        }
    };
    check_scales(&p.model.scales, train.length())?;
    match variant {
        AblationVariant::Full => {
            p.model.validate()?;
            run_pipeline(train, test, &p)
        }
        v => run_variant(train, test, v, &p),
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let base = pipeline_config(&mut cfg, a.seed);
    let name = match a.param {
        SweepParam::Lambda => "lambda",
        SweepParam::Scales => "scales",
        SweepParam::Words => "words",
        SweepParam::Length => "length",
    };
    let (train, test) = train_test(&a.data, a.test_data.as_deref(), &cfg)?;
    let mut csv = String::from("param,value,acc,maf1\n");
    for raw in &a.values {
        let out = sweep_point(a.param, raw, &base, &train, &test)?;
        eprintln!("{name}={}: acc {:.4}, maf1 {:.4}", raw.trim(), out.metrics.acc, out.metrics.maf1);
        csv.push_str(&format!("{name},{},{},{}\n", raw.trim(), out.metrics.acc, out.metrics.maf1));
    }
    match &a.out {
        Some(path) => {
            let mut f = create(path)?;
            f.write_all(csv.as_bytes()).and_then(|_| f.flush()).map_err(|e| io_error(path, e))
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}
