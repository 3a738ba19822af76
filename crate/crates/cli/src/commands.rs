use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device};
use trend_core::checkpoint::{checkpoint_hash, Checkpoint, CheckpointInfo};
use trend_core::corpus::{
    corpus_texts, load_corpus, prepare_corpus, AdapterConfig, CorpusFormat, DialogueExample,
    InstanceBuilder, SubwordTokenizer,
};
use trend_core::encoder::load_pretrained;
use trend_core::evaluation::{
    evaluate, prediction_records, read_predictions, write_predictions, EvaluationReport,
};
use trend_core::model::pad_id;
use trend_core::training::{fit, EpochRecord, FitResult};
use trend_core::transfer::{fine_tune, reinit_relation_head};
use trend_core::{
    Backbone, EncoderConfig, RelationOntology, Result, TokenizedInstance, TrendError, TrendModel,
};

use crate::config::Config;

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

/// Command-line settings layered over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub backbone: Option<Backbone>,
    pub force_gate_on: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.training.seed = seed;
        }
        if let Some(b) = self.backbone {
            cfg.model.backbone = b;
        }
        cfg.training.force_gate_on |= self.force_gate_on;
        cfg.validate()
    }
}

/// Where a finished run put its outputs.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub checkpoint_hash: String,
    pub summary: String,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| TrendError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| TrendError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(TrendError::InvalidInput(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

/// Loads and prepares a corpus; multi-label examples are split.
pub fn load_examples(
    path: &Path,
    adapter: &AdapterConfig,
    ontology: &RelationOntology,
    speaker_cap: usize,
    require_labels: bool,
) -> Result<(Vec<DialogueExample>, Vec<DialogueExample>)> {
    require_file(path, "corpus")?;
    let raw = load_corpus(path, adapter, ontology)?;
    let prepared = prepare_corpus(&raw, speaker_cap, require_labels)?;
    Ok((raw, prepared))
}

fn build(
    examples: &[DialogueExample],
    tokenizer: &SubwordTokenizer,
    ontology: &RelationOntology,
    max_len: usize,
) -> Result<Vec<TokenizedInstance>> {
    InstanceBuilder::new(tokenizer, ontology, max_len).build_all(examples)
}

/// JSON lines of epoch records, plus wall-clock seconds kept apart.
struct MetricLog {
    metrics: std::io::BufWriter<std::fs::File>,
    path: PathBuf,
}

impl MetricLog {
    fn create(path: PathBuf) -> Result<Self> {
        let file = std::fs::File::create(&path).map_err(|e| TrendError::Io {
            path: path.clone(),
            source: e,
        })?;
        Ok(MetricLog {
            metrics: std::io::BufWriter::new(file),
            path,
        })
    }

    fn append(&mut self, record: &EpochRecord) -> Result<()> {
        let line = serde_json::to_string(record)?;
        writeln!(self.metrics, "{line}")
            .and_then(|_| self.metrics.flush())
            .map_err(|e| TrendError::Io {
                path: self.path.clone(),
                source: e,
            })
    }
}

fn write_timing(path: &Path, result: &FitResult) -> Result<()> {
    let mut text = String::new();
    for (i, secs) in result.epoch_seconds.iter().enumerate() {
        let _ = writeln!(
            text,
            "{}",
            serde_json::json!({"epoch": i + 1, "seconds": secs})
        );
    }
    write_file(path, &text)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Epoch table followed by the optional dev report.
pub fn summary_table(log: &[EpochRecord], dev: Option<&EvaluationReport>) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8}",
        "epoch", "loss", "trigger", "relation", "binary", "dev F1", "gate", "EM"
    );
    for r in log {
        let dev = r.dev.as_ref();
        let _ = writeln!(
            out,
            "{:>6} {:>10.4} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8}",
            r.epoch,
            r.loss.total,
            fmt_opt(r.loss.trigger),
            fmt_opt(r.loss.relation),
            fmt_opt(r.loss.binary),
            fmt_opt(dev.map(|d| d.relation_f1)),
            fmt_opt(dev.and_then(|d| d.gate_accuracy)),
            fmt_opt(dev.and_then(|d| d.trigger_em)),
        );
    }
    if let Some(report) = dev {
        out.push('\n');
        out.push_str(&report.to_table());
    }
    out
}

fn write_report(dir: &Path, report: &EvaluationReport) -> Result<()> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    write_file(&dir.join(REPORT_JSON), &json)?;
    write_file(&dir.join(REPORT_TEXT), &report.to_table())
}

struct Finished<'a> {
    cfg: &'a Config,
    model: TrendModel,
    tokenizer: SubwordTokenizer,
    ontology: RelationOntology,
    result: FitResult,
    dev: Option<Vec<TokenizedInstance>>,
    source_checkpoint: Option<String>,
    seed: u64,
}

fn finish(run: Finished<'_>) -> Result<RunOutput> {
    let dir = run.cfg.output.dir.clone();
    write_timing(&dir.join(TIMING_FILE), &run.result)?;
    let dev_report = match &run.dev {
        Some(dev) if !dev.is_empty() => {
            let preds = run.model.predict(
                dev,
                run.cfg.training.batch_size,
                run.cfg.training.force_gate_on,
            )?;
            let records = prediction_records(&preds, dev, &run.ontology)?;
            let report = evaluate(&records, dev, &run.ontology)?;
            write_report(&dir, &report)?;
            write_predictions(&dir.join(PREDICTIONS_FILE), &records)?;
            Some(report)
        }
        _ => None,
    };
    let summary = summary_table(&run.result.log, dev_report.as_ref());
    write_file(&dir.join(SUMMARY_FILE), &summary)?;
    let info = CheckpointInfo {
        max_len: run.cfg.data.max_len,
        source_checkpoint: run.source_checkpoint,
        seed: run.seed,
        config: run.cfg.snapshot(),
    };
    let checkpoint = dir.join(CHECKPOINT_DIR);
    let ckpt = Checkpoint::new(run.model, run.tokenizer, run.ontology, info)?;
    let checkpoint_hash = ckpt.save(&checkpoint)?;
    Ok(RunOutput {
        dir,
        checkpoint,
        checkpoint_hash,
        summary,
    })
}

fn dev_instances(
    cfg: &Config,
    adapter: &AdapterConfig,
    ontology: &RelationOntology,
    tokenizer: &SubwordTokenizer,
) -> Result<Option<Vec<TokenizedInstance>>> {
    cfg.data
        .dev
        .as_ref()
        .map(|p| {
            let (_, ex) = load_examples(p, adapter, ontology, cfg.data.speaker_cap, true)?;
            build(&ex, tokenizer, ontology, cfg.data.max_len)
        })
        .transpose()
}

/// Trains a model on the configured corpus.
pub fn train(config_path: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let mut cfg = Config::load(config_path)?;
    overrides.apply(&mut cfg)?;
    let adapter = cfg.adapter()?;
    require_file(&cfg.data.ontology, "ontology")?;
    let ontology = RelationOntology::from_file(&cfg.data.ontology)?;
    let (_, examples) = load_examples(
        &cfg.data.train,
        &adapter,
        &ontology,
        cfg.data.speaker_cap,
        true,
    )?;
    let seed = cfg.training.seed;
    let (model, tokenizer) = match cfg.model.backbone {
        Backbone::Tiny => {
            let texts = corpus_texts(&examples);
            let vocab = SubwordTokenizer::build_vocab(
                texts.iter().map(String::as_str),
                cfg.data.lowercase,
                cfg.data.speaker_cap,
            )?;
            let tokenizer =
                SubwordTokenizer::from_vocab(vocab, cfg.data.lowercase, cfg.data.speaker_cap)?;
            let model = TrendModel::random(
                EncoderConfig::tiny(tokenizer.vocab_size()),
                Backbone::Tiny,
                ontology.len(),
                cfg.model.max_span_len,
                pad_id(&tokenizer),
                seed,
            )?;
            (model, tokenizer)
        }
        backbone => {
            let dir =
                cfg.model.pretrained.as_ref().ok_or_else(|| {
                    TrendError::Config("pretrained encoder directory missing".into())
                })?;
            let p = load_pretrained(
                dir,
                cfg.data.lowercase,
                cfg.data.speaker_cap,
                DType::F32,
                &Device::Cpu,
            )?;
            let pad = pad_id(&p.tokenizer);
            let model = TrendModel::with_encoder(
                p.store,
                p.config,
                backbone,
                ontology.len(),
                cfg.model.max_span_len,
                pad,
                seed,
            )?;
            (model, p.tokenizer)
        }
    };
    if cfg.data.max_len > model.encoder.max_position {
        return Err(TrendError::Config(format!(
            "max_len {} exceeds the encoder's {} positions",
            cfg.data.max_len, model.encoder.max_position
        )));
    }
    let train = build(&examples, &tokenizer, &ontology, cfg.data.max_len)?;
    let dev = dev_instances(&cfg, &adapter, &ontology, &tokenizer)?;

    create_dir(&cfg.output.dir)?;
    let mut log = MetricLog::create(cfg.output.dir.join(METRICS_FILE))?;
    let mut model = model;
    let result = fit(
        &mut model,
        &train,
        dev.as_deref(),
        &ontology,
        &cfg.train_config(),
        &mut |r| log.append(r),
    )?;
    finish(Finished {
        cfg: &cfg,
        model,
        tokenizer,
        ontology,
        result,
        dev,
        source_checkpoint: None,
        seed,
    })
}

/// Moves a trained checkpoint onto the configured trigger-free corpus.
pub fn transfer(source: &Path, config_path: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let mut cfg = Config::load(config_path)?;
    overrides.apply(&mut cfg)?;
    let source_ckpt = Checkpoint::load(source)?;
    let source_hash = checkpoint_hash(source)?;
    let adapter = cfg.adapter()?;
    require_file(&cfg.data.ontology, "ontology")?;
    let ontology = RelationOntology::from_file(&cfg.data.ontology)?;
    let (raw, examples) = load_examples(
        &cfg.data.train,
        &adapter,
        &ontology,
        cfg.data.speaker_cap,
        true,
    )?;
    if adapter.format == CorpusFormat::TriggerAnnotated
        || raw.iter().any(DialogueExample::has_trigger_annotations)
    {
        return Err(TrendError::InvalidInput(format!(
            "{} carries trigger annotations; transfer expects a trigger-free corpus",
            cfg.data.train.display()
        )));
    }
    let tokenizer = source_ckpt.tokenizer.clone();
    if cfg.data.max_len > source_ckpt.model.encoder.max_position {
        return Err(TrendError::Config(format!(
            "max_len {} exceeds the encoder's {} positions",
            cfg.data.max_len, source_ckpt.model.encoder.max_position
        )));
    }
    let train = build(&examples, &tokenizer, &ontology, cfg.data.max_len)?;
    let dev = dev_instances(&cfg, &adapter, &ontology, &tokenizer)?;
    let seed = cfg.training.seed;
    let head_seed = cfg.transfer.head_seed.unwrap_or(seed);
    let mut model = reinit_relation_head(&source_ckpt.model, &ontology, head_seed)?;

    create_dir(&cfg.output.dir)?;
    let mut log = MetricLog::create(cfg.output.dir.join(METRICS_FILE))?;
    let result = fine_tune(
        &mut model,
        &train,
        dev.as_deref(),
        &ontology,
        &cfg.train_config(),
        cfg.transfer.freeze_trigger_path,
        &mut |r| log.append(r),
    )?;
    finish(Finished {
        cfg: &cfg,
        model,
        tokenizer,
        ontology,
        result,
        dev,
        source_checkpoint: Some(source_hash),
        seed,
    })
}

/// Options of `evaluate`.
#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub adapter: Option<PathBuf>,
    /// Score this prediction file instead of running the model.
    pub predictions: Option<PathBuf>,
    pub predictions_only: bool,
    pub force_gate_on: bool,
    pub batch_size: usize,
}

/// What `evaluate` produced.
#[derive(Debug, Clone)]
pub enum EvaluateOutput {
    Report(EvaluationReport),
    Predictions(usize),
}

fn adapter_from(path: Option<&PathBuf>) -> Result<AdapterConfig> {
    match path {
        Some(p) => {
            require_file(p, "adapter")?;
            AdapterConfig::from_file(p)
        }
        None => Ok(AdapterConfig::new(CorpusFormat::TriggerAnnotated)),
    }
}

/// Scores a checkpoint (or an external prediction file) on a labeled corpus.
pub fn evaluate_corpus(
    checkpoint: &Path,
    corpus: &Path,
    out_dir: &Path,
    opts: &EvaluateOptions,
) -> Result<EvaluateOutput> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let adapter = adapter_from(opts.adapter.as_ref())?;
    let (_, examples) = load_examples(
        corpus,
        &adapter,
        &ckpt.ontology,
        ckpt.manifest.speaker_cap,
        !opts.predictions_only,
    )?;
    let instances = build(
        &examples,
        &ckpt.tokenizer,
        &ckpt.ontology,
        ckpt.manifest.max_len,
    )?;
    let records = match &opts.predictions {
        Some(p) => {
            require_file(p, "prediction file")?;
            read_predictions(p)?
        }
        None => {
            let preds =
                ckpt.model
                    .predict(&instances, opts.batch_size.max(1), opts.force_gate_on)?;
            prediction_records(&preds, &instances, &ckpt.ontology)?
        }
    };
    create_dir(out_dir)?;
    if opts.predictions_only {
        write_predictions(&out_dir.join(PREDICTIONS_FILE), &records)?;
        return Ok(EvaluateOutput::Predictions(records.len()));
    }
    let report = evaluate(&records, &instances, &ckpt.ontology)?;
    write_report(out_dir, &report)?;
    if opts.predictions.is_none() {
        write_predictions(&out_dir.join(PREDICTIONS_FILE), &records)?;
    }
    Ok(EvaluateOutput::Report(report))
}

/// Predicts relations and triggers for every query pair of `input`.
pub fn predict(
    checkpoint: &Path,
    input: &Path,
    adapter: Option<&PathBuf>,
    force_gate_on: bool,
    batch_size: usize,
) -> Result<Vec<trend_core::evaluation::PredictionRecord>> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let adapter = adapter_from(adapter)?;
    let (_, examples) = load_examples(
        input,
        &adapter,
        &ckpt.ontology,
        ckpt.manifest.speaker_cap,
        false,
    )?;
    let instances = build(
        &examples,
        &ckpt.tokenizer,
        &ckpt.ontology,
        ckpt.manifest.max_len,
    )?;
    let preds = ckpt
        .model
        .predict(&instances, batch_size.max(1), force_gate_on)?;
    prediction_records(&preds, &instances, &ckpt.ontology)
}
