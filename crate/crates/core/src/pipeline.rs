//! Stage orchestration shared by the CLI: each stage reads its input
//! artifacts from the output directory, writes its own, and fails with
//! `MissingArtifact` when a prerequisite stage has not run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::aggregate::{
    self, AggregateError, AttentionExport, PredictionRecord, Summary,
};
use crate::augment::{
    apply_policy, AugmentError, HttpProvider, MockProvider, ProviderClient,
};
use crate::baselines::{
    fit_logistic, fit_tfidf, majority_baseline, BaselineError, LogisticConfig,
};
use crate::config::{ConfigError, PipelineConfig, PROVIDER_TOKEN_ENV, PROVIDER_URL_ENV};
use crate::corpus::{
    self, AnnotatedExample, ClassLabel, CorpusError, Origin, SplitAssignment, TaskStatement,
};
use crate::eval::{append_metrics_csv, confusion, metrics, MetricsRow};
use crate::model::{extract_attention, load_checkpoint, save_checkpoint, ModelError};
use crate::tokenizer::{build_vocab, encode, TokenizerError, Vocabulary};
use crate::train::{
    self, evaluate, gradient_check, run_sweep, GradCheckReport, SweepError, SweepKind,
    SweepSettings, SweepValue, TrainError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing artifact `{0}`; run the producing stage first")]
    MissingArtifact(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// CLI exit code: 1 for validation-type failures, 2 for runtime errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::MissingArtifact(_)
            | PipelineError::Validation(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Output artifact locations under the configured output directory.
pub struct Artifacts {
    out: PathBuf,
}

impl Artifacts {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }

    pub fn corpus(&self) -> PathBuf {
        self.out.join("corpus.normalized.csv")
    }

    pub fn labels(&self) -> PathBuf {
        self.out.join("labels.csv")
    }

    pub fn splits(&self) -> PathBuf {
        self.out.join("splits.csv")
    }

    pub fn augmented(&self) -> PathBuf {
        self.out.join("augmented.csv")
    }

    pub fn vocab(&self) -> PathBuf {
        self.out.join("vocab.txt")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.out.join("ckpt.json")
    }

    pub fn train_log(&self) -> PathBuf {
        self.out.join("train.csv")
    }

    pub fn metrics(&self) -> PathBuf {
        self.out.join("metrics.csv")
    }

    pub fn predictions(&self) -> PathBuf {
        self.out.join("predictions.csv")
    }

    pub fn attention(&self) -> PathBuf {
        self.out.join("attention.csv")
    }

    pub fn occupation_profiles(&self) -> PathBuf {
        self.out.join("occupation_profiles.csv")
    }

    pub fn industry_profiles(&self) -> PathBuf {
        self.out.join("industry_profiles.csv")
    }

    pub fn term_weights(&self, class: ClassLabel) -> PathBuf {
        self.out.join(format!("term_weights_{}.csv", class.as_str()))
    }

    pub fn summary(&self) -> PathBuf {
        self.out.join("summary.json")
    }

    pub fn sweep(&self, kind: &str) -> PathBuf {
        self.out.join(format!("sweep_{kind}.csv"))
    }

    fn require(&self, path: PathBuf) -> Result<PathBuf, PipelineError> {
        if path.exists() {
            Ok(path)
        } else {
            Err(PipelineError::MissingArtifact(
                path.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string()),
            ))
        }
    }
}

fn artifacts(cfg: &PipelineConfig) -> Result<Artifacts, PipelineError> {
    let out = &cfg.paths.output_dir;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    Ok(Artifacts::new(out))
}

pub fn make_provider(cfg: &PipelineConfig) -> Result<Box<dyn ProviderClient>, PipelineError> {
    match cfg.provider.kind.as_str() {
        "mock" => Ok(Box::new(MockProvider::new(cfg.seed))),
        "http" => {
            let url = std::env::var(PROVIDER_URL_ENV).map_err(|_| {
                PipelineError::Validation(format!(
                    "provider.kind is `http` but {PROVIDER_URL_ENV} is not set"
                ))
            })?;
            let token = std::env::var(PROVIDER_TOKEN_ENV).ok();
            Ok(Box::new(HttpProvider::new(
                &url,
                token,
                Duration::from_secs(cfg.provider.timeout_secs),
                cfg.provider.retries,
            )))
        }
        other => Err(PipelineError::Validation(format!("unknown provider `{other}`"))),
    }
}

// ---------------------------------------------------------------------------
// Shared loading helpers
// ---------------------------------------------------------------------------

fn load_normalized_corpus(
    cfg: &PipelineConfig,
    art: &Artifacts,
) -> Result<Vec<TaskStatement>, PipelineError> {
    let path = art.require(art.corpus())?;
    Ok(corpus::read_tasks(&path, cfg.source()?)?)
}

fn load_labels(art: &Artifacts) -> Result<BTreeMap<String, ClassLabel>, PipelineError> {
    let path = art.require(art.labels())?;
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| PipelineError::Corpus(CorpusError::Csv {
        path: path.display().to_string(),
        source: e,
    }))?;
    let mut out = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            PipelineError::Corpus(CorpusError::Csv {
                path: path.display().to_string(),
                source: e,
            })
        })?;
        let label = ClassLabel::parse(record.get(1).unwrap_or("")).ok_or_else(|| {
            PipelineError::Corpus(CorpusError::BadRow {
                row: i + 1,
                message: "bad label".into(),
            })
        })?;
        out.insert(record.get(0).unwrap_or("").to_string(), label);
    }
    Ok(out)
}

fn labeled_examples(
    tasks: &[TaskStatement],
    labels: &BTreeMap<String, ClassLabel>,
) -> Vec<AnnotatedExample> {
    tasks
        .iter()
        .filter_map(|task| {
            labels.get(&task.id).map(|label| AnnotatedExample {
                task: task.clone(),
                label: *label,
                origin: Origin::Human,
                parent_id: None,
            })
        })
        .collect()
}

fn load_split(art: &Artifacts, cfg: &PipelineConfig) -> Result<SplitAssignment, PipelineError> {
    let path = art.require(art.splits())?;
    let mut rdr = csv::Reader::from_path(&path).map_err(|e| {
        PipelineError::Corpus(CorpusError::Csv {
            path: path.display().to_string(),
            source: e,
        })
    })?;
    let mut assignment = SplitAssignment {
        train: Default::default(),
        eval: Default::default(),
        test: Default::default(),
        seed: cfg.seed,
        ratios: cfg.split.ratios,
    };
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| {
            PipelineError::Corpus(CorpusError::Csv {
                path: path.display().to_string(),
                source: e,
            })
        })?;
        let id = record.get(0).unwrap_or("").to_string();
        match record.get(1).unwrap_or("") {
            "train" => assignment.train.insert(id),
            "eval" => assignment.eval.insert(id),
            "test" => assignment.test.insert(id),
            other => {
                return Err(PipelineError::Corpus(CorpusError::BadRow {
                    row: i + 1,
                    message: format!("bad split `{other}`"),
                }))
            }
        };
    }
    Ok(assignment)
}

/// Training corpus: augmented file when present, otherwise the labeled
/// originals.
fn load_training_corpus(
    cfg: &PipelineConfig,
    art: &Artifacts,
) -> Result<Vec<AnnotatedExample>, PipelineError> {
    let tasks = load_normalized_corpus(cfg, art)?;
    let labels = load_labels(art)?;
    if art.augmented().exists() {
        Ok(corpus::read_annotated_csv(&art.augmented(), &tasks)?)
    } else {
        Ok(labeled_examples(&tasks, &labels))
    }
}

fn encode_examples(
    examples: &[&AnnotatedExample],
    vocab: &Vocabulary,
    max_len: usize,
) -> Vec<(crate::tokenizer::TokenSequence, ClassLabel)> {
    examples
        .iter()
        .map(|e| (encode(&e.task.text, vocab, max_len), e.label))
        .collect()
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// tasks.csv + votes.csv → corpus.normalized.csv + labels.csv.
pub fn run_ingest(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let tasks = corpus::read_tasks(&cfg.paths.tasks, cfg.source()?)?;
    let votes = corpus::read_votes(&cfg.paths.votes)?;
    let occupations = corpus::read_occupations(&cfg.paths.occupations)?;
    let industries = corpus::read_industries(&cfg.paths.industries)?;

    // Referential checks across the four inputs.
    let task_ids: std::collections::BTreeSet<&str> =
        tasks.iter().map(|t| t.id.as_str()).collect();
    for task in &tasks {
        if let Some(code) = &task.occupation_code {
            if !occupations.contains_key(code) {
                return Err(PipelineError::Validation(format!(
                    "task `{}` references unknown occupation `{code}`",
                    task.id
                )));
            }
        }
    }
    for (code, info) in &occupations {
        for industry in &info.industry_codes {
            if !industries.contains_key(industry) {
                return Err(PipelineError::Validation(format!(
                    "occupation `{code}` references unknown industry `{industry}`"
                )));
            }
        }
    }
    for vote in &votes {
        if !task_ids.contains(vote.task_id.as_str()) {
            return Err(PipelineError::Validation(format!(
                "vote references unknown task `{}`",
                vote.task_id
            )));
        }
    }

    corpus::write_tasks_csv(&art.corpus(), &tasks)?;

    let mut rows = String::from("task_id,label\n");
    for vote in &votes {
        if let Some(label) = corpus::resolve_votes(vote, cfg.corpus.vote_threshold)? {
            rows.push_str(&format!("{},{}\n", vote.task_id, label.as_str()));
        }
    }
    std::fs::write(art.labels(), rows).map_err(|e| io_err(&art.labels(), e))?;
    Ok(())
}

/// labels + corpus → splits.csv (stratified over labeled tasks).
pub fn run_split(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let tasks = load_normalized_corpus(cfg, &art)?;
    let labels = load_labels(&art)?;
    let examples = labeled_examples(&tasks, &labels);
    let split = corpus::stratified_split(&examples, cfg.split.ratios, cfg.seed)?;

    let mut rows = String::from("task_id,split\n");
    for example in &examples {
        let name = split
            .split_of(&example.task.id)
            .expect("every labeled task is assigned");
        rows.push_str(&format!("{},{name}\n", example.task.id));
    }
    std::fs::write(art.splits(), rows).map_err(|e| io_err(&art.splits(), e))?;
    Ok(())
}

/// corpus + labels + splits → augmented.csv.
pub fn run_augment(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let tasks = load_normalized_corpus(cfg, &art)?;
    let labels = load_labels(&art)?;
    let examples = labeled_examples(&tasks, &labels);
    let split = load_split(&art, cfg)?;
    let provider = make_provider(cfg)?;
    let augmented = apply_policy(
        &examples,
        &cfg.augmentation_policy()?,
        provider.as_ref(),
        cfg.seed,
        Some(&split),
        &cfg.augment_options(),
    )?;
    corpus::write_annotated_csv(&art.augmented(), &augmented)?;
    Ok(())
}

/// Train-split texts → vocab.txt.
pub fn run_build_vocab(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let examples = load_training_corpus(cfg, &art)?;
    let split = load_split(&art, cfg)?;
    let texts: Vec<String> = examples
        .iter()
        .filter(|e| e.origin == Origin::Augmented || split.train.contains(&e.task.id))
        .map(|e| e.task.text.clone())
        .collect();
    let vocab = build_vocab(&texts, cfg.tokenizer.max_vocab, cfg.tokenizer.min_freq)?;
    vocab.save(&art.vocab())?;
    Ok(())
}

/// vocab + splits (+ augmented) → checkpoint + train.csv.
pub fn run_train(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let vocab = Vocabulary::load(&art.require(art.vocab())?)?;
    let examples = load_training_corpus(cfg, &art)?;
    let split = load_split(&art, cfg)?;

    let train_examples: Vec<&AnnotatedExample> = examples
        .iter()
        .filter(|e| e.origin == Origin::Augmented || split.train.contains(&e.task.id))
        .collect();
    let eval_examples: Vec<&AnnotatedExample> = examples
        .iter()
        .filter(|e| split.eval.contains(&e.task.id))
        .collect();

    let model_cfg = cfg.model_config(vocab.len());
    let train_set = encode_examples(&train_examples, &vocab, model_cfg.max_len);
    let eval_set = encode_examples(&eval_examples, &vocab, model_cfg.max_len);

    let (best, report) = train::train(&train_set, &eval_set, &model_cfg, &cfg.train_config()?)?;

    let mut log = String::from("epoch,train_loss,eval_loss,eval_f1\n");
    for epoch in &report.epochs {
        log.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            epoch.epoch, epoch.train_loss, epoch.eval_loss, epoch.eval_macro_f1
        ));
    }
    std::fs::write(art.train_log(), log).map_err(|e| io_err(&art.train_log(), e))?;
    save_checkpoint(&best, cfg.seed, &art.checkpoint())?;
    eprintln!(
        "trained {} epochs in {:.1}s; best eval macro-F1 {:.4} at epoch {}",
        report.epochs.len(),
        report.wall_seconds,
        report.best_eval_f1,
        report.best_epoch
    );
    Ok(())
}

/// checkpoint + vocab + splits → metrics.csv (transformer + baselines).
pub fn run_eval(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let vocab = Vocabulary::load(&art.require(art.vocab())?)?;
    let (params, _) = load_checkpoint(&art.require(art.checkpoint())?)?;
    let examples = load_training_corpus(cfg, &art)?;
    let split = load_split(&art, cfg)?;

    let eval_ids = match cfg.report.eval_split.as_str() {
        "eval" => &split.eval,
        _ => &split.test,
    };
    let target: Vec<&AnnotatedExample> = examples
        .iter()
        .filter(|e| eval_ids.contains(&e.task.id))
        .collect();
    if target.is_empty() {
        return Err(PipelineError::Validation(format!(
            "split `{}` has no labeled examples",
            cfg.report.eval_split
        )));
    }
    let train_examples: Vec<&AnnotatedExample> = examples
        .iter()
        .filter(|e| e.origin == Origin::Augmented || split.train.contains(&e.task.id))
        .collect();

    let dataset = cfg.corpus.source.as_str();
    let split_name = cfg.report.eval_split.as_str();
    let mut rows: Vec<MetricsRow> = Vec::new();

    // Transformer.
    let eval_set = encode_examples(&target, &vocab, params.config.max_len);
    let (_, transformer_metrics) = evaluate(&params, &eval_set)?;
    rows.extend(MetricsRow::from_report(
        "transformer",
        dataset,
        split_name,
        &transformer_metrics,
    ));
    println!("== transformer on {split_name} ==\n{transformer_metrics}");

    // TF-IDF + logistic regression.
    let train_texts: Vec<String> = train_examples.iter().map(|e| e.task.text.clone()).collect();
    let vectorizer = fit_tfidf(&train_texts)?;
    let xs: Vec<_> = train_examples
        .iter()
        .map(|e| vectorizer.transform(&e.task.text))
        .collect();
    let ys: Vec<ClassLabel> = train_examples.iter().map(|e| e.label).collect();
    let logistic = fit_logistic(&xs, &ys, vectorizer.n_terms(), &LogisticConfig::default())?;
    let pairs: Vec<(ClassLabel, ClassLabel)> = target
        .iter()
        .map(|e| {
            (
                e.label,
                logistic.predict_label(&vectorizer.transform(&e.task.text)),
            )
        })
        .collect();
    let logistic_metrics = metrics(&confusion(&pairs));
    rows.extend(MetricsRow::from_report(
        "logistic_tfidf",
        dataset,
        split_name,
        &logistic_metrics,
    ));
    println!("== logistic_tfidf on {split_name} ==\n{logistic_metrics}");

    // Majority floor.
    let majority = majority_baseline(&ys)?;
    let pairs: Vec<(ClassLabel, ClassLabel)> =
        target.iter().map(|e| (e.label, majority.predict())).collect();
    let majority_metrics = metrics(&confusion(&pairs));
    rows.extend(MetricsRow::from_report(
        "majority",
        dataset,
        split_name,
        &majority_metrics,
    ));
    println!("== majority on {split_name} ==\n{majority_metrics}");

    append_metrics_csv(&art.metrics(), &rows)?;
    Ok(())
}

/// checkpoint + vocab + corpus → predictions.csv + attention.csv.
pub fn run_predict(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let vocab = Vocabulary::load(&art.require(art.vocab())?)?;
    let (params, _) = load_checkpoint(&art.require(art.checkpoint())?)?;
    let tasks = load_normalized_corpus(cfg, &art)?;

    let mut records = Vec::with_capacity(tasks.len());
    let mut attention_rows: Vec<AttentionExport> = Vec::new();
    for task in &tasks {
        let seq = encode(&task.text, &vocab, params.config.max_len);
        let trace = params.forward(&seq)?;
        records.push(PredictionRecord {
            task_id: task.id.clone(),
            probabilities: trace.probabilities,
            label: trace.predicted(),
            occupation_code: task.occupation_code.clone(),
        });
        for (term, mass) in extract_attention(&trace, &seq, &vocab) {
            attention_rows.push(AttentionExport {
                task_id: task.id.clone(),
                term,
                mass,
            });
        }
    }
    aggregate::write_predictions_csv(&art.predictions(), &records)?;
    aggregate::write_attention_csv(&art.attention(), &attention_rows)?;
    Ok(())
}

/// predictions + attention + maps → profile CSVs + term-weight tables.
pub fn run_aggregate(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let predictions = aggregate::read_predictions_csv(&art.require(art.predictions())?)?;
    let attention = aggregate::read_attention_csv(&art.require(art.attention())?)?;
    let occupations = corpus::read_occupations(&cfg.paths.occupations)?;
    let industries = corpus::read_industries(&cfg.paths.industries)?;

    let profiles = aggregate::occupation_profiles(&predictions, &occupations)?;
    aggregate::write_occupation_profiles_csv(&art.occupation_profiles(), &profiles)?;
    let (industry, _) = aggregate::industry_profiles(&profiles, &occupations, &industries)?;
    aggregate::write_industry_profiles_csv(&art.industry_profiles(), &industry)?;
    for class in crate::corpus::ALL_CLASSES {
        let table =
            aggregate::term_weights(&predictions, &attention, class, cfg.report.term_weight_top_k);
        aggregate::write_term_weights_csv(&art.term_weights(class), &table)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RankEntry {
    code: String,
    title: String,
    substitution_fraction: f64,
    complementarity_fraction: f64,
    negligibility_fraction: f64,
}

#[derive(Debug, Serialize)]
struct ReportJson {
    summary: Summary,
    top_occupations_by_substitution: Vec<RankEntry>,
    top_occupations_by_negligibility: Vec<RankEntry>,
    top_industries_by_substitution: Vec<RankEntry>,
    top_industries_by_negligibility: Vec<RankEntry>,
}

/// predictions + maps → summary.json (plus a short stdout digest).
pub fn run_report(cfg: &PipelineConfig) -> Result<Summary, PipelineError> {
    let art = artifacts(cfg)?;
    let predictions = aggregate::read_predictions_csv(&art.require(art.predictions())?)?;
    let occupations = corpus::read_occupations(&cfg.paths.occupations)?;
    let industries = corpus::read_industries(&cfg.paths.industries)?;

    let profiles = aggregate::occupation_profiles(&predictions, &occupations)?;
    let summary = aggregate::summarize(&profiles)?;
    let (industry, rankings) = aggregate::industry_profiles(&profiles, &occupations, &industries)?;

    let profile_entry = |code: &str| -> RankEntry {
        let p = profiles.iter().find(|p| p.code == code).expect("ranked code exists");
        RankEntry {
            code: p.code.clone(),
            title: p.title.clone(),
            substitution_fraction: p.distribution[0],
            complementarity_fraction: p.distribution[1],
            negligibility_fraction: p.distribution[2],
        }
    };
    let industry_entry = |code: &str| -> RankEntry {
        let p = industry.iter().find(|p| p.code == code).expect("ranked code exists");
        RankEntry {
            code: p.code.clone(),
            title: p.title.clone(),
            substitution_fraction: p.distribution[0],
            complementarity_fraction: p.distribution[1],
            negligibility_fraction: p.distribution[2],
        }
    };

    let occ_by_sub = aggregate::rank_occupations(&profiles, ClassLabel::Substitution);
    let occ_by_neg = aggregate::rank_occupations(&profiles, ClassLabel::Negligibility);
    let report = ReportJson {
        summary: summary.clone(),
        top_occupations_by_substitution: occ_by_sub
            .iter()
            .take(cfg.report.top_occupations)
            .map(|c| profile_entry(c))
            .collect(),
        top_occupations_by_negligibility: occ_by_neg
            .iter()
            .take(cfg.report.top_occupations)
            .map(|c| profile_entry(c))
            .collect(),
        top_industries_by_substitution: rankings
            .by_substitution
            .iter()
            .take(cfg.report.top_industries)
            .map(|c| industry_entry(c))
            .collect(),
        top_industries_by_negligibility: rankings
            .by_negligibility
            .iter()
            .take(cfg.report.top_industries)
            .map(|c| industry_entry(c))
            .collect(),
    };
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| PipelineError::Validation(e.to_string()))?;
    std::fs::write(art.summary(), json).map_err(|e| io_err(&art.summary(), e))?;

    println!(
        "occupations: {} | high substitution {} ({}) | high complementarity {} ({}) | safe {} ({})",
        summary.n_occupations,
        summary.high_substitution.count,
        summary.high_substitution.percent,
        summary.high_complementarity.count,
        summary.high_complementarity.percent,
        summary.safe.count,
        summary.safe.percent,
    );
    Ok(summary)
}

/// corpus + labels → sweep_<kind>.csv.
pub fn run_sweep_stage(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    let art = artifacts(cfg)?;
    let sweep_cfg = cfg.sweep.as_ref().ok_or_else(|| {
        PipelineError::Validation("config has no [sweep] section".into())
    })?;
    let tasks = load_normalized_corpus(cfg, &art)?;
    let labels = load_labels(&art)?;
    let examples = labeled_examples(&tasks, &labels);
    let provider = make_provider(cfg)?;

    let (kind, values, name) = match sweep_cfg.kind.as_str() {
        "train_fraction" => {
            let fractions = sweep_cfg.fractions.clone().unwrap_or_default();
            (
                SweepKind::TrainFraction,
                fractions.into_iter().map(SweepValue::Fraction).collect::<Vec<_>>(),
                "train_fraction",
            )
        }
        "augmentation" => {
            let mut values = Vec::new();
            for name in sweep_cfg.policies.clone().unwrap_or_default() {
                let policy = match name.as_str() {
                    "original" => crate::augment::AugmentationPolicy::Original,
                    "balanced" => crate::augment::AugmentationPolicy::Balanced,
                    other => {
                        let m: f64 = other.parse().map_err(|_| {
                            PipelineError::Validation(format!("bad sweep policy `{other}`"))
                        })?;
                        crate::augment::AugmentationPolicy::multiplier(m)?
                    }
                };
                values.push(SweepValue::Policy(policy));
            }
            (SweepKind::Augmentation, values, "augmentation")
        }
        other => {
            return Err(PipelineError::Validation(format!("unknown sweep kind `{other}`")))
        }
    };

    let settings = SweepSettings {
        vocab_max_size: cfg.tokenizer.max_vocab,
        vocab_min_freq: cfg.tokenizer.min_freq,
        model: cfg.model_config(0),
        train: cfg.train_config()?,
        split_ratios: cfg.split.ratios,
        seed: cfg.seed,
        augment: cfg.augment_options(),
    };
    let rows = run_sweep(kind, &values, &examples, provider.as_ref(), &settings)?;
    train::write_sweep_csv(&art.sweep(name), &rows)?;
    Ok(())
}

/// Fixed tiny-model gradient verification; report printed by the CLI.
pub fn run_gradcheck(cfg: &PipelineConfig) -> Result<GradCheckReport, PipelineError> {
    let tiny = crate::model::ModelConfig {
        vocab_size: 16,
        max_len: 8,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        dropout_rate: cfg.model.dropout.min(0.3),
    };
    Ok(gradient_check(&tiny, cfg.seed, 1e-6)?)
}
