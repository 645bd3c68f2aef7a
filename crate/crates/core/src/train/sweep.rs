//! Experiment harness: augmentation-level and training-fraction sweeps.
//!
//! Each sweep value gets one full train+eval cycle from a shared seed; rows
//! come back sorted by value.

use std::path::Path;

use thiserror::Error;

use crate::augment::{
    apply_policy, AugmentError, AugmentOptions, AugmentationPolicy, ProviderClient,
};
use crate::corpus::{stratified_split, AnnotatedExample, ClassLabel, CorpusError, Origin};
use crate::model::{ModelConfig, ModelError};
use crate::tokenizer::{build_vocab, encode, TokenSequence, TokenizerError};

use super::{evaluate, train, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid sweep value: {0}")]
    BadValue(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Augmentation,
    TrainFraction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValue {
    Policy(AugmentationPolicy),
    Fraction(f64),
}

impl SweepValue {
    fn sort_key(&self) -> f64 {
        match self {
            SweepValue::Policy(AugmentationPolicy::Original) => -2.0,
            SweepValue::Policy(AugmentationPolicy::Balanced) => -1.0,
            SweepValue::Policy(AugmentationPolicy::Multiplier(m)) => *m,
            SweepValue::Policy(AugmentationPolicy::PerClassTargets(_)) => f64::MAX,
            SweepValue::Fraction(f) => *f,
        }
    }

    pub fn render(&self) -> String {
        match self {
            SweepValue::Policy(AugmentationPolicy::Original) => "original".into(),
            SweepValue::Policy(AugmentationPolicy::Balanced) => "balanced".into(),
            SweepValue::Policy(AugmentationPolicy::Multiplier(m)) => {
                if m.fract() == 0.0 {
                    format!("{}", *m as i64)
                } else {
                    format!("{m}")
                }
            }
            SweepValue::Policy(AugmentationPolicy::PerClassTargets(_)) => "targets".into(),
            SweepValue::Fraction(f) => format!("{f}"),
        }
    }
}

/// Everything one sweep run needs besides the corpus and provider.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub vocab_max_size: usize,
    pub vocab_min_freq: usize,
    /// `vocab_size` is overridden per run from the freshly built vocabulary.
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// Base split for augmentation sweeps.
    pub split_ratios: [f64; 3],
    pub seed: u64,
    pub augment: AugmentOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

const ALLOWED_FRACTIONS: [f64; 7] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];

fn validate_values(kind: SweepKind, values: &[SweepValue]) -> Result<(), SweepError> {
    for value in values {
        match (kind, value) {
            (SweepKind::TrainFraction, SweepValue::Fraction(f)) => {
                if !ALLOWED_FRACTIONS.iter().any(|a| (a - f).abs() < 1e-9) {
                    return Err(SweepError::BadValue(format!(
                        "train fraction {f} not in {{0.2 … 0.8}}"
                    )));
                }
            }
            (SweepKind::Augmentation, SweepValue::Policy(policy)) => {
                if let AugmentationPolicy::Multiplier(m) = policy {
                    AugmentationPolicy::multiplier(*m)?;
                }
                if matches!(policy, AugmentationPolicy::PerClassTargets(_)) {
                    return Err(SweepError::BadValue(
                        "per-class target policies are not sweepable".into(),
                    ));
                }
            }
            _ => {
                return Err(SweepError::BadValue(
                    "value kind does not match sweep kind".into(),
                ))
            }
        }
    }
    Ok(())
}

/// Runs one full train+eval per value and reports eval macro
/// precision/recall/F1, rows sorted by value.
pub fn run_sweep(
    kind: SweepKind,
    values: &[SweepValue],
    examples: &[AnnotatedExample],
    provider: &dyn ProviderClient,
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>, SweepError> {
    validate_values(kind, values)?;
    let mut ordered: Vec<SweepValue> = values.to_vec();
    ordered.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());

    let mut rows = Vec::with_capacity(ordered.len());
    for value in &ordered {
        let (train_examples, eval_examples): (Vec<AnnotatedExample>, Vec<AnnotatedExample>) =
            match value {
                SweepValue::Fraction(f) => {
                    let split = stratified_split(examples, [*f, 1.0 - *f, 0.0], settings.seed)?;
                    let train_set = examples
                        .iter()
                        .filter(|e| split.train.contains(&e.task.id))
                        .cloned()
                        .collect();
                    let eval_set = examples
                        .iter()
                        .filter(|e| split.eval.contains(&e.task.id))
                        .cloned()
                        .collect();
                    (train_set, eval_set)
                }
                SweepValue::Policy(policy) => {
                    let split =
                        stratified_split(examples, settings.split_ratios, settings.seed)?;
                    let augmented = apply_policy(
                        examples,
                        policy,
                        provider,
                        settings.seed,
                        Some(&split),
                        &settings.augment,
                    )?;
                    let train_set = augmented
                        .iter()
                        .filter(|e| {
                            e.origin == Origin::Augmented || split.train.contains(&e.task.id)
                        })
                        .cloned()
                        .collect();
                    let eval_set = augmented
                        .iter()
                        .filter(|e| split.eval.contains(&e.task.id))
                        .cloned()
                        .collect();
                    (train_set, eval_set)
                }
            };
        rows.push(train_and_score(
            &value.render(),
            &train_examples,
            &eval_examples,
            settings,
        )?);
    }
    Ok(rows)
}

fn train_and_score(
    value: &str,
    train_examples: &[AnnotatedExample],
    eval_examples: &[AnnotatedExample],
    settings: &SweepSettings,
) -> Result<SweepRow, SweepError> {
    let texts: Vec<String> = train_examples
        .iter()
        .map(|e| e.task.text.clone())
        .collect();
    let vocab = build_vocab(&texts, settings.vocab_max_size, settings.vocab_min_freq)?;
    let mut model_cfg = settings.model.clone();
    model_cfg.vocab_size = vocab.len();

    let encode_set = |examples: &[AnnotatedExample]| -> Vec<(TokenSequence, ClassLabel)> {
        examples
            .iter()
            .map(|e| (encode(&e.task.text, &vocab, model_cfg.max_len), e.label))
            .collect()
    };
    let train_set = encode_set(train_examples);
    let eval_set = encode_set(eval_examples);

    let (params, _) = train(&train_set, &eval_set, &model_cfg, &settings.train)?;
    let (_, metrics) = evaluate(&params, &eval_set)?;
    Ok(SweepRow {
        value: value.to_string(),
        precision: metrics.macro_precision,
        recall: metrics.macro_recall,
        f1: metrics.macro_f1,
    })
}

/// Writes `sweep_<name>.csv` rows.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), SweepError> {
    let mut body = String::from("value,precision,recall,f1\n");
    for row in rows {
        body.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            row.value, row.precision, row.recall, row.f1
        ));
    }
    std::fs::write(path, body).map_err(|e| SweepError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::MockProvider;
    use crate::synth;

    fn settings() -> SweepSettings {
        SweepSettings {
            vocab_max_size: 220,
            vocab_min_freq: 1,
            model: ModelConfig {
                vocab_size: 0,
                max_len: 12,
                d_model: 16,
                n_heads: 2,
                n_layers: 1,
                d_ff: 32,
                dropout_rate: 0.0,
            },
            train: TrainConfig {
                epochs: 30,
                batch_size: 8,
                learning_rate: 4e-3,
                early_stop_patience: 30,
                ..TrainConfig::default()
            },
            split_ratios: [0.8, 0.2, 0.0],
            seed: 13,
            augment: AugmentOptions::default(),
        }
    }

    #[test]
    fn value_kind_mismatch_is_rejected() {
        assert!(matches!(
            validate_values(SweepKind::TrainFraction, &[SweepValue::Policy(AugmentationPolicy::Original)]),
            Err(SweepError::BadValue(_))
        ));
        assert!(matches!(
            validate_values(SweepKind::Augmentation, &[SweepValue::Fraction(0.5)]),
            Err(SweepError::BadValue(_))
        ));
        assert!(matches!(
            validate_values(SweepKind::TrainFraction, &[SweepValue::Fraction(0.45)]),
            Err(SweepError::BadValue(_))
        ));
    }

    #[test]
    fn rows_come_back_sorted_by_value() {
        let vals = [
            SweepValue::Policy(AugmentationPolicy::Multiplier(2.0)),
            SweepValue::Policy(AugmentationPolicy::Original),
            SweepValue::Policy(AugmentationPolicy::Balanced),
        ];
        let mut sorted = vals.to_vec();
        sorted.sort_by(|a, b| a.sort_key().partial_cmp(&b.sort_key()).unwrap());
        assert_eq!(sorted[0].render(), "original");
        assert_eq!(sorted[1].render(), "balanced");
        assert_eq!(sorted[2].render(), "2");
    }

    #[test]
    fn train_fraction_trend_holds_on_synthetic_corpus() {
        let examples = synth::keyword_corpus([20, 20, 20], 3);
        let provider = MockProvider::new(3);
        let rows = run_sweep(
            SweepKind::TrainFraction,
            &[SweepValue::Fraction(0.8), SweepValue::Fraction(0.2)],
            &examples,
            &provider,
            &settings(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        let low = rows.iter().find(|r| r.value == "0.2").unwrap();
        let high = rows.iter().find(|r| r.value == "0.8").unwrap();
        assert!(
            high.f1 >= low.f1 - 0.05,
            "F1 at 0.8 ({}) below F1 at 0.2 ({}) - 0.05",
            high.f1,
            low.f1
        );
    }

    #[test]
    fn augmentation_original_matches_plain_run() {
        let examples = synth::keyword_corpus([8, 8, 8], 5);
        let provider = MockProvider::new(5);
        let cfg = settings();
        let rows = run_sweep(
            SweepKind::Augmentation,
            &[SweepValue::Policy(AugmentationPolicy::Original)],
            &examples,
            &provider,
            &cfg,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);

        // A hand-rolled plain run over the same split must agree exactly.
        let split = stratified_split(&examples, cfg.split_ratios, cfg.seed).unwrap();
        let train_set: Vec<AnnotatedExample> = examples
            .iter()
            .filter(|e| split.train.contains(&e.task.id))
            .cloned()
            .collect();
        let eval_set: Vec<AnnotatedExample> = examples
            .iter()
            .filter(|e| split.eval.contains(&e.task.id))
            .cloned()
            .collect();
        let plain = train_and_score("original", &train_set, &eval_set, &cfg).unwrap();
        assert_eq!(rows[0], plain);
    }

    #[test]
    fn balanced_does_not_hurt_minority_recall() {
        use crate::corpus::ClassLabel::Negligibility;
        let examples = synth::keyword_corpus([16, 16, 4], 9);
        let provider = MockProvider::new(9);
        let cfg = settings();

        let minority_recall = |policy: AugmentationPolicy| -> f64 {
            let split = stratified_split(&examples, cfg.split_ratios, cfg.seed).unwrap();
            let augmented =
                apply_policy(&examples, &policy, &provider, cfg.seed, Some(&split), &cfg.augment)
                    .unwrap();
            let train_set: Vec<AnnotatedExample> = augmented
                .iter()
                .filter(|e| e.origin == Origin::Augmented || split.train.contains(&e.task.id))
                .cloned()
                .collect();
            let eval_set: Vec<AnnotatedExample> = augmented
                .iter()
                .filter(|e| split.eval.contains(&e.task.id))
                .cloned()
                .collect();

            let texts: Vec<String> = train_set.iter().map(|e| e.task.text.clone()).collect();
            let vocab = build_vocab(&texts, cfg.vocab_max_size, cfg.vocab_min_freq).unwrap();
            let mut model_cfg = cfg.model.clone();
            model_cfg.vocab_size = vocab.len();
            let enc = |set: &[AnnotatedExample]| {
                set.iter()
                    .map(|e| (encode(&e.task.text, &vocab, model_cfg.max_len), e.label))
                    .collect::<Vec<_>>()
            };
            let (params, _) = train(&enc(&train_set), &enc(&eval_set), &model_cfg, &cfg.train).unwrap();
            let (_, m) = evaluate(&params, &enc(&eval_set)).unwrap();
            m.per_class[Negligibility.index()].recall
        };

        let original = minority_recall(AugmentationPolicy::Original);
        let balanced = minority_recall(AugmentationPolicy::Balanced);
        assert!(
            balanced >= original,
            "balanced minority recall {balanced} < original {original}"
        );
    }
}
