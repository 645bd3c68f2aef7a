//! Optimization loop, gradient verification, and experiment sweeps.

mod backward;
mod gradcheck;
mod sweep;

pub use gradcheck::{
    analytic_gradients, compare_gradients, gradient_check, numeric_gradients, GradCheckReport,
    TensorCheck,
};
pub use sweep::{
    run_sweep, write_sweep_csv, SweepError, SweepKind, SweepRow, SweepSettings, SweepValue,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClassLabel;
use crate::eval::{confusion, metrics, MetricsReport};
use crate::model::{cross_entropy, ForwardTrace, ModelConfig, ModelError, ModelParams};
use crate::tensor::Tensor2D;
use crate::tokenizer::TokenSequence;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("invalid train config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub early_stop_patience: usize,
    pub gradient_clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 16,
            learning_rate: 2e-4,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 42,
            early_stop_patience: 5,
            gradient_clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(TrainError::BadConfig("learning_rate must be > 0".into()));
        }
        if let Some(clip) = self.gradient_clip_norm {
            if clip <= 0.0 {
                return Err(TrainError::BadConfig(
                    "gradient_clip_norm must be > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub eval_loss: f64,
    pub eval_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_eval_f1: f64,
    pub wall_seconds: f64,
}

/// Mean gradients of the batch cross-entropy over traces produced by a
/// caching forward. Gradient shapes mirror the parameters exactly.
pub fn compute_gradients(
    params: &ModelParams,
    batch: &[(&TokenSequence, ClassLabel)],
    traces: &[ForwardTrace],
) -> Result<ModelParams, ModelError> {
    assert_eq!(batch.len(), traces.len());
    let mut grads = ModelParams::zeros(&params.config);
    let scale = 1.0 / batch.len() as f64;
    for ((seq, label), trace) in batch.iter().zip(traces) {
        backward::accumulate_example_gradients(params, seq, *label, trace, scale, &mut grads)?;
    }
    for (name, tensor) in grads.tensors() {
        if !tensor.all_finite() {
            return Err(ModelError::NonFiniteGradient { tensor: name });
        }
    }
    Ok(grads)
}

pub(crate) struct Optimizer {
    config: TrainConfig,
    adam_m: Option<ModelParams>,
    adam_v: Option<ModelParams>,
    step_count: u64,
}

impl Optimizer {
    pub fn new(config: &TrainConfig) -> Self {
        Self {
            config: config.clone(),
            adam_m: None,
            adam_v: None,
            step_count: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &mut ModelParams) {
        if let Some(clip) = self.config.gradient_clip_norm {
            clip_global_norm(grads, clip);
        }
        let lr = self.config.learning_rate;
        match self.config.optimizer {
            OptimizerKind::Sgd => {
                for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                    for (pv, &gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *pv -= lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (
                    self.config.adam_beta1,
                    self.config.adam_beta2,
                    self.config.adam_epsilon,
                );
                let m = self
                    .adam_m
                    .get_or_insert_with(|| ModelParams::zeros(&params.config));
                let v = self
                    .adam_v
                    .get_or_insert_with(|| ModelParams::zeros(&params.config));
                self.step_count += 1;
                let t = self.step_count as i32;
                let bias1 = 1.0 - b1.powi(t);
                let bias2 = 1.0 - b2.powi(t);
                for ((((_, p), (_, g)), (_, ms)), (_, vs)) in params
                    .tensors_mut()
                    .into_iter()
                    .zip(grads.tensors())
                    .zip(m.tensors_mut())
                    .zip(v.tensors_mut())
                {
                    let p = p.as_mut_slice();
                    let g = g.as_slice();
                    let ms = ms.as_mut_slice();
                    let vs = vs.as_mut_slice();
                    for i in 0..p.len() {
                        ms[i] = b1 * ms[i] + (1.0 - b1) * g[i];
                        vs[i] = b2 * vs[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = ms[i] / bias1;
                        let v_hat = vs[i] / bias2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
    }
}

fn clip_global_norm(grads: &mut ModelParams, clip: f64) {
    let norm: f64 = grads
        .tensors()
        .iter()
        .map(|(_, t)| t.squared_sum())
        .sum::<f64>()
        .sqrt();
    if norm > clip {
        let factor = clip / norm;
        for (_, t) in grads.tensors_mut() {
            t.scale(factor);
        }
    }
}

/// Mean loss and metrics of `params` over a labeled set (inference mode).
pub fn evaluate(
    params: &ModelParams,
    set: &[(TokenSequence, ClassLabel)],
) -> Result<(f64, MetricsReport), ModelError> {
    let mut pairs = Vec::with_capacity(set.len());
    let mut loss_sum = 0.0;
    for (seq, label) in set {
        let trace = params.forward(seq)?;
        loss_sum += cross_entropy(&trace.probabilities, *label);
        pairs.push((*label, trace.predicted()));
    }
    let loss = if set.is_empty() {
        0.0
    } else {
        loss_sum / set.len() as f64
    };
    Ok((loss, metrics(&confusion(&pairs))))
}

/// Trains from seeded random initialization, evaluating macro-F1 after each
/// epoch, and returns the parameters of the best epoch (the initialization
/// when `epochs == 0`). Deterministic for a fixed `(inputs, config)`.
pub fn train(
    train_set: &[(TokenSequence, ClassLabel)],
    eval_set: &[(TokenSequence, ClassLabel)],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport), TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if eval_set.is_empty() {
        return Err(TrainError::EmptySplit("eval"));
    }
    let started = std::time::Instant::now();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(model_config, &mut rng)?;
    let mut optimizer = Optimizer::new(config);

    let mut best = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut non_improving = 0usize;
    let mut stats = Vec::new();

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&TokenSequence, ClassLabel)> = chunk
                .iter()
                .map(|&i| (&train_set[i].0, train_set[i].1))
                .collect();
            let mut traces = Vec::with_capacity(batch.len());
            for (seq, label) in &batch {
                let trace = params.forward_train(seq, &mut rng)?;
                loss_sum += cross_entropy(&trace.probabilities, *label);
                traces.push(trace);
            }
            let mut grads = compute_gradients(&params, &batch, &traces)?;
            optimizer.step(&mut params, &mut grads);
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let (eval_loss, eval_metrics) = evaluate(&params, eval_set)?;
        let f1 = eval_metrics.macro_f1;
        stats.push(EpochStats {
            epoch,
            train_loss,
            eval_loss,
            eval_macro_f1: f1,
        });

        if f1 > best_f1 {
            best_f1 = f1;
            best_epoch = epoch;
            best = params.clone();
            non_improving = 0;
        } else {
            non_improving += 1;
            if non_improving > config.early_stop_patience {
                break;
            }
        }
    }

    Ok((
        best,
        TrainReport {
            epochs: stats,
            best_epoch,
            best_eval_f1: if best_f1.is_finite() { best_f1 } else { 0.0 },
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

/// One global-norm-computed quantity used in tests.
pub fn gradient_global_norm(grads: &ModelParams) -> f64 {
    grads
        .tensors()
        .iter()
        .map(|(_, t): &(String, &Tensor2D)| t.squared_sum())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{CLS_ID, PAD_ID, SEP_ID};

    fn tiny_config(dropout: f64) -> ModelConfig {
        ModelConfig {
            vocab_size: 16,
            max_len: 8,
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            dropout_rate: dropout,
        }
    }

    fn seq_of(content: &[u32], max_len: usize) -> TokenSequence {
        let mut ids = vec![CLS_ID];
        ids.extend_from_slice(content);
        ids.push(SEP_ID);
        let true_length = ids.len();
        ids.resize(max_len, PAD_ID);
        let mut mask = vec![0u8; max_len];
        for m in mask.iter_mut().take(true_length) {
            *m = 1;
        }
        TokenSequence {
            ids,
            mask,
            true_length,
        }
    }

    type LabeledSet = Vec<(TokenSequence, ClassLabel)>;

    fn toy_sets() -> (LabeledSet, LabeledSet) {
        // Token 5 ⇒ S, token 6 ⇒ C, token 7 ⇒ N, with shared filler token 9.
        use ClassLabel::*;
        let mk = |tok: u32, label| (seq_of(&[tok, 9, 9], 8), label);
        let train: Vec<_> = (0..6)
            .flat_map(|_| [mk(5, Substitution), mk(6, Complementarity), mk(7, Negligibility)])
            .collect();
        let eval = vec![mk(5, Substitution), mk(6, Complementarity), mk(7, Negligibility)];
        (train, eval)
    }

    #[test]
    fn duplicate_example_keeps_mean_gradient() {
        let cfg = tiny_config(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let seq = seq_of(&[5, 6], 8);
        let label = ClassLabel::Complementarity;

        let t1 = params.forward_train(&seq, &mut rng).unwrap();
        let single = compute_gradients(&params, &[(&seq, label)], &[t1]).unwrap();

        let t2 = params.forward_train(&seq, &mut rng).unwrap();
        let t3 = params.forward_train(&seq, &mut rng).unwrap();
        let double =
            compute_gradients(&params, &[(&seq, label), (&seq, label)], &[t2, t3]).unwrap();

        for ((name, a), (_, b)) in single.tensors().iter().zip(double.tensors()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).abs() < 1e-12, "tensor {name} differs");
            }
        }
    }

    #[test]
    fn one_hot_batch_has_vanishing_classifier_bias_gradient() {
        // Saturate the classifier so probabilities are one-hot at the true
        // label, then the bias gradient must vanish.
        let cfg = tiny_config(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        let seq = seq_of(&[5], 8);
        let label = ClassLabel::Substitution;
        // Drive the true logit far above the rest through the bias.
        params.classifier_b.set(0, 0, 60.0);
        params.classifier_b.set(0, 1, -60.0);
        params.classifier_b.set(0, 2, -60.0);
        let trace = params.forward_train(&seq, &mut rng).unwrap();
        assert!(trace.probabilities[0] > 1.0 - 1e-12);
        let grads = compute_gradients(&params, &[(&seq, label)], &[trace]).unwrap();
        for &v in grads.classifier_b.as_slice() {
            assert!(v.abs() <= 1e-9, "bias gradient {v} not ~0");
        }
    }

    #[test]
    fn sgd_step_decreases_single_example_loss() {
        let cfg = tiny_config(0.0);
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
            let seq = seq_of(&[4 + (seed % 8) as u32, 9], 8);
            let label = ClassLabel::from_index((seed % 3) as usize).unwrap();

            let trace = params.forward_train(&seq, &mut rng).unwrap();
            let loss_before = cross_entropy(&trace.probabilities, label);
            let mut grads = compute_gradients(&params, &[(&seq, label)], &[trace]).unwrap();

            let config = TrainConfig {
                optimizer: OptimizerKind::Sgd,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            };
            Optimizer::new(&config).step(&mut params, &mut grads);
            let after = params.forward(&seq).unwrap();
            let loss_after = cross_entropy(&after.probabilities, label);
            assert!(
                loss_after < loss_before,
                "seed {seed}: {loss_after} !< {loss_before}"
            );
        }
    }

    #[test]
    fn adam_with_zero_gradients_keeps_parameters() {
        let cfg = tiny_config(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        let before = params.clone();
        let mut zero = ModelParams::zeros(&cfg);
        let config = TrainConfig::default();
        let mut opt = Optimizer::new(&config);
        opt.step(&mut params, &mut zero);
        assert_eq!(params, before);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (train_set, eval_set) = toy_sets();
        let cfg = tiny_config(0.0);
        let config = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (params, report) = train(&train_set, &eval_set, &cfg, &config).unwrap();
        assert!(report.epochs.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let init = ModelParams::init(&cfg, &mut rng).unwrap();
        assert_eq!(params, init);
    }

    #[test]
    fn training_is_deterministic() {
        let (train_set, eval_set) = toy_sets();
        let cfg = tiny_config(0.1);
        let config = TrainConfig {
            epochs: 3,
            batch_size: 4,
            learning_rate: 1e-3,
            ..TrainConfig::default()
        };
        let (a, ra) = train(&train_set, &eval_set, &cfg, &config).unwrap();
        let (b, rb) = train(&train_set, &eval_set, &cfg, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epochs, rb.epochs);
    }

    #[test]
    fn empty_splits_are_rejected() {
        let (train_set, _) = toy_sets();
        let cfg = tiny_config(0.0);
        let config = TrainConfig::default();
        assert!(matches!(
            train(&[], &train_set, &cfg, &config),
            Err(TrainError::EmptySplit("train"))
        ));
        assert!(matches!(
            train(&train_set, &[], &cfg, &config),
            Err(TrainError::EmptySplit("eval"))
        ));
    }

    #[test]
    fn toy_corpus_is_learnable() {
        let (train_set, eval_set) = toy_sets();
        let cfg = ModelConfig {
            dropout_rate: 0.0,
            ..tiny_config(0.0)
        };
        let config = TrainConfig {
            epochs: 40,
            batch_size: 6,
            learning_rate: 5e-3,
            early_stop_patience: 40,
            ..TrainConfig::default()
        };
        let (best, report) = train(&train_set, &eval_set, &cfg, &config).unwrap();
        let (_, train_metrics) = evaluate(&best, &train_set).unwrap();
        assert!(
            train_metrics.accuracy > 0.99,
            "accuracy {} after {} epochs",
            train_metrics.accuracy,
            report.epochs.len()
        );
    }

    #[test]
    fn gradient_clipping_bounds_norm() {
        let cfg = tiny_config(0.0);
        let mut grads = ModelParams::zeros(&cfg);
        grads.classifier_w.set(0, 0, 100.0);
        grads.token_embedding.set(1, 1, -100.0);
        clip_global_norm(&mut grads, 1.0);
        assert!((gradient_global_norm(&grads) - 1.0).abs() < 1e-12);
    }
}
