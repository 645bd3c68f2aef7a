//! The miniature bidirectional transformer encoder with a softmax
//! classification head.
//!
//! Architecture per layer: multi-head self-attention → residual + layer norm
//! → GELU feed-forward → residual + layer norm (post-norm ordering). The
//! hidden state at the leading `[CLS]` position feeds a linear head whose
//! logits go through a softmax. Everything is `f64` and deterministic given
//! `(params, sequence, rng state)`.
//!
//! Sequences are processed over their unpadded window (`true_length`
//! positions). Padding positions therefore receive exactly zero attention
//! and cannot influence the logits.

mod attention;
mod checkpoint;

pub use attention::{attention, masked_attention_probs};
pub(crate) use attention::softmax_rows_backward;
pub use checkpoint::{load_checkpoint, save_checkpoint};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClassLabel;
use crate::tensor::Tensor2D;
use crate::tokenizer::{TokenSequence, CLS_ID, PAD_ID, SEP_ID, UNK_ID};

pub const N_CLASSES: usize = 3;

const LN_EPSILON: f64 = 1e-12;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite gradient in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },
    #[error("invalid model config: {0}")]
    BadConfig(String),
    #[error("invalid token sequence: {0}")]
    BadSequence(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Hyperparameters of the encoder. `d_k = d_model / n_heads`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub max_len: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            max_len: 64,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 128,
            dropout_rate: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size < 4 {
            return Err(ModelError::BadConfig("vocab_size must be at least 4".into()));
        }
        if self.max_len < 3 {
            return Err(ModelError::BadConfig("max_len must be at least 3".into()));
        }
        for (name, v) in [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
        ] {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::BadConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::BadConfig(
                "dropout_rate must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w_q: Tensor2D,
    pub w_k: Tensor2D,
    pub w_v: Tensor2D,
    pub w_o: Tensor2D,
    pub ffn_w1: Tensor2D,
    pub ffn_b1: Tensor2D,
    pub ffn_w2: Tensor2D,
    pub ffn_b2: Tensor2D,
    pub ln1_gain: Tensor2D,
    pub ln1_bias: Tensor2D,
    pub ln2_gain: Tensor2D,
    pub ln2_bias: Tensor2D,
}

/// All learnable weights. Bias and layer-norm vectors are `1 × n` tensors so
/// every parameter can be visited through one interface.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Tensor2D,
    pub position_embedding: Tensor2D,
    pub layers: Vec<LayerParams>,
    pub classifier_w: Tensor2D,
    pub classifier_b: Tensor2D,
}

impl ModelParams {
    /// All-zero parameters; also the shape of a gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Self {
        let d = config.d_model;
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                w_q: Tensor2D::zeros(d, d),
                w_k: Tensor2D::zeros(d, d),
                w_v: Tensor2D::zeros(d, d),
                w_o: Tensor2D::zeros(d, d),
                ffn_w1: Tensor2D::zeros(d, config.d_ff),
                ffn_b1: Tensor2D::zeros(1, config.d_ff),
                ffn_w2: Tensor2D::zeros(config.d_ff, d),
                ffn_b2: Tensor2D::zeros(1, d),
                ln1_gain: Tensor2D::zeros(1, d),
                ln1_bias: Tensor2D::zeros(1, d),
                ln2_gain: Tensor2D::zeros(1, d),
                ln2_bias: Tensor2D::zeros(1, d),
            })
            .collect();
        Self {
            config: config.clone(),
            token_embedding: Tensor2D::zeros(config.vocab_size, d),
            position_embedding: Tensor2D::zeros(config.max_len, d),
            layers,
            classifier_w: Tensor2D::zeros(d, N_CLASSES),
            classifier_b: Tensor2D::zeros(1, N_CLASSES),
        }
    }

    /// Random initialization: weight matrices from N(0, 0.02²), biases zero,
    /// layer-norm gains one.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = Self::zeros(config);
        let mut fill = |t: &mut Tensor2D| {
            for v in t.as_mut_slice() {
                *v = 0.02 * standard_normal(rng);
            }
        };
        fill(&mut params.token_embedding);
        fill(&mut params.position_embedding);
        for layer in &mut params.layers {
            fill(&mut layer.w_q);
            fill(&mut layer.w_k);
            fill(&mut layer.w_v);
            fill(&mut layer.w_o);
            fill(&mut layer.ffn_w1);
            fill(&mut layer.ffn_w2);
            for v in layer.ln1_gain.as_mut_slice() {
                *v = 1.0;
            }
            for v in layer.ln2_gain.as_mut_slice() {
                *v = 1.0;
            }
        }
        fill(&mut params.classifier_w);
        Ok(params)
    }

    /// Named tensors in canonical (checkpoint) order.
    pub fn tensors(&self) -> Vec<(String, &Tensor2D)> {
        let mut out: Vec<(String, &Tensor2D)> = vec![
            ("token_embedding".into(), &self.token_embedding),
            ("position_embedding".into(), &self.position_embedding),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w_q"), &layer.w_q));
            out.push((format!("layer{i}.w_k"), &layer.w_k));
            out.push((format!("layer{i}.w_v"), &layer.w_v));
            out.push((format!("layer{i}.w_o"), &layer.w_o));
            out.push((format!("layer{i}.ffn_w1"), &layer.ffn_w1));
            out.push((format!("layer{i}.ffn_b1"), &layer.ffn_b1));
            out.push((format!("layer{i}.ffn_w2"), &layer.ffn_w2));
            out.push((format!("layer{i}.ffn_b2"), &layer.ffn_b2));
            out.push((format!("layer{i}.ln1_gain"), &layer.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), &layer.ln1_bias));
            out.push((format!("layer{i}.ln2_gain"), &layer.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), &layer.ln2_bias));
        }
        out.push(("classifier_w".into(), &self.classifier_w));
        out.push(("classifier_b".into(), &self.classifier_b));
        out
    }

    /// Mutable variant of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor2D)> {
        let mut out: Vec<(String, &mut Tensor2D)> = vec![
            ("token_embedding".into(), &mut self.token_embedding),
            ("position_embedding".into(), &mut self.position_embedding),
        ];
        for (i, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.w_q"), &mut layer.w_q));
            out.push((format!("layer{i}.w_k"), &mut layer.w_k));
            out.push((format!("layer{i}.w_v"), &mut layer.w_v));
            out.push((format!("layer{i}.w_o"), &mut layer.w_o));
            out.push((format!("layer{i}.ffn_w1"), &mut layer.ffn_w1));
            out.push((format!("layer{i}.ffn_b1"), &mut layer.ffn_b1));
            out.push((format!("layer{i}.ffn_w2"), &mut layer.ffn_w2));
            out.push((format!("layer{i}.ffn_b2"), &mut layer.ffn_b2));
            out.push((format!("layer{i}.ln1_gain"), &mut layer.ln1_gain));
            out.push((format!("layer{i}.ln1_bias"), &mut layer.ln1_bias));
            out.push((format!("layer{i}.ln2_gain"), &mut layer.ln2_gain));
            out.push((format!("layer{i}.ln2_bias"), &mut layer.ln2_bias));
        }
        out.push(("classifier_w".into(), &mut self.classifier_w));
        out.push(("classifier_b".into(), &mut self.classifier_b));
        out
    }

    pub fn forward(&self, seq: &TokenSequence) -> Result<ForwardTrace, ModelError> {
        self.forward_inner(seq, None, false)
    }

    /// Training-mode forward: samples fresh dropout masks from `rng` (when
    /// the configured rate is nonzero) and caches activations for backprop.
    pub fn forward_train(
        &self,
        seq: &TokenSequence,
        rng: &mut ChaCha8Rng,
    ) -> Result<ForwardTrace, ModelError> {
        let masks = if self.config.dropout_rate > 0.0 {
            Some(DropoutMasks::sample(&self.config, seq.true_length, rng))
        } else {
            None
        };
        self.forward_inner(seq, masks, true)
    }

    /// Forward with pre-recorded dropout masks; the replay path used by
    /// gradient checking.
    pub fn forward_with_masks(
        &self,
        seq: &TokenSequence,
        masks: Option<&DropoutMasks>,
    ) -> Result<ForwardTrace, ModelError> {
        self.forward_inner(seq, masks.cloned(), true)
    }

    fn forward_inner(
        &self,
        seq: &TokenSequence,
        masks: Option<DropoutMasks>,
        build_cache: bool,
    ) -> Result<ForwardTrace, ModelError> {
        self.validate_sequence(seq)?;
        let cfg = &self.config;
        let len = seq.true_length;
        let d = cfg.d_model;
        let d_k = cfg.d_k();
        let rate = masks.as_ref().map_or(0.0, |m| m.rate);
        let window_mask = vec![1u8; len];

        let mut x = Tensor2D::zeros(len, d);
        for i in 0..len {
            let tok = self.token_embedding.row(seq.ids[i] as usize);
            let pos = self.position_embedding.row(i);
            let row = x.row_mut(i);
            for j in 0..d {
                row[j] = tok[j] + pos[j];
            }
        }
        if let Some(m) = &masks {
            apply_dropout(&mut x, &m.embedding, rate);
        }

        let mut attention_trace: Vec<Vec<Tensor2D>> = Vec::with_capacity(cfg.n_layers);
        let mut layer_caches: Vec<LayerCache> = Vec::new();

        for (li, layer) in self.layers.iter().enumerate() {
            let q = x.matmul(&layer.w_q);
            let k = x.matmul(&layer.w_k);
            let v = x.matmul(&layer.w_v);

            let mut head_probs: Vec<Tensor2D> = Vec::with_capacity(cfg.n_heads);
            let mut head_applied: Vec<Tensor2D> = Vec::with_capacity(cfg.n_heads);
            let mut concat = Tensor2D::zeros(len, d);
            for h in 0..cfg.n_heads {
                let off = h * d_k;
                let qh = slice_cols(&q, off, d_k);
                let kh = slice_cols(&k, off, d_k);
                let vh = slice_cols(&v, off, d_k);
                let probs = masked_attention_probs(&qh, &kh, &window_mask)?;
                let applied = match &masks {
                    Some(m) => {
                        let mut dropped = probs.clone();
                        apply_dropout(&mut dropped, &m.layers[li].attn_probs[h], rate);
                        dropped
                    }
                    None => probs.clone(),
                };
                let out_h = applied.matmul(&vh);
                write_cols(&mut concat, &out_h, off);
                head_probs.push(probs);
                head_applied.push(applied);
            }

            let mut attn_proj = concat.matmul(&layer.w_o);
            if let Some(m) = &masks {
                apply_dropout(&mut attn_proj, &m.layers[li].attn_out, rate);
            }
            let mut r1 = x.clone();
            r1.add_assign(&attn_proj);
            let (n1, ln1_xhat, ln1_inv_std) = layer_norm(&r1, &layer.ln1_gain, &layer.ln1_bias);

            let mut ffn_pre = n1.matmul(&layer.ffn_w1);
            add_row_vector(&mut ffn_pre, &layer.ffn_b1);
            let mut ffn_act = ffn_pre.clone();
            for v in ffn_act.as_mut_slice() {
                *v = gelu(*v);
            }
            let mut ffn_out = ffn_act.matmul(&layer.ffn_w2);
            add_row_vector(&mut ffn_out, &layer.ffn_b2);
            if let Some(m) = &masks {
                apply_dropout(&mut ffn_out, &m.layers[li].ffn_out, rate);
            }
            let mut r2 = n1.clone();
            r2.add_assign(&ffn_out);
            let (n2, ln2_xhat, ln2_inv_std) = layer_norm(&r2, &layer.ln2_gain, &layer.ln2_bias);

            if !n2.all_finite() {
                return Err(ModelError::NonFiniteActivation { layer: li });
            }

            attention_trace.push(head_probs);
            if build_cache {
                layer_caches.push(LayerCache {
                    x: x.clone(),
                    q,
                    k,
                    v,
                    attn_applied: head_applied,
                    attn_concat: concat,
                    ln1_xhat,
                    ln1_inv_std,
                    n1,
                    ffn_pre,
                    ffn_act,
                    ln2_xhat,
                    ln2_inv_std,
                });
            }
            x = n2;
        }

        let pooled: Vec<f64> = x.row(0).to_vec();
        let mut pooled_dropped = pooled.clone();
        if let Some(m) = &masks {
            let keep = 1.0 - rate;
            for (v, &mk) in pooled_dropped.iter_mut().zip(m.pooled.as_slice()) {
                *v *= mk / keep;
            }
        }

        let mut logits = [0.0f64; N_CLASSES];
        for (c, logit) in logits.iter_mut().enumerate() {
            let mut acc = self.classifier_b.get(0, c);
            for (j, &p) in pooled_dropped.iter().enumerate() {
                acc += p * self.classifier_w.get(j, c);
            }
            *logit = acc;
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteActivation {
                layer: cfg.n_layers,
            });
        }
        let probabilities = softmax(&logits);

        Ok(ForwardTrace {
            logits,
            probabilities,
            attention: attention_trace,
            pooled,
            true_length: len,
            masks,
            cache: if build_cache {
                Some(Box::new(ForwardCache {
                    layers: layer_caches,
                    pooled_dropped,
                }))
            } else {
                None
            },
        })
    }

    fn validate_sequence(&self, seq: &TokenSequence) -> Result<(), ModelError> {
        let cfg = &self.config;
        if seq.true_length < 2 || seq.true_length > seq.ids.len() {
            return Err(ModelError::BadSequence(format!(
                "true_length {} out of range",
                seq.true_length
            )));
        }
        if seq.ids.len() > cfg.max_len {
            return Err(ModelError::BadSequence(format!(
                "sequence length {} exceeds model max_len {}",
                seq.ids.len(),
                cfg.max_len
            )));
        }
        if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= cfg.vocab_size) {
            return Err(ModelError::BadSequence(format!(
                "token id {bad} out of vocabulary (size {})",
                cfg.vocab_size
            )));
        }
        Ok(())
    }
}

/// Output of one forward pass. `attention` holds the pre-dropout softmax
/// weights, per layer then per head, over the unpadded window.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub logits: [f64; N_CLASSES],
    pub probabilities: [f64; N_CLASSES],
    pub attention: Vec<Vec<Tensor2D>>,
    /// `[CLS]` hidden state before classifier dropout.
    pub pooled: Vec<f64>,
    pub true_length: usize,
    pub(crate) masks: Option<DropoutMasks>,
    pub(crate) cache: Option<Box<ForwardCache>>,
}

impl ForwardTrace {
    pub fn predicted(&self) -> ClassLabel {
        let mut best = 0;
        for c in 1..N_CLASSES {
            if self.probabilities[c] > self.probabilities[best] {
                best = c;
            }
        }
        ClassLabel::from_index(best).expect("class index in range")
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    pub x: Tensor2D,
    pub q: Tensor2D,
    pub k: Tensor2D,
    pub v: Tensor2D,
    /// Post-dropout attention weights actually multiplied with V.
    pub attn_applied: Vec<Tensor2D>,
    pub attn_concat: Tensor2D,
    pub ln1_xhat: Tensor2D,
    pub ln1_inv_std: Vec<f64>,
    pub n1: Tensor2D,
    pub ffn_pre: Tensor2D,
    pub ffn_act: Tensor2D,
    pub ln2_xhat: Tensor2D,
    pub ln2_inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub pooled_dropped: Vec<f64>,
}

/// Keep/drop masks for one example. Entries are 1.0 (keep) or 0.0 (drop);
/// application rescales by `1/(1-rate)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub rate: f64,
    pub embedding: Tensor2D,
    pub layers: Vec<LayerDropout>,
    pub pooled: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct LayerDropout {
    pub attn_probs: Vec<Tensor2D>,
    pub attn_out: Tensor2D,
    pub ffn_out: Tensor2D,
}

impl DropoutMasks {
    pub fn sample(config: &ModelConfig, true_length: usize, rng: &mut ChaCha8Rng) -> Self {
        let rate = config.dropout_rate;
        let mut draw = |rows: usize, cols: usize| {
            let mut t = Tensor2D::zeros(rows, cols);
            for v in t.as_mut_slice() {
                *v = if rng.random::<f64>() < rate { 0.0 } else { 1.0 };
            }
            t
        };
        let embedding = draw(true_length, config.d_model);
        let layers = (0..config.n_layers)
            .map(|_| LayerDropout {
                attn_probs: (0..config.n_heads)
                    .map(|_| draw(true_length, true_length))
                    .collect(),
                attn_out: draw(true_length, config.d_model),
                ffn_out: draw(true_length, config.d_model),
            })
            .collect();
        let pooled = draw(1, config.d_model);
        Self {
            rate,
            embedding,
            layers,
            pooled,
        }
    }
}

pub(crate) fn apply_dropout(x: &mut Tensor2D, mask: &Tensor2D, rate: f64) {
    debug_assert_eq!(x.shape(), mask.shape());
    let keep = 1.0 - rate;
    for (v, &m) in x.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        *v *= m / keep;
    }
}

pub(crate) fn slice_cols(t: &Tensor2D, offset: usize, width: usize) -> Tensor2D {
    let mut out = Tensor2D::zeros(t.rows(), width);
    for i in 0..t.rows() {
        out.row_mut(i).copy_from_slice(&t.row(i)[offset..offset + width]);
    }
    out
}

pub(crate) fn write_cols(dst: &mut Tensor2D, src: &Tensor2D, offset: usize) {
    for i in 0..src.rows() {
        let width = src.cols();
        dst.row_mut(i)[offset..offset + width].copy_from_slice(src.row(i));
    }
}

pub(crate) fn add_row_vector(x: &mut Tensor2D, bias: &Tensor2D) {
    debug_assert_eq!(bias.rows(), 1);
    debug_assert_eq!(bias.cols(), x.cols());
    let b = bias.row(0);
    for i in 0..x.rows() {
        for (v, &add) in x.row_mut(i).iter_mut().zip(b) {
            *v += add;
        }
    }
}

/// Per-row layer norm; returns `(output, x̂, 1/σ per row)`.
pub(crate) fn layer_norm(
    x: &Tensor2D,
    gain: &Tensor2D,
    bias: &Tensor2D,
) -> (Tensor2D, Tensor2D, Vec<f64>) {
    let (rows, cols) = x.shape();
    let mut out = Tensor2D::zeros(rows, cols);
    let mut xhat = Tensor2D::zeros(rows, cols);
    let mut inv_stds = Vec::with_capacity(rows);
    let g = gain.row(0);
    let b = bias.row(0);
    for i in 0..rows {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let inv_std = 1.0 / (var + LN_EPSILON).sqrt();
        inv_stds.push(inv_std);
        let xh = xhat.row_mut(i);
        let o = out.row_mut(i);
        for j in 0..cols {
            xh[j] = (row[j] - mean) * inv_std;
            o[j] = g[j] * xh[j] + b[j];
        }
    }
    (out, xhat, inv_stds)
}

/// Backward through one layer norm; returns `dx` and accumulates `dgain`,
/// `dbias`.
pub(crate) fn layer_norm_backward(
    dy: &Tensor2D,
    xhat: &Tensor2D,
    inv_std: &[f64],
    gain: &Tensor2D,
    dgain: &mut Tensor2D,
    dbias: &mut Tensor2D,
) -> Tensor2D {
    let (rows, cols) = dy.shape();
    let mut dx = Tensor2D::zeros(rows, cols);
    let g = gain.row(0);
    for i in 0..rows {
        let dy_row = dy.row(i);
        let xh_row = xhat.row(i);
        {
            let dg = dgain.row_mut(0);
            let db = dbias.row_mut(0);
            for j in 0..cols {
                dg[j] += dy_row[j] * xh_row[j];
                db[j] += dy_row[j];
            }
        }
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for j in 0..cols {
            let dxh = dy_row[j] * g[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh_row[j];
        }
        mean_dxhat /= cols as f64;
        mean_dxhat_xhat /= cols as f64;
        let dx_row = dx.row_mut(i);
        for j in 0..cols {
            let dxh = dy_row[j] * g[j];
            dx_row[j] = inv_std[i] * (dxh - mean_dxhat - xh_row[j] * mean_dxhat_xhat);
        }
    }
    dx
}

const GELU_COEFF: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_CUBIC: f64 = 0.044715;

/// GELU, tanh approximation.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_COEFF * (x + GELU_CUBIC * x * x * x)).tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let u = GELU_COEFF * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_COEFF * (1.0 + 3.0 * GELU_CUBIC * x * x)
}

/// Numerically stable softmax over class logits.
pub fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

/// `-ln p(true class)`, with the probability floored at 1e-12 before the log.
pub fn cross_entropy(probabilities: &[f64; N_CLASSES], true_label: ClassLabel) -> f64 {
    -probabilities[true_label.index()].max(PROB_FLOOR).ln()
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller on the ChaCha stream.
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Distills a trace into per-term attention mass: the final layer's `[CLS]`
/// row averaged over heads, special-token positions dropped, `##` pieces
/// merged into their head word, and the result renormalized to sum to 1.
pub fn extract_attention(
    trace: &ForwardTrace,
    seq: &TokenSequence,
    vocab: &crate::tokenizer::Vocabulary,
) -> Vec<(String, f64)> {
    let Some(last) = trace.attention.last() else {
        return Vec::new();
    };
    let len = trace.true_length;
    let n_heads = last.len() as f64;
    let mut cls_row = vec![0.0; len];
    for head in last {
        for (acc, &w) in cls_row.iter_mut().zip(head.row(0)) {
            *acc += w;
        }
    }
    for w in &mut cls_row {
        *w /= n_heads;
    }

    let mut terms: Vec<(String, f64)> = Vec::new();
    for pos in 0..len {
        let id = seq.ids[pos];
        if id == PAD_ID || id == UNK_ID || id == CLS_ID || id == SEP_ID {
            continue;
        }
        let token = vocab.token_of(id).unwrap_or("");
        match token.strip_prefix("##") {
            Some(cont) if !terms.is_empty() => {
                let last = terms.last_mut().expect("nonempty");
                last.0.push_str(cont);
                last.1 += cls_row[pos];
            }
            _ => terms.push((token.to_string(), cls_row[pos])),
        }
    }

    let total: f64 = terms.iter().map(|(_, m)| m).sum();
    if total > 0.0 {
        for (_, m) in &mut terms {
            *m /= total;
        }
    }
    terms
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn seq_of(ids: Vec<u32>, max_len: usize) -> TokenSequence {
        let true_length = ids.len();
        let mut padded = ids;
        padded.resize(max_len, PAD_ID);
        let mut mask = vec![0u8; max_len];
        for m in mask.iter_mut().take(true_length) {
            *m = 1;
        }
        TokenSequence {
            ids: padded,
            mask,
            true_length,
        }
    }

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            vocab_size: 16,
            max_len: 8,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0, 0.0, 0.0]);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        // Direct evaluation of e^z_i / Σ e^z_j for z = (1, 2, 3).
        let z: [f64; 3] = [1.0, 2.0, 3.0];
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        let direct = [z[0].exp() / denom, z[1].exp() / denom, z[2].exp() / denom];
        let p = softmax(&z);
        for (a, b) in p.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.09003057317038046).abs() < 1e-12);
        assert!((p[2] - 0.66524095577482).abs() < 1e-10);
    }

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[0.3, -1.2, 2.2]);
        let b = softmax(&[100.3, 98.8, 102.2]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_oracle_values() {
        use ClassLabel::*;
        assert_eq!(cross_entropy(&[1.0, 0.0, 0.0], Substitution), 0.0);
        let uniform = [1.0 / 3.0; 3];
        assert!((cross_entropy(&uniform, Complementarity) - 3.0f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(&[0.1, 0.7, 0.2], Complementarity) - (-0.7f64.ln())).abs() < 1e-12);
        // Zero probability is floored, not infinite.
        assert!(cross_entropy(&[0.0, 1.0, 0.0], Substitution).is_finite());
    }

    #[test]
    fn inference_is_deterministic() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let seq = seq_of(vec![CLS_ID, 5, 9, 4, SEP_ID], cfg.max_len);
        let a = params.forward(&seq).unwrap();
        let b = params.forward(&seq).unwrap();
        assert_eq!(a.logits, b.logits);
        assert_eq!(a.probabilities, b.probabilities);
        assert_eq!(a.attention, b.attention);
        assert_eq!(a.pooled, b.pooled);
    }

    #[test]
    fn probabilities_form_distribution_and_rows_are_stochastic() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let seq = seq_of(vec![CLS_ID, 7, 8, 9, 10, SEP_ID], cfg.max_len);
        let trace = params.forward(&seq).unwrap();
        let sum: f64 = trace.probabilities.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        for layer in &trace.attention {
            for head in layer {
                for i in 0..head.rows() {
                    let row_sum: f64 = head.row(i).iter().sum();
                    assert!((row_sum - 1.0).abs() < 1e-9);
                }
            }
        }
        assert_eq!(trace.predicted().index(), {
            let mut best = 0;
            for c in 1..3 {
                if trace.logits[c] > trace.logits[best] {
                    best = c;
                }
            }
            best
        });
    }

    #[test]
    fn padding_does_not_change_logits() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let short = seq_of(vec![CLS_ID, 5, 6, SEP_ID], 4);
        let padded = seq_of(vec![CLS_ID, 5, 6, SEP_ID], cfg.max_len);
        let a = params.forward(&short).unwrap();
        let b = params.forward(&padded).unwrap();
        for (x, y) in a.logits.iter().zip(&b.logits) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn train_mode_with_same_rng_state_replays() {
        let cfg = ModelConfig {
            dropout_rate: 0.2,
            ..tiny_config()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let seq = seq_of(vec![CLS_ID, 5, 9, SEP_ID], cfg.max_len);
        let mut rng_a = ChaCha8Rng::seed_from_u64(99);
        let mut rng_b = ChaCha8Rng::seed_from_u64(99);
        let a = params.forward_train(&seq, &mut rng_a).unwrap();
        let b = params.forward_train(&seq, &mut rng_b).unwrap();
        assert_eq!(a.logits, b.logits);
        // Replaying recorded masks reproduces the trace too.
        let c = params
            .forward_with_masks(&seq, a.masks.as_ref())
            .unwrap();
        assert_eq!(a.logits, c.logits);
    }

    #[test]
    fn nonfinite_activation_is_reported_with_layer() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ModelParams::init(&cfg, &mut rng).unwrap();
        params.layers[1].ffn_w2.set(0, 0, f64::INFINITY);
        let seq = seq_of(vec![CLS_ID, 5, SEP_ID], cfg.max_len);
        match params.forward(&seq) {
            Err(ModelError::NonFiniteActivation { layer }) => assert_eq!(layer, 1),
            other => panic!("expected NonFiniteActivation, got {other:?}"),
        }
    }

    #[test]
    fn extract_attention_single_content_token() {
        let cfg = tiny_config();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = ModelParams::init(&cfg, &mut rng).unwrap();
        let vocab = test_vocab();
        let id = vocab.id_of("weld").unwrap();
        let seq = seq_of(vec![CLS_ID, id, SEP_ID], cfg.max_len);
        let trace = params.forward(&seq).unwrap();
        let masses = extract_attention(&trace, &seq, &vocab);
        assert_eq!(masses.len(), 1);
        assert_eq!(masses[0].0, "weld");
        assert!((masses[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extract_attention_merges_continuations() {
        // Hand-built trace: one layer, one head, uniform CLS row over 4
        // positions [CLS, run, ##ning, SEP].
        let vocab = test_vocab();
        let run = vocab.id_of("run").unwrap();
        let ning = vocab.id_of("##ning").unwrap();
        let seq = seq_of(vec![CLS_ID, run, ning, SEP_ID], 4);
        let uniform = Tensor2D::from_vec(4, 4, vec![0.25; 16]);
        let trace = ForwardTrace {
            logits: [0.0; 3],
            probabilities: [1.0 / 3.0; 3],
            attention: vec![vec![uniform]],
            pooled: vec![],
            true_length: 4,
            masks: None,
            cache: None,
        };
        let masses = extract_attention(&trace, &seq, &vocab);
        assert_eq!(masses.len(), 1);
        assert_eq!(masses[0].0, "running");
        // 0.25 + 0.25 renormalized over content mass 0.5 → 1.0.
        assert!((masses[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extract_attention_hand_computed_merge() {
        let vocab = test_vocab();
        let weld = vocab.id_of("weld").unwrap();
        let run = vocab.id_of("run").unwrap();
        let ning = vocab.id_of("##ning").unwrap();
        let seq = seq_of(vec![CLS_ID, weld, run, ning, SEP_ID], 5);
        let mut head = Tensor2D::zeros(5, 5);
        for (j, w) in [0.1, 0.2, 0.3, 0.15, 0.25].iter().enumerate() {
            head.set(0, j, *w);
        }
        let trace = ForwardTrace {
            logits: [0.0; 3],
            probabilities: [1.0 / 3.0; 3],
            attention: vec![vec![head]],
            pooled: vec![],
            true_length: 5,
            masks: None,
            cache: None,
        };
        let masses = extract_attention(&trace, &seq, &vocab);
        // Content mass: weld 0.2, running 0.3+0.15 = 0.45; total 0.65.
        assert_eq!(masses.len(), 2);
        assert_eq!(masses[0].0, "weld");
        assert!((masses[0].1 - 0.2 / 0.65).abs() < 1e-12);
        assert_eq!(masses[1].0, "running");
        assert!((masses[1].1 - 0.45 / 0.65).abs() < 1e-12);
        let total: f64 = masses.iter().map(|(_, m)| m).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    fn test_vocab() -> crate::tokenizer::Vocabulary {
        crate::tokenizer::Vocabulary::from_tokens(
            ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "weld", "run", "##ning"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    }
}
