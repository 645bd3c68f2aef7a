//! Backpropagation through the encoder and classification head.

use crate::corpus::ClassLabel;
use crate::model::{
    apply_dropout, layer_norm_backward, ForwardTrace, ModelError, ModelParams, N_CLASSES,
};
use crate::model::{gelu_prime, slice_cols, softmax_rows_backward, write_cols};
use crate::tensor::Tensor2D;
use crate::tokenizer::TokenSequence;

/// Accumulates `scale ×` the gradients of this example's cross-entropy loss
/// into `grads`. The trace must come from a caching forward
/// (`forward_train` / `forward_with_masks`).
pub(crate) fn accumulate_example_gradients(
    params: &ModelParams,
    seq: &TokenSequence,
    label: ClassLabel,
    trace: &ForwardTrace,
    scale: f64,
    grads: &mut ModelParams,
) -> Result<(), ModelError> {
    let cache = trace.cache.as_ref().ok_or_else(|| {
        ModelError::BadSequence("trace has no activation cache; use a training forward".into())
    })?;
    let cfg = &params.config;
    let len = trace.true_length;
    let d = cfg.d_model;
    let d_k = cfg.d_k();
    let rate = trace.masks.as_ref().map_or(0.0, |m| m.rate);

    // d loss / d logits = p - y, for mean-batch scaling times `scale`.
    let mut dz = [0.0f64; N_CLASSES];
    for c in 0..N_CLASSES {
        dz[c] = (trace.probabilities[c] - if c == label.index() { 1.0 } else { 0.0 }) * scale;
    }

    // Classifier head: z = pooled_dropped · W + b.
    let pooled_dropped = &cache.pooled_dropped;
    for j in 0..d {
        let w_row = grads.classifier_w.row_mut(j);
        for c in 0..N_CLASSES {
            w_row[c] += pooled_dropped[j] * dz[c];
        }
    }
    {
        let b_row = grads.classifier_b.row_mut(0);
        for c in 0..N_CLASSES {
            b_row[c] += dz[c];
        }
    }
    let mut dpooled = Tensor2D::zeros(1, d);
    for j in 0..d {
        let mut acc = 0.0;
        for c in 0..N_CLASSES {
            acc += params.classifier_w.get(j, c) * dz[c];
        }
        dpooled.set(0, j, acc);
    }
    if let Some(m) = &trace.masks {
        apply_dropout(&mut dpooled, &m.pooled, rate);
    }

    // Only the [CLS] row feeds the head.
    let mut dx = Tensor2D::zeros(len, d);
    dx.row_mut(0).copy_from_slice(dpooled.row(0));

    for li in (0..cfg.n_layers).rev() {
        let layer = &params.layers[li];
        let lc = &cache.layers[li];
        let g = &mut grads.layers[li];

        // Second sublayer: N2 = LN2(N1 + dropout(FFN(N1))).
        let dr2 = layer_norm_backward(
            &dx,
            &lc.ln2_xhat,
            &lc.ln2_inv_std,
            &layer.ln2_gain,
            &mut g.ln2_gain,
            &mut g.ln2_bias,
        );
        let mut dn1 = dr2.clone();
        let mut du = dr2;
        if let Some(m) = &trace.masks {
            apply_dropout(&mut du, &m.layers[li].ffn_out, rate);
        }
        g.ffn_w2.add_assign(&lc.ffn_act.matmul_at(&du));
        add_column_sums(&mut g.ffn_b2, &du);
        let dgelu = du.matmul_bt(&layer.ffn_w2);
        let mut df = dgelu;
        for (v, &pre) in df.as_mut_slice().iter_mut().zip(lc.ffn_pre.as_slice()) {
            *v *= gelu_prime(pre);
        }
        g.ffn_w1.add_assign(&lc.n1.matmul_at(&df));
        add_column_sums(&mut g.ffn_b1, &df);
        dn1.add_assign(&df.matmul_bt(&layer.ffn_w1));

        // First sublayer: N1 = LN1(X + dropout(attention(X))).
        let dr1 = layer_norm_backward(
            &dn1,
            &lc.ln1_xhat,
            &lc.ln1_inv_std,
            &layer.ln1_gain,
            &mut g.ln1_gain,
            &mut g.ln1_bias,
        );
        let mut dx_prev = dr1.clone();
        let mut da = dr1;
        if let Some(m) = &trace.masks {
            apply_dropout(&mut da, &m.layers[li].attn_out, rate);
        }
        g.w_o.add_assign(&lc.attn_concat.matmul_at(&da));
        let d_concat = da.matmul_bt(&layer.w_o);

        let mut dq = Tensor2D::zeros(len, d);
        let mut dk = Tensor2D::zeros(len, d);
        let mut dv = Tensor2D::zeros(len, d);
        let scale_attn = 1.0 / (d_k as f64).sqrt();
        for h in 0..cfg.n_heads {
            let off = h * d_k;
            let d_out_h = slice_cols(&d_concat, off, d_k);
            let qh = slice_cols(&lc.q, off, d_k);
            let kh = slice_cols(&lc.k, off, d_k);
            let vh = slice_cols(&lc.v, off, d_k);
            let applied = &lc.attn_applied[h];
            let probs = &trace.attention[li][h];

            let mut d_probs = d_out_h.matmul_bt(&vh);
            let dvh = applied.matmul_at(&d_out_h);
            if let Some(m) = &trace.masks {
                apply_dropout(&mut d_probs, &m.layers[li].attn_probs[h], rate);
            }
            let mut d_scores = softmax_rows_backward(&d_probs, probs);
            d_scores.scale(scale_attn);
            let dqh = d_scores.matmul(&kh);
            let dkh = d_scores.matmul_at(&qh);
            write_cols(&mut dq, &dqh, off);
            write_cols(&mut dk, &dkh, off);
            write_cols(&mut dv, &dvh, off);
        }
        g.w_q.add_assign(&lc.x.matmul_at(&dq));
        g.w_k.add_assign(&lc.x.matmul_at(&dk));
        g.w_v.add_assign(&lc.x.matmul_at(&dv));
        dx_prev.add_assign(&dq.matmul_bt(&layer.w_q));
        dx_prev.add_assign(&dk.matmul_bt(&layer.w_k));
        dx_prev.add_assign(&dv.matmul_bt(&layer.w_v));
        dx = dx_prev;
    }

    // Embedding lookup: E = token_embedding[id] + position_embedding[pos].
    if let Some(m) = &trace.masks {
        apply_dropout(&mut dx, &m.embedding, rate);
    }
    for i in 0..len {
        let d_row = dx.row(i);
        let tok_row = grads.token_embedding.row_mut(seq.ids[i] as usize);
        for (t, &v) in tok_row.iter_mut().zip(d_row) {
            *t += v;
        }
        let pos_row = grads.position_embedding.row_mut(i);
        for (p, &v) in pos_row.iter_mut().zip(d_row) {
            *p += v;
        }
    }
    Ok(())
}

fn add_column_sums(acc: &mut Tensor2D, x: &Tensor2D) {
    debug_assert_eq!(acc.cols(), x.cols());
    let row = acc.row_mut(0);
    for i in 0..x.rows() {
        for (a, &v) in row.iter_mut().zip(x.row(i)) {
            *a += v;
        }
    }
}
