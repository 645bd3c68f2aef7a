//! Scaled dot-product attention.

use crate::tensor::Tensor2D;

use super::ModelError;

/// Row-wise numerically stable softmax of `Q·Kᵀ/√d_k` with masked key
/// positions forced to exactly zero weight.
///
/// `mask[j] == 0` marks key position `j` as padding: its score is set to
/// `-inf` before the softmax, so `exp` underflows to an exact 0.
pub fn masked_attention_probs(
    q: &Tensor2D,
    k: &Tensor2D,
    mask: &[u8],
) -> Result<Tensor2D, ModelError> {
    if q.cols() != k.cols() {
        return Err(ModelError::ShapeMismatch(format!(
            "query dim {} != key dim {}",
            q.cols(),
            k.cols()
        )));
    }
    if q.rows() != k.rows() || q.rows() != mask.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "sequence lengths disagree: Q {}, K {}, mask {}",
            q.rows(),
            k.rows(),
            mask.len()
        )));
    }
    if !mask.iter().any(|&m| m != 0) {
        return Err(ModelError::ShapeMismatch(
            "mask has no unmasked position".into(),
        ));
    }

    let len = q.rows();
    let scale = 1.0 / (k.cols() as f64).sqrt();
    let mut scores = q.matmul_bt(k);
    scores.scale(scale);
    for i in 0..len {
        let row = scores.row_mut(i);
        for (j, &m) in mask.iter().enumerate() {
            if m == 0 {
                row[j] = f64::NEG_INFINITY;
            }
        }
        softmax_row_in_place(row);
    }
    Ok(scores)
}

/// Stable softmax of one row; `-inf` entries come out as exact zeros.
pub(crate) fn softmax_row_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Scaled dot-product attention: `softmax(QKᵀ/√d_k)·V` with key-side
/// masking. Returns `(output, weights)`.
pub fn attention(
    q: &Tensor2D,
    k: &Tensor2D,
    v: &Tensor2D,
    mask: &[u8],
) -> Result<(Tensor2D, Tensor2D), ModelError> {
    if v.rows() != k.rows() {
        return Err(ModelError::ShapeMismatch(format!(
            "value rows {} != key rows {}",
            v.rows(),
            k.rows()
        )));
    }
    let weights = masked_attention_probs(q, k, mask)?;
    let output = weights.matmul(v);
    Ok((output, weights))
}

/// Backward of the row softmax: `dS_ij = P_ij (dP_ij - Σ_k dP_ik P_ik)`.
pub(crate) fn softmax_rows_backward(d_probs: &Tensor2D, probs: &Tensor2D) -> Tensor2D {
    let mut out = Tensor2D::zeros(probs.rows(), probs.cols());
    for i in 0..probs.rows() {
        let p = probs.row(i);
        let dp = d_probs.row(i);
        let dot: f64 = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
        let o = out.row_mut(i);
        for j in 0..p.len() {
            o[j] = p[j] * (dp[j] - dot);
        }
    }
    out
}
