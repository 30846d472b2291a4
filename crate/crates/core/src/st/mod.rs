//! Set Transformer forward pass for SplitNet.
//!
//! Encoder: affine embedding followed by `L` stacked ISABs. Decoder: PMA with
//! two seeds summarizes the encoded set, a MAB from every point onto that
//! summary brings it back to per-point features, and an affine head emits one
//! logit per point. No layer normalization; attention scores are scaled by
//! `1/√d` of the per-head width.
//!
//! Attention storage is `O(N·max(m_ind, M)·h)`; the encoder never forms the
//! `N×N` score matrix.

mod weights;

pub use weights::{
    expected_tensors, load_weights, Affine, IsabWeights, MabWeights, StMeta, StWeights, Tensor, MAB_PARTS,
    MAGIC,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// `softmax(QKᵀ/√d_q)·V`, softmax taken row-wise.
pub fn attention(q: &DMatrix<f32>, k: &DMatrix<f32>, v: &DMatrix<f32>) -> DMatrix<f32> {
    debug_assert_eq!(q.ncols(), k.ncols());
    debug_assert_eq!(k.nrows(), v.nrows());
    let scale = 1.0 / (q.ncols() as f32).sqrt();
    let mut scores = q * k.transpose();
    for i in 0..scores.nrows() {
        let mut row = scores.row_mut(i);
        let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for s in row.iter_mut() {
            *s = ((*s - max) * scale).exp();
            total += *s;
        }
        row /= total;
    }
    scores * v
}

/// Projects into `heads` subspaces, attends in each, concatenates and applies `W^O`.
pub fn multihead_att(
    q: &DMatrix<f32>,
    k: &DMatrix<f32>,
    v: &DMatrix<f32>,
    w: &MabWeights,
    heads: usize,
) -> DMatrix<f32> {
    let qp = q * &w.wq;
    let kp = k * &w.wk;
    let vp = v * &w.wv;
    let dh = qp.ncols();
    let width = dh / heads;
    let mut concat = DMatrix::<f32>::zeros(q.nrows(), dh);
    for j in 0..heads {
        let cols = j * width;
        let o = attention(
            &qp.columns(cols, width).into_owned(),
            &kp.columns(cols, width).into_owned(),
            &vp.columns(cols, width).into_owned(),
        );
        concat.columns_mut(cols, width).copy_from(&o);
    }
    concat * &w.wo
}

/// `MAB(X, Y) = H + rFF(H)` with `H = X + rFF(MultiheadAtt(X, Y, Y))`.
pub fn mab(x: &DMatrix<f32>, y: &DMatrix<f32>, w: &MabWeights, heads: usize) -> DMatrix<f32> {
    let h = x + w.ff_att.apply_relu(&multihead_att(x, y, y, w, heads));
    let ff = w.ff_out.apply_relu(&h);
    h + ff
}

/// `ISAB(X) = MAB(X, MAB(I, X))`.
pub fn isab(x: &DMatrix<f32>, w: &IsabWeights, heads: usize) -> DMatrix<f32> {
    let summary = mab(&w.inducing, x, &w.inner, heads);
    mab(x, &summary, &w.outer, heads)
}

/// One logit per input row.
pub fn set_transformer_forward(x: &DMatrix<f32>, weights: &StWeights) -> Result<Vec<f32>> {
    let meta = &weights.meta;
    if x.ncols() != meta.input_dim {
        return Err(Error::DimensionMismatch { expected: meta.input_dim, got: x.ncols() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite SplitNet input".into()));
    }
    let mut h = weights.embed.apply(x);
    for block in &weights.isabs {
        h = isab(&h, block, meta.heads);
    }
    let pooled = mab(&weights.pma_seeds, &h, &weights.pma, meta.heads);
    let per_point = mab(&h, &pooled, &weights.point_mab, meta.heads);
    Ok(weights.out.apply(&per_point).column(0).iter().copied().collect())
}
