//! Network pieces recorded on a [`Graph`], so each composes with autodiff.

use std::sync::Arc;

use super::Activation;
use crate::tensor::{Graph, SparseMatrix, TensorError, Var};

/// Dropout, the stacked dilated convolutions with ReLU, then the linear
/// projection back to width `d`. `embedded` is `l × d`; the result is
/// `(l − shrink) × d`.
#[allow(clippy::too_many_arguments)]
pub fn encode_channel(
    g: &mut Graph,
    embedded: Var,
    kernels: &[Var],
    dilations: &[usize],
    projection: Var,
    dropout: f64,
    seed: u64,
    training: bool,
) -> Result<Var, TensorError> {
    let mut x = g.dropout(embedded, dropout, seed, training)?;
    for (&k, &dilation) in kernels.iter().zip(dilations) {
        let conv = g.dilated_conv1d(x, k, dilation)?;
        x = g.relu(conv);
    }
    g.matmul(x, projection)
}

/// Two graph-convolution layers `h ← act(A·h·W)` from `h = v`, returning
/// `v + h²`.
pub fn label_features(
    g: &mut Graph,
    adjacency: &Arc<SparseMatrix>,
    v: Var,
    weights: &[Var; 2],
    activation: Activation,
) -> Result<Var, TensorError> {
    let mut h = v;
    for &w in weights {
        let hw = g.matmul(h, w)?;
        let ahw = g.sparse_matmul(adjacency, hw)?;
        h = match activation {
            Activation::Relu => g.relu(ahw),
            Activation::Identity => ahw,
        };
    }
    g.add(v, h)
}

/// Label-wise attention over the first `valid` positions of `features`
/// (`n × d`) for label matrix `h` (`L × d`). Returns the `L × d` contents and
/// the `n × L` attention weights.
pub fn attend(g: &mut Graph, features: Var, h: Var, valid: usize) -> Result<(Var, Var), TensorError> {
    let logits = g.matmul_nt(features, h)?;
    let alpha = g.softmax_masked(logits, 0, valid)?;
    let content = g.matmul_tn(alpha, features)?;
    Ok((content, alpha))
}

/// Sums channel contents and scores label `i` as `sigmoid(⟨D_i, H_i⟩ + b_i)`.
pub fn fuse_and_score(g: &mut Graph, contents: &[Var], h: Var, bias: Var) -> Result<Var, TensorError> {
    let doc = match contents {
        [one] => *one,
        many => g.add_n(many)?,
    };
    let prod = g.mul(doc, h)?;
    let dots = g.row_sum(prod)?;
    let logits = g.add(dots, bias)?;
    Ok(g.sigmoid(logits))
}
