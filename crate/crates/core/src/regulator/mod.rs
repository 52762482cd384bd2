//! Score-based dynamic reordering: a graph-attention syntax encoder over the
//! dependency tree, a learned representation score, a fixed positional bias
//! score, and the permutation obtained by sorting their sum.

pub mod gat;
pub mod grad;
pub mod params;
pub mod scores;
pub mod train;

pub use gat::{gat_backward, gat_forward, gat_trace, GatTrace};
pub use grad::{grad_check, loss_and_grad, loss_value, GradCheckReport, Loss, LossGrad};
pub use params::{GatHead, RegulatorParams};
pub use scores::{
    bias_score, dynamic_order, position_score, representation_score, BiasConfig, ScoreBundle,
};
pub use train::{gold_pairs, train_surrogate, TrainConfig, TrainMetrics};

use crate::corpus::{adjacency, DepSentence};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::static_reorder::apply_permutation;

/// Encodes the sentence, scores every token and returns the encoded rows in
/// descending position-score order together with the scores.
pub fn regulate(
    s: &DepSentence,
    params: &RegulatorParams,
    cfg: &BiasConfig,
) -> Result<(Matrix, ScoreBundle)> {
    let h = s
        .reprs()
        .ok_or_else(|| Error::Input(format!("sentence {} has no representations", s.id())))?;
    let g = gat_forward(h, &adjacency(s), params)?;
    let rs = representation_score(&g, &params.scorer);
    let bs = bias_score(s.len(), cfg);
    let bundle = ScoreBundle::from_scores(rs, bs)?;
    let permuted = apply_permutation(&g, &bundle.perm)?;
    Ok((permuted, bundle))
}
