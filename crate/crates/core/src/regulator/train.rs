//! Desk-scale surrogate trainer: pulls the position scores of each gold
//! aspect/opinion head pair together so the regulated order places them close.

use serde::Serialize;

use crate::corpus::{adjacency, AdjMatrix, LabeledExample};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::SplitMix64;

use super::gat::gat_forward;
use super::grad::{loss_and_grad, Loss};
use super::params::RegulatorParams;
use super::scores::{bias_score, dynamic_order, representation_score, BiasConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub bias: BiasConfig,
    /// Apply encoder dropout during updates; evaluation is always deterministic.
    pub dropout: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5.0,
            epochs: 200,
            seed: 5,
            bias: BiasConfig::default(),
            dropout: false,
        }
    }
}

/// Index `0` holds the values before the first update, index `e` the values
/// after epoch `e`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainMetrics {
    pub loss: Vec<f64>,
    pub mean_rank_distance: Vec<f64>,
    pub pairs: usize,
}

impl TrainMetrics {
    pub fn initial_rank_distance(&self) -> f64 {
        self.mean_rank_distance[0]
    }

    pub fn final_rank_distance(&self) -> f64 {
        *self.mean_rank_distance.last().unwrap_or(&0.0)
    }
}

/// `(aspect, opinion)` head positions of the gold tuples that carry both
/// spans; a span's head is its last token.
pub fn gold_pairs(ex: &LabeledExample) -> Vec<(usize, usize)> {
    ex.tuples
        .iter()
        .filter_map(|t| Some((t.aspect_span?[1] - 1, t.opinion_span?[1] - 1)))
        .collect()
}

struct Instance {
    h: Matrix,
    adj: AdjMatrix,
    pairs: Vec<(usize, usize)>,
}

fn evaluate(
    params: &RegulatorParams,
    data: &[Instance],
    bias: &BiasConfig,
    total_pairs: usize,
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut dist = 0.0;
    for inst in data {
        let g = gat_forward(&inst.h, &inst.adj, params)?;
        let rs = representation_score(&g, &params.scorer);
        let bs = bias_score(inst.h.rows(), bias);
        let ps: Vec<f64> = rs.iter().zip(&bs).map(|(r, b)| r + b).collect();
        let ranks = dynamic_order(&ps).ranks();
        for &(a, o) in &inst.pairs {
            loss += (ps[a] - ps[o]).powi(2);
            dist += ranks[a].abs_diff(ranks[o]) as f64;
        }
    }
    let denom = total_pairs.max(1) as f64;
    Ok((loss / denom, dist / denom))
}

/// Full-batch gradient descent on the mean pair-proximity loss.
pub fn train_surrogate(
    examples: &[LabeledExample],
    mut params: RegulatorParams,
    cfg: &TrainConfig,
) -> Result<(RegulatorParams, TrainMetrics)> {
    if examples.is_empty() {
        return Err(Error::Input("no training examples".into()));
    }
    params.validate()?;
    let mut data = Vec::with_capacity(examples.len());
    for ex in examples {
        let parse = ex
            .parse
            .as_ref()
            .ok_or_else(|| Error::Input(format!("example {} has no dependency parse", ex.id)))?;
        let h = parse
            .reprs()
            .ok_or_else(|| Error::Input(format!("example {} has no representations", ex.id)))?;
        data.push(Instance {
            h: h.clone(),
            adj: adjacency(parse),
            pairs: gold_pairs(ex),
        });
    }
    let total_pairs: usize = data.iter().map(|d| d.pairs.len()).sum();
    if total_pairs == 0 {
        return Err(Error::Input(
            "no gold tuple carries both aspect and opinion spans".into(),
        ));
    }

    let mut rng = SplitMix64::new(cfg.seed);
    let (l0, d0) = evaluate(&params, &data, &cfg.bias, total_pairs)?;
    let mut metrics = TrainMetrics {
        loss: vec![l0],
        mean_rank_distance: vec![d0],
        pairs: total_pairs,
    };
    let scale = 1.0 / total_pairs as f64;
    for _ in 0..cfg.epochs {
        let mut grads = params.zeros_like();
        for inst in &data {
            if inst.pairs.is_empty() {
                continue;
            }
            let dropout = if cfg.dropout { Some(&mut rng) } else { None };
            let lg = loss_and_grad(
                &params,
                &inst.h,
                &inst.adj,
                &cfg.bias,
                &Loss::PairProximity(inst.pairs.clone()),
                dropout,
            )?;
            grads.add_scaled(&lg.grads, scale);
        }
        params.add_scaled(&grads, -cfg.learning_rate);
        let (l, d) = evaluate(&params, &data, &cfg.bias, total_pairs)?;
        metrics.loss.push(l);
        metrics.mean_rank_distance.push(d);
    }
    Ok((params, metrics))
}
