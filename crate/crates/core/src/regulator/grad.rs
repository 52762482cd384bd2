//! Analytic gradients of scalar losses on the position score, and their
//! verification against central finite differences.

#![allow(clippy::needless_range_loop)]

use serde::Serialize;

use crate::corpus::{adjacency, AdjMatrix, DepSentence};
use crate::error::{Error, Result};
use crate::linalg::{softmax_backward, Matrix};
use crate::rng::SplitMix64;

use super::gat::{gat_backward, gat_trace};
use super::params::RegulatorParams;
use super::scores::{bias_score, representation_score, BiasConfig, ScoreBundle};

#[derive(Debug, Clone, PartialEq)]
pub enum Loss {
    /// `Σ (ps_a − ps_o)²` over `(a, o)` token pairs.
    PairProximity(Vec<(usize, usize)>),
    /// `½ ‖ps − target‖²`.
    TargetMse(Vec<f64>),
}

impl Loss {
    fn check(&self, n: usize) -> Result<()> {
        match self {
            Loss::PairProximity(pairs) => {
                if let Some((a, o)) = pairs.iter().find(|(a, o)| *a >= n || *o >= n) {
                    return Err(Error::Dimension(format!(
                        "pair ({a}, {o}) outside {n} tokens"
                    )));
                }
            }
            Loss::TargetMse(t) if t.len() != n => {
                return Err(Error::Dimension(format!(
                    "target has {} entries for {n} tokens",
                    t.len()
                )))
            }
            Loss::TargetMse(_) => {}
        }
        Ok(())
    }

    /// Loss value and `∂L/∂ps`.
    pub fn eval(&self, ps: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; ps.len()];
        let value = match self {
            Loss::PairProximity(pairs) => pairs
                .iter()
                .map(|&(a, o)| {
                    let diff = ps[a] - ps[o];
                    grad[a] += 2.0 * diff;
                    grad[o] -= 2.0 * diff;
                    diff * diff
                })
                .sum(),
            Loss::TargetMse(target) => ps
                .iter()
                .zip(target)
                .zip(grad.iter_mut())
                .map(|((p, t), g)| {
                    *g = p - t;
                    0.5 * (p - t) * (p - t)
                })
                .sum(),
        };
        (value, grad)
    }
}

/// Output of one forward/backward pass.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: RegulatorParams,
    pub bundle: ScoreBundle,
}

/// Loss and parameter gradients for one sentence. Passing `dropout` enables
/// training-mode dropout in the encoder.
pub fn loss_and_grad(
    params: &RegulatorParams,
    h: &Matrix,
    adj: &AdjMatrix,
    bias: &BiasConfig,
    loss: &Loss,
    dropout: Option<&mut SplitMix64>,
) -> Result<LossGrad> {
    let n = h.rows();
    loss.check(n)?;
    let trace = gat_trace(h, adj, params, dropout)?;
    let g = trace.output();
    let rs = representation_score(g, &params.scorer);
    let bs = bias_score(n, bias);
    let bundle = ScoreBundle::from_scores(rs, bs)?;
    let (value, d_ps) = loss.eval(&bundle.ps);

    // ps = rs + bs with bs constant, so ∂L/∂rs = ∂L/∂ps.
    let d_logits = softmax_backward(&bundle.rs, &d_ps);
    let mut grads = params.zeros_like();
    let mut d_g = Matrix::zeros(n, params.dim);
    for i in 0..n {
        let gi = g.row(i);
        grads
            .scorer
            .iter_mut()
            .zip(gi)
            .for_each(|(w, x)| *w += d_logits[i] * x);
        d_g.row_mut(i)
            .iter_mut()
            .zip(&params.scorer)
            .for_each(|(d, w)| *d = d_logits[i] * w);
    }
    gat_backward(&trace, params, &d_g, &mut grads)?;

    if !value.is_finite() || grads.max_abs().is_nan() || !grads.max_abs().is_finite() {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok(LossGrad {
        loss: value,
        grads,
        bundle,
    })
}

/// Deterministic loss value only.
pub fn loss_value(
    params: &RegulatorParams,
    h: &Matrix,
    adj: &AdjMatrix,
    bias: &BiasConfig,
    loss: &Loss,
) -> Result<f64> {
    loss.check(h.rows())?;
    let g = gat_trace(h, adj, params, None)?;
    let rs = representation_score(g.output(), &params.scorer);
    let bs = bias_score(h.rows(), bias);
    let ps: Vec<f64> = rs.iter().zip(&bs).map(|(r, b)| r + b).collect();
    Ok(loss.eval(&ps).0)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Flat index (see [`RegulatorParams::for_each`]) of the worst entry.
    pub worst_entry: usize,
    pub entries: usize,
}

/// Compares analytic gradients with central differences for every parameter
/// entry. The error for one entry is `|g_a − g_f| / max(1, |g_a|, |g_f|)`.
pub fn grad_check(
    params: &RegulatorParams,
    instance: &DepSentence,
    bias: &BiasConfig,
    loss: &Loss,
    eps: f64,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Input(format!("eps {eps} outside [1e-6, 1e-3]")));
    }
    let h = instance.reprs().ok_or_else(|| {
        Error::Input(format!("sentence {} has no representations", instance.id()))
    })?;
    let adj = adjacency(instance);
    let analytic = loss_and_grad(params, h, &adj, bias, loss, None)?
        .grads
        .to_flat();

    let base = params.to_flat();
    let mut probe = params.clone();
    let mut worst = (0.0f64, 0usize);
    for (idx, &g_a) in analytic.iter().enumerate() {
        let mut shifted = base.clone();
        shifted[idx] = base[idx] + eps;
        probe.set_flat(&shifted)?;
        let up = loss_value(&probe, h, &adj, bias, loss)?;
        shifted[idx] = base[idx] - eps;
        probe.set_flat(&shifted)?;
        let down = loss_value(&probe, h, &adj, bias, loss)?;
        let g_f = (up - down) / (2.0 * eps);
        if !g_f.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite difference at entry {idx}"
            )));
        }
        let err = (g_a - g_f).abs() / 1f64.max(g_a.abs()).max(g_f.abs());
        if err > worst.0 {
            worst = (err, idx);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_entry: worst.1,
        entries: analytic.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::hash_reprs;
    use crate::regulator::gat::gat_forward;

    fn instance(n: usize, dim: usize, seed: u64) -> DepSentence {
        let mut rng = SplitMix64::new(seed);
        let root = rng.below(n);
        let mut heads = vec![None; n];
        // attach each non-root node to an already attached node
        let mut attached = vec![root];
        let mut rest: Vec<usize> = (0..n).filter(|&i| i != root).collect();
        rng.shuffle(&mut rest);
        for i in rest {
            heads[i] = Some(attached[rng.below(attached.len())]);
            attached.push(i);
        }
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let surfaces: Vec<&str> = words.iter().map(String::as_str).collect();
        let deprels = vec!["dep"; n];
        let s = DepSentence::from_parts("g", &surfaces, &heads, &deprels).unwrap();
        let h = hash_reprs(&surfaces, dim, seed as i64);
        s.with_reprs(h).unwrap()
    }

    #[test]
    fn target_loss_matches_finite_differences() {
        let s = instance(3, 4, 11);
        let p = RegulatorParams::init(4, 2, 1, 11).unwrap();
        let loss = Loss::TargetMse(vec![1.0, 0.5, 0.5]);
        let r = grad_check(&p, &s, &BiasConfig::default(), &loss, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        assert_eq!(r.entries, p.len());
    }

    #[test]
    fn scorer_gradient_matches_closed_form() {
        let s = instance(5, 4, 3);
        let p = RegulatorParams::init(4, 2, 2, 3).unwrap();
        let h = s.reprs().unwrap();
        let adj = adjacency(&s);
        let g = gat_forward(h, &adj, &p).unwrap();
        let target = vec![0.9, 0.1, 0.3, 0.2, 0.5];
        let loss = Loss::TargetMse(target.clone());
        let lg = loss_and_grad(&p, h, &adj, &BiasConfig::default(), &loss, None).unwrap();

        // ∂rs_i/∂w = rs_i (g_i − Σ_j rs_j g_j)
        let rs = &lg.bundle.rs;
        let mean: Vec<f64> = (0..4)
            .map(|c| (0..5).map(|j| rs[j] * g[(j, c)]).sum())
            .collect();
        for c in 0..4 {
            let closed: f64 = (0..5)
                .map(|i| (lg.bundle.ps[i] - target[i]) * rs[i] * (g[(i, c)] - mean[c]))
                .sum();
            assert!((closed - lg.grads.scorer[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let s = instance(4, 4, 8);
        let p = RegulatorParams::init(4, 2, 2, 8).unwrap();
        let lg = loss_and_grad(
            &p,
            s.reprs().unwrap(),
            &adjacency(&s),
            &BiasConfig::default(),
            &Loss::PairProximity(vec![]),
            None,
        )
        .unwrap();
        assert_eq!(lg.loss, 0.0);
        assert_eq!(lg.grads.max_abs(), 0.0);
    }

    #[test]
    fn eps_range_enforced() {
        let s = instance(2, 2, 1);
        let p = RegulatorParams::init(2, 1, 1, 1).unwrap();
        let loss = Loss::TargetMse(vec![0.0, 0.0]);
        assert!(grad_check(&p, &s, &BiasConfig::default(), &loss, 1e-2).is_err());
        assert!(grad_check(&p, &s, &BiasConfig::default(), &loss, 1e-8).is_err());
    }

    #[test]
    fn bad_pairs_rejected() {
        let s = instance(3, 2, 1);
        let p = RegulatorParams::init(2, 1, 1, 1).unwrap();
        let r = loss_and_grad(
            &p,
            s.reprs().unwrap(),
            &adjacency(&s),
            &BiasConfig::default(),
            &Loss::PairProximity(vec![(0, 3)]),
            None,
        );
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
