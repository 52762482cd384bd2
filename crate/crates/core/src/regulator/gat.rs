//! Multi-head graph attention over the dependency tree.
//!
//! Node `i` attends over itself and its children under the parent → child
//! adjacency. For head `k` with projection `W` and attention vector
//! `a = [a_src ∥ a_nbr]`:
//!
//! ```text
//! z_j    = W g_j
//! e_ij   = LeakyReLU(a_src · z_i + a_nbr · z_j)
//! α_ij   = softmax_j e_ij              (j ∈ {i} ∪ children(i))
//! out_i  = ∥_k Σ_j α_ij z_j
//! ```
//!
//! Layers are stacked without an intermediate nonlinearity.

#![allow(clippy::needless_range_loop)]

use crate::corpus::AdjMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, softmax, softmax_backward, Matrix};
use crate::rng::SplitMix64;

use super::params::RegulatorParams;

/// Attention of one node in one head: `(neighbour, weight)` pairs, self first.
pub type NodeAttention = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
struct HeadCache {
    z: Matrix,
    /// Pre-activation scores per node, aligned with `neighbours[i]`.
    pre: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    /// Inverted-dropout multipliers applied to `input`, if any.
    mask: Option<Vec<f64>>,
    heads: Vec<HeadCache>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct GatTrace {
    neighbours: Vec<Vec<usize>>,
    layers: Vec<LayerCache>,
    output: Matrix,
}

impl GatTrace {
    pub fn output(&self) -> &Matrix {
        &self.output
    }

    /// `[layer][head][node]` attention distributions.
    pub fn attention(&self) -> Vec<Vec<Vec<NodeAttention>>> {
        self.layers
            .iter()
            .map(|layer| {
                layer
                    .heads
                    .iter()
                    .map(|h| {
                        h.alpha
                            .iter()
                            .zip(&self.neighbours)
                            .map(|(a, nb)| nb.iter().copied().zip(a.iter().copied()).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }
}

fn neighbourhoods(adj: &AdjMatrix) -> Vec<Vec<usize>> {
    (0..adj.len())
        .map(|i| std::iter::once(i).chain(adj.children(i)).collect())
        .collect()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn leaky_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Forward pass. With `dropout` set and a positive rate, each layer input is
/// masked with inverted dropout drawn from the generator.
pub fn gat_trace(
    h: &Matrix,
    adj: &AdjMatrix,
    params: &RegulatorParams,
    mut dropout: Option<&mut SplitMix64>,
) -> Result<GatTrace> {
    let n = h.rows();
    if adj.len() != n {
        return Err(Error::Dimension(format!(
            "adjacency is {0}x{0} but there are {n} representation rows",
            adj.len()
        )));
    }
    if h.cols() != params.dim {
        return Err(Error::Dimension(format!(
            "representations have {} columns, parameters expect {}",
            h.cols(),
            params.dim
        )));
    }
    let neighbours = neighbourhoods(adj);
    let hd = params.head_dim();
    let slope = params.leaky_slope;

    let mut current = h.clone();
    let mut layers = Vec::with_capacity(params.num_layers());
    for (l, layer) in params.layers.iter().enumerate() {
        let mask = match dropout.as_deref_mut() {
            Some(rng) if params.dropout_rate > 0.0 => {
                let keep = 1.0 - params.dropout_rate;
                let m: Vec<f64> = (0..current.as_slice().len())
                    .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                    .collect();
                current
                    .as_mut_slice()
                    .iter_mut()
                    .zip(&m)
                    .for_each(|(x, s)| *x *= s);
                Some(m)
            }
            _ => None,
        };

        let mut out = Matrix::zeros(n, params.dim);
        let mut heads = Vec::with_capacity(layer.len());
        for (k, head) in layer.iter().enumerate() {
            let z = current.matmul_t(&head.weight)?;
            let (a_src, a_nbr) = head.attn.split_at(hd);
            let src: Vec<f64> = (0..n).map(|i| dot(a_src, z.row(i))).collect();
            let nbr: Vec<f64> = (0..n).map(|j| dot(a_nbr, z.row(j))).collect();
            let mut pre = Vec::with_capacity(n);
            let mut alpha = Vec::with_capacity(n);
            for i in 0..n {
                let p: Vec<f64> = neighbours[i].iter().map(|&j| src[i] + nbr[j]).collect();
                let e: Vec<f64> = p.iter().map(|&x| leaky(x, slope)).collect();
                let a = softmax(&e);
                let row = &mut out.row_mut(i)[k * hd..(k + 1) * hd];
                for (&j, &w) in neighbours[i].iter().zip(&a) {
                    row.iter_mut()
                        .zip(z.row(j))
                        .for_each(|(o, zj)| *o += w * zj);
                }
                pre.push(p);
                alpha.push(a);
            }
            heads.push(HeadCache { z, pre, alpha });
        }
        if !out.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite activation in layer {l}"
            )));
        }
        layers.push(LayerCache {
            input: std::mem::replace(&mut current, out),
            mask,
            heads,
        });
    }
    Ok(GatTrace {
        neighbours,
        layers,
        output: current,
    })
}

/// Deterministic forward pass (no dropout).
pub fn gat_forward(h: &Matrix, adj: &AdjMatrix, params: &RegulatorParams) -> Result<Matrix> {
    Ok(gat_trace(h, adj, params, None)?.output)
}

/// Backpropagates `grad_out = ∂L/∂G` through the traced forward pass,
/// accumulating parameter gradients into `grads` (which must share the shape
/// of `params`). Returns `∂L/∂H`.
pub fn gat_backward(
    trace: &GatTrace,
    params: &RegulatorParams,
    grad_out: &Matrix,
    grads: &mut RegulatorParams,
) -> Result<Matrix> {
    let n = trace.output.rows();
    if grad_out.shape() != trace.output.shape() {
        return Err(Error::Dimension(format!(
            "output gradient {:?} does not match output {:?}",
            grad_out.shape(),
            trace.output.shape()
        )));
    }
    let hd = params.head_dim();
    let slope = params.leaky_slope;
    let mut upstream = grad_out.clone();

    for (l, cache) in trace.layers.iter().enumerate().rev() {
        let mut d_input = Matrix::zeros(n, params.dim);
        for (k, hc) in cache.heads.iter().enumerate() {
            let head = &params.layers[l][k];
            let (a_src, a_nbr) = head.attn.split_at(hd);
            let mut dz = Matrix::zeros(n, hd);
            let mut d_src = vec![0.0; n];
            let mut d_nbr = vec![0.0; n];

            for i in 0..n {
                let d_out = &upstream.row(i)[k * hd..(k + 1) * hd];
                let nb = &trace.neighbours[i];
                let alpha = &hc.alpha[i];
                let mut d_alpha = Vec::with_capacity(nb.len());
                for (&j, &w) in nb.iter().zip(alpha) {
                    d_alpha.push(dot(d_out, hc.z.row(j)));
                    dz.row_mut(j)
                        .iter_mut()
                        .zip(d_out)
                        .for_each(|(g, d)| *g += w * d);
                }
                let d_e = softmax_backward(alpha, &d_alpha);
                for ((&j, de), &p) in nb.iter().zip(d_e).zip(&hc.pre[i]) {
                    let dp = de * leaky_grad(p, slope);
                    d_src[i] += dp;
                    d_nbr[j] += dp;
                }
            }

            // src_i = a_src · z_i, nbr_j = a_nbr · z_j
            let g_head = &mut grads.layers[l][k];
            for i in 0..n {
                let zi = hc.z.row(i);
                for c in 0..hd {
                    g_head.attn[c] += d_src[i] * zi[c];
                    g_head.attn[hd + c] += d_nbr[i] * zi[c];
                }
                let dzi = dz.row_mut(i);
                for c in 0..hd {
                    dzi[c] += d_src[i] * a_src[c] + d_nbr[i] * a_nbr[c];
                }
            }

            // z = X Wᵀ
            for i in 0..n {
                let xi = cache.input.row(i);
                let dzi = dz.row(i);
                for r in 0..hd {
                    if dzi[r] == 0.0 {
                        continue;
                    }
                    let w_row = head.weight.row(r);
                    let gw = g_head.weight.row_mut(r);
                    gw.iter_mut().zip(xi).for_each(|(g, x)| *g += dzi[r] * x);
                    d_input
                        .row_mut(i)
                        .iter_mut()
                        .zip(w_row)
                        .for_each(|(g, w)| *g += dzi[r] * w);
                }
            }
        }
        if let Some(mask) = &cache.mask {
            d_input
                .as_mut_slice()
                .iter_mut()
                .zip(mask)
                .for_each(|(g, m)| *g *= m);
        }
        upstream = d_input;
    }
    Ok(upstream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{adjacency, hash_reprs, DepSentence};
    use crate::regulator::params::GatHead;

    fn single_head(dim: usize, weight: Matrix, attn: Vec<f64>) -> RegulatorParams {
        RegulatorParams {
            dim,
            heads: 1,
            leaky_slope: 0.05,
            dropout_rate: 0.0,
            layers: vec![vec![GatHead { weight, attn }]],
            scorer: vec![0.0; dim],
        }
    }

    #[test]
    fn identity_configuration_is_a_no_op() {
        let s = DepSentence::from_parts("a", &["x"], &[None], &["root"]).unwrap();
        let h = Matrix::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        let p = single_head(3, Matrix::identity(3), vec![0.0; 6]);
        let g = gat_forward(&h, &adjacency(&s), &p).unwrap();
        assert_eq!(g, h);
    }

    #[test]
    fn symmetric_neighbours_share_attention() {
        // root with two children carrying the same representation
        let s = DepSentence::from_parts(
            "b",
            &["l", "r", "m"],
            &[Some(2), Some(2), None],
            &["dep", "dep", "root"],
        )
        .unwrap();
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![-0.5, 0.1]]).unwrap();
        let p = single_head(2, Matrix::identity(2), vec![0.0; 4]);
        let trace = gat_trace(&h, &adjacency(&s), &p, None).unwrap();
        let att = &trace.attention()[0][0][2];
        assert_eq!(att.len(), 3);
        for (_, w) in att {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        // leaves attend only to themselves
        assert_eq!(trace.attention()[0][0][0], vec![(0, 1.0)]);
    }

    #[test]
    fn shape_mismatches_are_dimension_errors() {
        let s =
            DepSentence::from_parts("c", &["x", "y"], &[None, Some(0)], &["root", "dep"]).unwrap();
        let p = RegulatorParams::init(4, 1, 2, 1).unwrap();
        let h = Matrix::zeros(2, 3);
        assert!(matches!(
            gat_forward(&h, &adjacency(&s), &p),
            Err(Error::Dimension(_))
        ));
        let h = Matrix::zeros(3, 4);
        assert!(matches!(
            gat_forward(&h, &adjacency(&s), &p),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn overflow_is_numeric_error() {
        let s =
            DepSentence::from_parts("d", &["x", "y"], &[None, Some(0)], &["root", "dep"]).unwrap();
        let mut p = RegulatorParams::init(2, 2, 1, 1).unwrap();
        p.for_each_mut(|x| *x = 1e300);
        let h = Matrix::from_rows(&[vec![1e10, 1e10], vec![1e10, 1e10]]).unwrap();
        assert!(matches!(
            gat_forward(&h, &adjacency(&s), &p),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn dropout_only_applies_with_generator() {
        let s = DepSentence::from_parts(
            "e",
            &["a", "b", "c"],
            &[None, Some(0), Some(0)],
            &["root", "dep", "dep"],
        )
        .unwrap();
        let h = hash_reprs(&s.surfaces(), 4, 1);
        let p = RegulatorParams::init(4, 2, 2, 9).unwrap();
        let adj = adjacency(&s);
        let det = gat_forward(&h, &adj, &p).unwrap();
        assert_eq!(det, gat_forward(&h, &adj, &p).unwrap());
        let mut rng = SplitMix64::new(3);
        let dropped = gat_trace(&h, &adj, &p, Some(&mut rng)).unwrap();
        assert_ne!(dropped.output(), &det);
    }
}
