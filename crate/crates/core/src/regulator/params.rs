use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::linalg::Matrix;
use crate::rng::SplitMix64;

pub const DEFAULT_LAYERS: usize = 2;
pub const DEFAULT_HEADS: usize = 8;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.05;
pub const DEFAULT_DROPOUT: f64 = 0.4;

/// One attention head: projection `weight` (head_dim × in_dim) and attention
/// vector `attn` of length `2 · head_dim` (source half, then neighbour half).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatHead {
    pub weight: Matrix,
    pub attn: Vec<f64>,
}

/// Trainable state of the syntax encoder and the scoring projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorParams {
    pub dim: usize,
    pub heads: usize,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    /// `layers[l][k]` is head `k` of layer `l`.
    pub layers: Vec<Vec<GatHead>>,
    /// Linear scoring projection applied to each encoded token.
    pub scorer: Vec<f64>,
}

impl RegulatorParams {
    /// Glorot-uniform initialisation drawn from a seeded SplitMix64 stream.
    pub fn init(dim: usize, layers: usize, heads: usize, seed: u64) -> Result<Self> {
        check_shape(dim, heads)?;
        let head_dim = dim / heads;
        let mut rng = SplitMix64::new(seed);
        let mut glorot = |fan_in: usize, fan_out: usize, len: usize| -> Vec<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..len).map(|_| rng.uniform(-bound, bound)).collect()
        };
        let mut stack = Vec::with_capacity(layers);
        for _ in 0..layers {
            let mut hs = Vec::with_capacity(heads);
            for _ in 0..heads {
                let weight =
                    Matrix::from_vec(head_dim, dim, glorot(dim, head_dim, head_dim * dim))?;
                let attn = glorot(2 * head_dim, 1, 2 * head_dim);
                hs.push(GatHead { weight, attn });
            }
            stack.push(hs);
        }
        let scorer = glorot(dim, 1, dim);
        Ok(Self {
            dim,
            heads,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            dropout_rate: DEFAULT_DROPOUT,
            layers: stack,
            scorer,
        })
    }

    /// Same shapes, all entries zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|x| *x = 0.0);
        z
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.dim, self.heads)?;
        let hd = self.head_dim();
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.len() != self.heads {
                return Err(Error::Dimension(format!(
                    "layer {l} has {} heads, expected {}",
                    layer.len(),
                    self.heads
                )));
            }
            for (k, h) in layer.iter().enumerate() {
                if h.weight.shape() != (hd, self.dim) || h.attn.len() != 2 * hd {
                    return Err(Error::Dimension(format!(
                        "layer {l} head {k}: weight {:?}, attn {}; expected ({hd}, {}), {}",
                        h.weight.shape(),
                        h.attn.len(),
                        self.dim,
                        2 * hd
                    )));
                }
            }
        }
        if self.scorer.len() != self.dim {
            return Err(Error::Dimension(format!(
                "scorer has {} entries, expected {}",
                self.scorer.len(),
                self.dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Input(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        let mut finite = true;
        self.for_each(|x| finite &= x.is_finite());
        if !finite || !self.leaky_slope.is_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Visits every trainable entry in a fixed order: per layer, per head,
    /// weight then attention vector; scorer last.
    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        for layer in &self.layers {
            for h in layer {
                h.weight.as_slice().iter().for_each(|x| f(*x));
                h.attn.iter().for_each(|x| f(*x));
            }
        }
        self.scorer.iter().for_each(|x| f(*x));
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            for h in layer {
                h.weight.as_mut_slice().iter_mut().for_each(&mut f);
                h.attn.iter_mut().for_each(&mut f);
            }
        }
        self.scorer.iter_mut().for_each(f);
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.for_each(|x| v.push(x));
        v
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.len()
            )));
        }
        let mut it = values.iter();
        self.for_each_mut(|x| *x = *it.next().unwrap_or(&0.0));
        Ok(())
    }

    /// Number of trainable entries.
    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each(|_| n += 1);
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += scale · other`, entry by entry.
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        let flat = other.to_flat();
        let mut it = flat.iter();
        self.for_each_mut(|x| *x += scale * it.next().copied().unwrap_or(0.0));
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        self.for_each(|x| m = m.max(x.abs()));
        m
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_file(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_shape(dim: usize, heads: usize) -> Result<()> {
    if dim == 0 || heads == 0 || !dim.is_multiple_of(heads) {
        return Err(Error::Dimension(format!(
            "dim {dim} must be a positive multiple of the head count {heads}"
        )));
    }
    Ok(())
}
