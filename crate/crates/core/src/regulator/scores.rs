//! Position score = representation score + bias score, and the ordering it induces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{softmax, Matrix};
use crate::static_reorder::Permutation;

/// Constants of the sequence prior `l_i = (l − i·d) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasConfig {
    pub length: f64,
    pub step: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self {
            length: 128.0,
            step: 1.0,
        }
    }
}

impl BiasConfig {
    pub fn new(length: f64, step: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Input(format!(
                "bias length must be positive, got {length}"
            )));
        }
        if !(step >= 0.0 && step.is_finite()) {
            return Err(Error::Input(format!(
                "bias step must be non-negative, got {step}"
            )));
        }
        Ok(Self { length, step })
    }
}

/// Softmax over the linear projection of each encoded token.
pub fn representation_score(g: &Matrix, scorer: &[f64]) -> Vec<f64> {
    softmax(&g.matvec(scorer))
}

/// Softmax over `l_i = (l − i·d) / n` for positions `0..n`.
pub fn bias_score(n: usize, cfg: &BiasConfig) -> Vec<f64> {
    let logits: Vec<f64> = (0..n)
        .map(|i| (cfg.length - i as f64 * cfg.step) / n as f64)
        .collect();
    softmax(&logits)
}

pub fn position_score(rs: &[f64], bs: &[f64]) -> Result<Vec<f64>> {
    if rs.len() != bs.len() {
        return Err(Error::Dimension(format!(
            "representation score has {} entries, bias score {}",
            rs.len(),
            bs.len()
        )));
    }
    Ok(rs.iter().zip(bs).map(|(r, b)| r + b).collect())
}

/// Indices by descending score; equal scores keep ascending index order.
pub fn dynamic_order(ps: &[f64]) -> Permutation {
    let mut order: Vec<usize> = (0..ps.len()).collect();
    order.sort_by(|&a, &b| ps[b].total_cmp(&ps[a]));
    Permutation::new(order).expect("sorted indices form a permutation")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBundle {
    pub rs: Vec<f64>,
    pub bs: Vec<f64>,
    pub ps: Vec<f64>,
    #[serde(serialize_with = "serialize_perm")]
    pub perm: Permutation,
}

fn serialize_perm<S: serde::Serializer>(p: &Permutation, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(p.order())
}

impl ScoreBundle {
    pub fn from_scores(rs: Vec<f64>, bs: Vec<f64>) -> Result<Self> {
        let ps = position_score(&rs, &bs)?;
        let perm = dynamic_order(&ps);
        Ok(Self { rs, bs, ps, perm })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identical_rows_give_uniform_scores() {
        let g = Matrix::from_rows(&vec![vec![0.2, 0.7]; 4]).unwrap();
        let rs = representation_score(&g, &[3.0, -1.0]);
        assert!(close(&rs, &[0.25; 4], 1e-15));
        let one = Matrix::from_rows(&[vec![5.0, 5.0]]).unwrap();
        assert_eq!(representation_score(&one, &[1.0, 1.0]), vec![1.0]);
    }

    #[test]
    fn projection_on_first_column() {
        let g = Matrix::from_rows(&[vec![0.5, 9.0], vec![-1.0, 2.0], vec![2.0, -3.0]]).unwrap();
        let rs = representation_score(&g, &[1.0, 0.0]);
        let e: Vec<f64> = [0.5f64, -1.0, 2.0].iter().map(|x| x.exp()).collect();
        let z: f64 = e.iter().sum();
        let expected: Vec<f64> = e.iter().map(|x| x / z).collect();
        assert!(close(&rs, &expected, 1e-15));
    }

    #[test]
    fn bias_short_text_values() {
        let bs = bias_score(3, &BiasConfig::default());
        assert!(close(&bs, &[0.4484, 0.3213, 0.2302], 5e-4), "{bs:?}");
        assert!((bs[0] - bs[1] - 0.1271).abs() < 5e-4);
        assert_eq!(bias_score(1, &BiasConfig::default()), vec![1.0]);
    }

    #[test]
    fn bias_long_text_values() {
        let bs = bias_score(18, &BiasConfig::default());
        assert!(close(&bs[..3], &[0.0855, 0.0809, 0.0765], 5e-4), "{bs:?}");
        assert!((bs[0] - bs[1] - 0.0046).abs() < 5e-4);
    }

    #[test]
    fn two_token_position_score() {
        let bs = bias_score(2, &BiasConfig::default());
        // softmax(64, 63.5)
        let first = 1.0 / (1.0 + (-0.5f64).exp());
        assert!((bs[0] - first).abs() < 1e-15);
        let ps = position_score(&[1.0, 0.0], &bs).unwrap();
        assert!(close(&ps, &[1.0 + first, 1.0 - first], 1e-15));
        assert!((ps[0] - 1.6225).abs() < 1e-4 && (ps[1] - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn uniform_halves_give_constant_position_score() {
        let u = vec![0.2; 5];
        let ps = position_score(&u, &u).unwrap();
        assert!(ps.iter().all(|x| (x - 0.4).abs() < 1e-15));
        assert!(matches!(
            position_score(&u, &u[..4]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn constant_bias_preserves_representation_order() {
        let rs = vec![0.1, 0.5, 0.15, 0.25];
        let ps = position_score(&rs, &[0.3; 4]).unwrap();
        assert_eq!(dynamic_order(&ps), dynamic_order(&rs));
    }

    #[test]
    fn dynamic_order_examples() {
        assert_eq!(dynamic_order(&[0.5, 0.3, 0.2]).order(), &[0, 1, 2]);
        assert_eq!(dynamic_order(&[0.2, 0.5, 0.3]).order(), &[1, 2, 0]);
        assert!(dynamic_order(&[0.7; 6]).is_identity());
    }

    #[test]
    fn bias_config_validation() {
        assert!(BiasConfig::new(0.0, 1.0).is_err());
        assert!(BiasConfig::new(128.0, -1.0).is_err());
        assert!(BiasConfig::new(128.0, 0.0).is_ok());
    }
}
