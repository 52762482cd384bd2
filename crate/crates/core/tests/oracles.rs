//! Straight-line reimplementations checked against the library.

#![allow(clippy::needless_range_loop)]

use seqreg::corpus::{adjacency, hash_reprs, DepSentence};
use seqreg::regulator::{gat_forward, gat_trace, regulate, BiasConfig, RegulatorParams};
use seqreg::Matrix;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Dense GAT: `mask[i][j]` is 1 when `j == i` or `j` is a child of `i`.
fn dense_gat(h: &[Vec<f64>], mask: &[Vec<u8>], p: &RegulatorParams) -> Vec<Vec<f64>> {
    let n = h.len();
    let hd = p.head_dim();
    let mut x: Vec<Vec<f64>> = h.to_vec();
    for layer in &p.layers {
        let mut next = vec![Vec::with_capacity(p.dim); n];
        for head in layer {
            let z: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    (0..hd)
                        .map(|r| (0..p.dim).map(|c| head.weight[(r, c)] * x[i][c]).sum())
                        .collect()
                })
                .collect();
            for i in 0..n {
                let mut logits = vec![f64::NEG_INFINITY; n];
                for j in 0..n {
                    if mask[i][j] == 1 {
                        let mut e = 0.0;
                        for r in 0..hd {
                            e += head.attn[r] * z[i][r] + head.attn[hd + r] * z[j][r];
                        }
                        logits[j] = if e >= 0.0 { e } else { p.leaky_slope * e };
                    }
                }
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let total: f64 = w.iter().sum();
                for r in 0..hd {
                    next[i].push((0..n).map(|j| w[j] / total * z[j][r]).sum());
                }
            }
        }
        x = next;
    }
    x
}

fn mask_of(heads: &[Option<usize>]) -> Vec<Vec<u8>> {
    let n = heads.len();
    let mut m = vec![vec![0u8; n]; n];
    for i in 0..n {
        m[i][i] = 1;
    }
    for (j, h) in heads.iter().enumerate() {
        if let Some(i) = h {
            m[*i][j] = 1;
        }
    }
    m
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

#[test]
fn gat_matches_dense_oracle() {
    let words = ["the", "soup", "was", "very", "hot"];
    let heads = [Some(1), Some(2), None, Some(4), Some(2)];
    let rels = ["det", "nsubj", "root", "advmod", "acomp"];
    let s = DepSentence::from_parts("g", &words, &heads, &rels).unwrap();
    for (dim, k, layers, seed) in [(4, 2, 2, 3u64), (6, 3, 1, 9), (4, 1, 3, 11)] {
        let p = RegulatorParams::init(dim, layers, k, seed).unwrap();
        let h = hash_reprs(&words, dim, 7);
        let got = gat_forward(&h, &adjacency(&s), &p).unwrap();
        let want = dense_gat(&rows(&h), &mask_of(&heads), &p);
        for i in 0..words.len() {
            for c in 0..dim {
                assert!(
                    close(got[(i, c)], want[i][c], 1e-12),
                    "dim {dim} node {i} col {c}"
                );
            }
        }
    }
}

#[test]
fn leaf_attends_only_to_itself() {
    let s = DepSentence::from_parts("l", &["a", "b"], &[None, Some(0)], &["root", "amod"]).unwrap();
    let p = RegulatorParams::init(4, 1, 2, 1).unwrap();
    let h = hash_reprs(&["a", "b"], 4, 1);
    let att = gat_trace(&h, &adjacency(&s), &p, None).unwrap().attention();
    for head in &att[0] {
        assert_eq!(head[1], vec![(1, 1.0)]);
        assert_eq!(head[0].len(), 2);
    }
}

#[test]
fn regulate_matches_step_by_step_oracle() {
    let words = ["service", "was", "slow", "but", "friendly"];
    let heads = [Some(1), None, Some(1), Some(4), Some(2)];
    let rels = ["nsubj", "root", "acomp", "cc", "conj"];
    let dim = 4;
    let h = hash_reprs(&words, dim, 21);
    let s = DepSentence::from_parts("r", &words, &heads, &rels)
        .unwrap()
        .with_reprs(h.clone())
        .unwrap();
    let p = RegulatorParams::init(dim, 2, 2, 21).unwrap();
    let cfg = BiasConfig::default();
    let (permuted, bundle) = regulate(&s, &p, &cfg).unwrap();

    let g = dense_gat(&rows(&h), &mask_of(&heads), &p);
    let n = words.len();
    let logits: Vec<f64> = g
        .iter()
        .map(|row| row.iter().zip(&p.scorer).map(|(a, b)| a * b).sum())
        .collect();
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let rs: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
    let bl: Vec<f64> = (0..n).map(|i| (128.0 - i as f64) / n as f64).collect();
    let bz: f64 = bl.iter().map(|l| l.exp()).sum();
    let bs: Vec<f64> = bl.iter().map(|l| l.exp() / bz).collect();
    let ps: Vec<f64> = (0..n).map(|i| rs[i] + bs[i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    // insertion sort, descending and stable
    for a in 1..n {
        let mut b = a;
        while b > 0 && ps[order[b - 1]] < ps[order[b]] {
            order.swap(b - 1, b);
            b -= 1;
        }
    }
    for i in 0..n {
        assert!(close(bundle.rs[i], rs[i], 1e-12));
        assert!(close(bundle.bs[i], bs[i], 1e-12));
        assert!(close(bundle.ps[i], ps[i], 1e-12));
    }
    assert_eq!(bundle.perm.order(), order.as_slice());
    for (k, &src) in order.iter().enumerate() {
        for c in 0..dim {
            assert!(close(permuted[(k, c)], g[src][c], 1e-12));
        }
    }
}

#[test]
fn adjacency_matches_brute_force() {
    let words = ["a", "b", "c", "d", "e", "f"];
    let heads = [Some(2), Some(2), None, Some(2), Some(3), Some(4)];
    let rels = ["x", "x", "root", "x", "x", "x"];
    let s = DepSentence::from_parts("a", &words, &heads, &rels).unwrap();
    let a = adjacency(&s);
    let mut want = vec![vec![0u8; 6]; 6];
    for (j, h) in heads.iter().enumerate() {
        if let Some(i) = h {
            want[*i][j] = 1;
        }
    }
    assert_eq!(a.to_rows(), want);
    assert_eq!(a.count_ones(), 5);
}

#[test]
fn dropout_only_with_rng() {
    let words = ["x", "y", "z"];
    let s = DepSentence::from_parts("d", &words, &[None, Some(0), Some(0)], &["root", "a", "b"])
        .unwrap();
    let p = RegulatorParams::init(4, 2, 2, 2).unwrap();
    let h = hash_reprs(&words, 4, 2);
    let adj = adjacency(&s);
    let plain = gat_forward(&h, &adj, &p).unwrap();
    assert_eq!(gat_trace(&h, &adj, &p, None).unwrap().output(), &plain);
    let mut rng = seqreg::rng::SplitMix64::new(4);
    let dropped = gat_trace(&h, &adj, &p, Some(&mut rng)).unwrap();
    assert_ne!(dropped.output(), &plain);
}
