//! Exact-match micro precision/recall/F1 over sentiment tuples, optionally
//! broken down by the token distance between aspect and opinion.

use indexmap::IndexMap;
use serde::Serialize;

use crate::corpus::{LabeledExample, SentimentTuple, TaskSpec};
use crate::error::{Error, Result};

/// Label of the bucket that collects unmatched predictions without spans.
pub const RESIDUAL_BUCKET: &str = "unresolved";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.matched += other.matched;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
    #[serde(skip_serializing_if = "IndexMap::is_empty")]
    pub per_bucket: IndexMap<String, EvalReport>,
}

impl EvalReport {
    pub fn from_counts(counts: Counts) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(counts.matched, counts.predicted);
        let recall = ratio(counts.matched, counts.gold);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
            counts,
            per_bucket: IndexMap::new(),
        }
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn key(t: &SentimentTuple, task: TaskSpec) -> Vec<String> {
    task.elements()
        .iter()
        .map(|e| normalize(t.element(*e).unwrap_or_default()))
        .collect()
}

/// For each prediction, the index of the gold tuple it consumes, if any.
fn match_example(
    gold: &[SentimentTuple],
    pred: &[SentimentTuple],
    task: TaskSpec,
) -> Vec<Option<usize>> {
    let gold_keys: Vec<_> = gold.iter().map(|t| key(t, task)).collect();
    let mut used = vec![false; gold.len()];
    pred.iter()
        .map(|p| {
            let k = key(p, task);
            let hit = (0..gold.len()).find(|&g| !used[g] && gold_keys[g] == k)?;
            used[hit] = true;
            Some(hit)
        })
        .collect()
}

pub fn score_f1(
    gold: &[Vec<SentimentTuple>],
    pred: &[Vec<SentimentTuple>],
    task: TaskSpec,
) -> Result<EvalReport> {
    if gold.len() != pred.len() {
        return Err(Error::Input(format!(
            "{} gold examples but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let mut counts = Counts::default();
    for (g, p) in gold.iter().zip(pred) {
        counts.add(Counts {
            gold: g.len(),
            predicted: p.len(),
            matched: match_example(g, p, task).iter().flatten().count(),
        });
    }
    Ok(EvalReport::from_counts(counts))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceBuckets {
    boundaries: Vec<usize>,
}

impl Default for DistanceBuckets {
    fn default() -> Self {
        Self {
            boundaries: vec![10, 16],
        }
    }
}

impl DistanceBuckets {
    pub fn new(boundaries: Vec<usize>) -> Result<Self> {
        if boundaries.is_empty()
            || boundaries[0] == 0
            || boundaries.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Input(format!(
                "bucket boundaries must be positive and strictly ascending, got {boundaries:?}"
            )));
        }
        Ok(Self { boundaries })
    }

    /// Parses a comma-separated boundary list such as `10,16`.
    pub fn parse(s: &str) -> Result<Self> {
        let b = s
            .split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Input(format!("bad bucket list {s:?}")))?;
        Self::new(b)
    }

    pub fn labels(&self) -> Vec<String> {
        let b = &self.boundaries;
        let mut labels = vec![format!("≤{}", b[0])];
        for w in b.windows(2) {
            labels.push(format!("{}–{}", w[0] + 1, w[1]));
        }
        labels.push(format!("≥{}", b[b.len() - 1] + 1));
        labels
    }

    pub fn index(&self, distance: usize) -> usize {
        self.boundaries
            .iter()
            .position(|&b| distance <= b)
            .unwrap_or(self.boundaries.len())
    }

    pub fn label(&self, distance: usize) -> String {
        self.labels().swap_remove(self.index(distance))
    }
}

/// Distance between aspect and opinion heads (last token of each span).
fn span_distance(t: &SentimentTuple) -> Option<usize> {
    let a = t.aspect_span?[1].checked_sub(1)?;
    let o = t.opinion_span?[1].checked_sub(1)?;
    Some(a.abs_diff(o))
}

pub fn distance_report(
    examples: &[LabeledExample],
    pred: &[Vec<SentimentTuple>],
    task: TaskSpec,
    buckets: &DistanceBuckets,
) -> Result<EvalReport> {
    if !task.has(crate::corpus::Element::Opinion) {
        return Err(Error::Input(format!(
            "distance report needs an opinion element, {task} has none"
        )));
    }
    if examples.len() != pred.len() {
        return Err(Error::Input(format!(
            "{} gold examples but {} predictions",
            examples.len(),
            pred.len()
        )));
    }
    let labels = buckets.labels();
    let mut per: Vec<Counts> = vec![Counts::default(); labels.len() + 1];
    let residual = labels.len();

    for (ex, p) in examples.iter().zip(pred) {
        let gold_bucket: Vec<usize> = ex
            .tuples
            .iter()
            .map(|t| {
                span_distance(t).map(|d| buckets.index(d)).ok_or_else(|| {
                    Error::Input(format!(
                        "example {}: gold tuple lacks aspect/opinion spans",
                        ex.id
                    ))
                })
            })
            .collect::<Result<_>>()?;
        for &b in &gold_bucket {
            per[b].gold += 1;
        }
        for (pt, hit) in p.iter().zip(match_example(&ex.tuples, p, task)) {
            let b = match hit {
                Some(g) => {
                    per[gold_bucket[g]].matched += 1;
                    gold_bucket[g]
                }
                None => span_distance(pt).map_or(residual, |d| buckets.index(d)),
            };
            per[b].predicted += 1;
        }
    }

    let mut total = Counts::default();
    per.iter().for_each(|c| total.add(*c));
    let mut report = EvalReport::from_counts(total);
    for (label, c) in labels.into_iter().zip(&per) {
        report.per_bucket.insert(label, EvalReport::from_counts(*c));
    }
    if per[residual].predicted > 0 {
        report.per_bucket.insert(
            RESIDUAL_BUCKET.to_string(),
            EvalReport::from_counts(per[residual]),
        );
    }
    Ok(report)
}
