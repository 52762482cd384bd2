//! Rule-based static reordering: breadth-first traversal of the dependency
//! tree where each node's children are visited in dependency-relation
//! priority order.

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};

use crate::corpus::DepSentence;
use crate::error::{read_file, Error, Result};
use crate::linalg::Matrix;

/// Relation used when a deprel is missing from the table.
pub const FALLBACK_RELATION: &str = "self";

/// Environment variable that overrides the shipped rule directory.
pub const RULES_DIR_ENV: &str = "SEQREG_RULES_DIR";

const SHIPPED: [(&str, &str); 3] = [
    ("rule1", include_str!("../rules/rule1.tsv")),
    ("rule2", include_str!("../rules/rule2.tsv")),
    ("rule3", include_str!("../rules/rule3.tsv")),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    name: String,
    ranks: HashMap<String, u32>,
}

impl RuleTable {
    /// Parses a `deprel<TAB>rank` table. Blank lines and `#` comments are ignored.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut ranks = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let format = |message: String| Error::Format {
                line: lineno + 1,
                message,
            };
            let (rel, rank) = line
                .split_once('\t')
                .ok_or_else(|| format(format!("expected `deprel<TAB>rank`, got {line:?}")))?;
            let rel = rel.trim().to_lowercase();
            let rank: i64 = rank
                .trim()
                .parse()
                .map_err(|_| format(format!("bad rank {rank:?}")))?;
            if rank <= 0 {
                return Err(format(format!(
                    "rank for {rel} must be positive, got {rank}"
                )));
            }
            if ranks.insert(rel.clone(), rank as u32).is_some() {
                return Err(format(format!("duplicate relation {rel}")));
            }
        }
        if !ranks.contains_key(FALLBACK_RELATION) {
            return Err(Error::Format {
                line: 0,
                message: format!("table lacks the {FALLBACK_RELATION:?} fallback row"),
            });
        }
        Ok(Self {
            name: name.into(),
            ranks,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        Self::parse(name, &read_file(path)?)
    }

    /// One of the three built-in tables (`rule1`, `rule2`, `rule3`).
    pub fn shipped(name: &str) -> Result<Self> {
        let (_, text) = SHIPPED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Input(format!("unknown rule table {name:?}")))?;
        Self::parse(name, text)
    }

    /// Resolves a table by name or path: an existing file path is loaded
    /// directly, otherwise `<name>.tsv` is looked up in `$SEQREG_RULES_DIR`
    /// when set, and finally among the built-in tables.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        let as_path = Path::new(name_or_path);
        if as_path.is_file() {
            return Self::load(as_path);
        }
        if let Some(dir) = std::env::var_os(RULES_DIR_ENV) {
            let candidate = PathBuf::from(dir).join(format!("{name_or_path}.tsv"));
            if candidate.is_file() {
                return Self::load(&candidate);
            }
        }
        Self::shipped(name_or_path)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn get(&self, deprel: &str) -> Option<u32> {
        self.ranks.get(deprel).copied()
    }

    /// Rank of `deprel`, falling back to the `self` row.
    pub fn rank(&self, deprel: &str) -> u32 {
        self.ranks
            .get(deprel)
            .or_else(|| self.ranks.get(&deprel.to_lowercase()))
            .copied()
            .unwrap_or(self.ranks[FALLBACK_RELATION])
    }
}

/// `order[k]` is the original index of the item placed at position `k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    order: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
        }
    }

    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &i in &order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Input(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `rank[i]` is the new position of original index `i`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (pos, &i) in self.order.iter().enumerate() {
            ranks[i] = pos;
        }
        ranks
    }

    pub fn inverse(&self) -> Self {
        Self {
            order: self.ranks(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &i)| k == i)
    }

    /// Space-separated order, as printed by the CLI.
    pub fn to_line(&self) -> String {
        self.order
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn static_order(s: &DepSentence, rules: &RuleTable) -> Permutation {
    let n = s.len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for t in s.tokens() {
        if let Some(h) = t.head {
            children[h].push(t.index);
        }
    }
    let rank_of = |i: usize| rules.rank(&s.tokens()[i].deprel);

    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::from([s.root()]);
    while let Some(node) = queue.pop_front() {
        order.push(node);
        let kids = &mut children[node];
        // children are collected in index order, so a stable sort keeps ties by index
        kids.sort_by_key(|&c| rank_of(c));
        queue.extend(kids.iter().copied());
    }
    debug_assert_eq!(order.len(), n);
    Permutation { order }
}

/// Row `k` of the result is row `p.order()[k]` of `m`.
pub fn apply_permutation(m: &Matrix, p: &Permutation) -> Result<Matrix> {
    if m.rows() != p.len() {
        return Err(Error::Dimension(format!(
            "permutation of length {} applied to {} rows",
            p.len(),
            m.rows()
        )));
    }
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for (k, &src) in p.order().iter().enumerate() {
        out.row_mut(k).copy_from_slice(m.row(src));
    }
    Ok(out)
}
