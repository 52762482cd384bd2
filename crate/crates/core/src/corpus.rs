//! Dependency-parsed sentences, labeled ABSA examples and their readers.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{read_file, Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: usize,
    pub surface: String,
    /// Parent index, `None` for the root.
    pub head: Option<usize>,
    pub deprel: String,
}

/// A dependency tree over word-level tokens, optionally carrying one
/// contextual representation row per token.
#[derive(Debug, Clone, PartialEq)]
pub struct DepSentence {
    id: String,
    tokens: Vec<Token>,
    root: usize,
    reprs: Option<Matrix>,
}

impl DepSentence {
    /// Builds a sentence from `(surface, head, deprel)` triples, validating
    /// that the head links form a single rooted tree.
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self> {
        let id = id.into();
        let structure = |message: String| Error::Structure {
            sentence: id.clone(),
            message,
        };
        let n = tokens.len();
        if n == 0 {
            return Err(structure("sentence has no tokens".into()));
        }
        let mut root = None;
        for (i, t) in tokens.iter().enumerate() {
            if t.index != i {
                return Err(structure(format!("token {i} carries index {}", t.index)));
            }
            if t.deprel.is_empty() {
                return Err(structure(format!("token {i} has an empty deprel")));
            }
            match t.head {
                None if root.is_some() => {
                    return Err(structure(format!(
                        "multiple roots (tokens {} and {i})",
                        root.unwrap_or(0)
                    )))
                }
                None => root = Some(i),
                Some(h) if h >= n => {
                    return Err(structure(format!("token {i} has head {h} out of range")))
                }
                Some(h) if h == i => return Err(structure(format!("token {i} heads itself"))),
                Some(_) => {}
            }
        }
        let root = root.ok_or_else(|| structure("no root token".into()))?;

        // Every token must reach the root in at most n steps.
        for start in 0..n {
            let mut cur = start;
            let mut steps = 0;
            while let Some(h) = tokens[cur].head {
                cur = h;
                steps += 1;
                if steps > n {
                    return Err(structure(format!("cycle through token {start}")));
                }
            }
        }

        Ok(Self {
            id,
            tokens,
            root,
            reprs: None,
        })
    }

    /// Convenience constructor from parallel lists; `heads` uses `None` for root.
    pub fn from_parts(
        id: impl Into<String>,
        surfaces: &[&str],
        heads: &[Option<usize>],
        deprels: &[&str],
    ) -> Result<Self> {
        let id = id.into();
        if surfaces.len() != heads.len() || heads.len() != deprels.len() {
            return Err(Error::Dimension(format!(
                "sentence {id}: {} surfaces, {} heads, {} deprels",
                surfaces.len(),
                heads.len(),
                deprels.len()
            )));
        }
        let tokens = surfaces
            .iter()
            .zip(heads)
            .zip(deprels)
            .enumerate()
            .map(|(index, ((s, h), d))| Token {
                index,
                surface: s.to_string(),
                head: *h,
                deprel: d.to_lowercase(),
            })
            .collect();
        Self::new(id, tokens)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn surfaces(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    /// Children of `node` in ascending index order.
    pub fn children(&self, node: usize) -> Vec<usize> {
        self.tokens
            .iter()
            .filter(|t| t.head == Some(node))
            .map(|t| t.index)
            .collect()
    }

    pub fn reprs(&self) -> Option<&Matrix> {
        self.reprs.as_ref()
    }

    /// Attaches representations; rows must match the token count and be finite.
    pub fn with_reprs(mut self, reprs: Matrix) -> Result<Self> {
        if reprs.rows() != self.len() {
            return Err(Error::Dimension(format!(
                "sentence {}: {} representation rows for {} tokens",
                self.id,
                reprs.rows(),
                self.len()
            )));
        }
        if !reprs.is_finite() {
            return Err(Error::Numeric(format!(
                "sentence {}: non-finite representation entry",
                self.id
            )));
        }
        self.reprs = Some(reprs);
        Ok(self)
    }

    /// Renders the retained columns (ID, FORM, HEAD, DEPREL) back to CoNLL-U.
    pub fn to_conllu(&self) -> String {
        let mut out = format!("# sent_id = {}\n", self.id);
        for t in &self.tokens {
            let head = t.head.map_or(0, |h| h + 1);
            out.push_str(&format!(
                "{}\t{}\t_\t_\t_\t_\t{}\t{}\t_\t_\n",
                t.index + 1,
                t.surface,
                head,
                t.deprel
            ));
        }
        out
    }
}

/// Parses CoNLL-U text. Multiword ranges (`1-2`) and empty nodes (`1.1`) are
/// skipped; sentence ids come from `# sent_id =` comments or, failing that,
/// the 1-based block ordinal.
pub fn parse_conllu(text: &str) -> Result<Vec<DepSentence>> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, Vec<&str>)> = Vec::new();
    let mut sent_id: Option<String> = None;

    let flush = |block: &mut Vec<(usize, Vec<&str>)>,
                 sent_id: &mut Option<String>,
                 sentences: &mut Vec<DepSentence>|
     -> Result<()> {
        if block.is_empty() {
            *sent_id = None;
            return Ok(());
        }
        let id = sent_id
            .take()
            .unwrap_or_else(|| (sentences.len() + 1).to_string());
        let mut tokens = Vec::with_capacity(block.len());
        for (pos, (line, cols)) in block.iter().enumerate() {
            let index: usize = cols[0].parse().map_err(|_| Error::Format {
                line: *line,
                message: format!("bad token id {:?}", cols[0]),
            })?;
            if index != pos + 1 {
                return Err(Error::Format {
                    line: *line,
                    message: format!("token id {index} out of sequence, expected {}", pos + 1),
                });
            }
            let head: usize = cols[6].parse().map_err(|_| Error::Format {
                line: *line,
                message: format!("bad head {:?}", cols[6]),
            })?;
            if cols[7].is_empty() || cols[7] == "_" {
                return Err(Error::Format {
                    line: *line,
                    message: "missing deprel".into(),
                });
            }
            tokens.push(Token {
                index: pos,
                surface: cols[1].to_string(),
                head: head.checked_sub(1),
                deprel: cols[7].to_lowercase(),
            });
        }
        block.clear();
        sentences.push(DepSentence::new(id, tokens)?);
        Ok(())
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut block, &mut sent_id, &mut sentences)?;
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("sent_id") {
                let v = v.trim_start().trim_start_matches('=').trim();
                sent_id = Some(v.to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(Error::Format {
                line: lineno + 1,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        block.push((lineno + 1, cols));
    }
    flush(&mut block, &mut sent_id, &mut sentences)?;
    Ok(sentences)
}

pub fn read_conllu(path: &Path) -> Result<Vec<DepSentence>> {
    parse_conllu(&read_file(path)?)
}

/// Directed parent → child adjacency over a dependency tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl AdjMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, parent: usize, child: usize) -> bool {
        self.bits[parent * self.n + child]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Out-neighbours of `i` (its children), ascending.
    pub fn children(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.get(i, j))
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| u8::from(self.get(i, j))).collect())
            .collect()
    }
}

pub fn adjacency(s: &DepSentence) -> AdjMatrix {
    let n = s.len();
    let mut bits = vec![false; n * n];
    for t in s.tokens() {
        if let Some(h) = t.head {
            bits[h * n + t.index] = true;
        }
    }
    AdjMatrix { n, bits }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Element {
    Category,
    Aspect,
    Opinion,
    Polarity,
}

impl Element {
    pub fn name(self) -> &'static str {
        match self {
            Element::Category => "category",
            Element::Aspect => "aspect",
            Element::Opinion => "opinion",
            Element::Polarity => "polarity",
        }
    }
}

/// The four ABSA task signatures and their element order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TaskSpec {
    Uabsa,
    Aste,
    Tasd,
    Acos,
}

impl TaskSpec {
    pub const ALL: [TaskSpec; 4] = [
        TaskSpec::Uabsa,
        TaskSpec::Aste,
        TaskSpec::Tasd,
        TaskSpec::Acos,
    ];

    pub fn elements(self) -> &'static [Element] {
        use Element::*;
        match self {
            TaskSpec::Uabsa => &[Aspect, Polarity],
            TaskSpec::Aste => &[Aspect, Opinion, Polarity],
            TaskSpec::Tasd => &[Category, Aspect, Polarity],
            TaskSpec::Acos => &[Category, Aspect, Opinion, Polarity],
        }
    }

    pub fn has(self, e: Element) -> bool {
        self.elements().contains(&e)
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskSpec::Uabsa => "uabsa",
            TaskSpec::Aste => "aste",
            TaskSpec::Tasd => "tasd",
            TaskSpec::Acos => "acos",
        }
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uabsa" => Ok(TaskSpec::Uabsa),
            "aste" => Ok(TaskSpec::Aste),
            "tasd" => Ok(TaskSpec::Tasd),
            "acos" => Ok(TaskSpec::Acos),
            other => Err(Error::Input(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Neutral,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Negative => "negative",
            Polarity::Neutral => "neutral",
        }
    }
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            "neutral" => Ok(Polarity::Neutral),
            other => Err(Error::Input(format!("unknown polarity {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentimentTuple {
    #[serde(default)]
    pub category: Option<String>,
    pub aspect: String,
    #[serde(default)]
    pub opinion: Option<String>,
    pub polarity: Polarity,
    /// Half-open token range `[start, end)`.
    #[serde(default)]
    pub aspect_span: Option<[usize; 2]>,
    #[serde(default)]
    pub opinion_span: Option<[usize; 2]>,
}

impl SentimentTuple {
    pub fn new(aspect: impl Into<String>, polarity: Polarity) -> Self {
        Self {
            category: None,
            aspect: aspect.into(),
            opinion: None,
            polarity,
            aspect_span: None,
            opinion_span: None,
        }
    }

    pub fn triplet(aspect: &str, opinion: &str, polarity: Polarity) -> Self {
        Self::new(aspect, polarity).with_opinion(opinion)
    }

    pub fn with_opinion(mut self, opinion: impl Into<String>) -> Self {
        self.opinion = Some(opinion.into());
        self
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn with_spans(mut self, aspect: [usize; 2], opinion: Option<[usize; 2]>) -> Self {
        self.aspect_span = Some(aspect);
        self.opinion_span = opinion;
        self
    }

    pub fn element(&self, e: Element) -> Option<&str> {
        match e {
            Element::Category => self.category.as_deref(),
            Element::Aspect => Some(self.aspect.as_str()),
            Element::Opinion => self.opinion.as_deref(),
            Element::Polarity => Some(self.polarity.as_str()),
        }
    }

    /// Checks that exactly the task's elements are present and non-empty.
    pub fn validate(&self, task: TaskSpec) -> std::result::Result<(), String> {
        for e in [Element::Category, Element::Aspect, Element::Opinion] {
            let value = self.element(e);
            match (task.has(e), value) {
                (true, None) => return Err(format!("missing {} for {task}", e.name())),
                (true, Some(v)) if v.trim().is_empty() => {
                    return Err(format!("empty {} for {task}", e.name()))
                }
                (false, Some(_)) => {
                    return Err(format!("{} is not an element of {task}", e.name()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub tuples: Vec<SentimentTuple>,
    #[serde(skip)]
    pub parse: Option<DepSentence>,
}

impl LabeledExample {
    fn validate(&self, task: TaskSpec, require_tuples: bool) -> Result<()> {
        let schema = |message: String| Error::Schema {
            id: self.id.clone(),
            message,
        };
        if require_tuples && self.tuples.is_empty() {
            return Err(schema("gold example has no tuples".into()));
        }
        for (k, t) in self.tuples.iter().enumerate() {
            t.validate(task)
                .map_err(|m| schema(format!("tuple {k}: {m}")))?;
            for (name, span) in [
                ("aspect_span", t.aspect_span),
                ("opinion_span", t.opinion_span),
            ] {
                if let Some([start, end]) = span {
                    if start >= end || end > self.tokens.len() {
                        return Err(schema(format!(
                            "tuple {k}: {name} [{start},{end}) outside {} tokens",
                            self.tokens.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn parse_example_lines(text: &str, task: TaskSpec, gold: bool) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let ex: LabeledExample = serde_json::from_str(line).map_err(|e| Error::Format {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        ex.validate(task, gold)?;
        out.push(ex);
    }
    Ok(out)
}

/// Parses gold examples (one JSON object per line); every example needs at
/// least one tuple.
pub fn parse_examples(text: &str, task: TaskSpec) -> Result<Vec<LabeledExample>> {
    parse_example_lines(text, task, true)
}

pub fn load_examples(path: &Path, task: TaskSpec) -> Result<Vec<LabeledExample>> {
    parse_examples(&read_file(path)?, task)
}

/// Like [`load_examples`] but empty tuple lists are allowed.
pub fn load_predictions(path: &Path, task: TaskSpec) -> Result<Vec<LabeledExample>> {
    parse_example_lines(&read_file(path)?, task, false)
}

/// Attaches parses to examples by id. Every example must find a parse whose
/// token surfaces match its token list.
pub fn attach_parses(examples: &mut [LabeledExample], parses: Vec<DepSentence>) -> Result<()> {
    let mut by_id: HashMap<String, DepSentence> = parses
        .into_iter()
        .map(|s| (s.id().to_string(), s))
        .collect();
    for ex in examples.iter_mut() {
        let parse = by_id.remove(&ex.id).ok_or_else(|| Error::Schema {
            id: ex.id.clone(),
            message: "no parse with this sent_id".into(),
        })?;
        if parse.surfaces() != ex.tokens.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::Schema {
                id: ex.id.clone(),
                message: "parse tokens differ from example tokens".into(),
            });
        }
        ex.parse = Some(parse);
    }
    Ok(())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Deterministic stand-in for encoder outputs.
///
/// Entry `(i, j)` hashes, with 64-bit FNV-1a, the bytes
/// `seed (i64 LE) ∥ token_i (UTF-8) ∥ j (u64 LE)`. The hash is read as a
/// signed integer and scaled by 2⁻⁶³; the low 11 bits are dropped first
/// (arithmetic shift) so the quotient is exact in `f64` and stays in `[-1, 1)`.
pub fn hash_reprs(tokens: &[&str], dim: usize, seed: i64) -> Matrix {
    let mut m = Matrix::zeros(tokens.len(), dim);
    for (i, tok) in tokens.iter().enumerate() {
        let prefix = fnv1a(
            seed.to_le_bytes().into_iter().chain(tok.bytes()),
            FNV_OFFSET,
        );
        for j in 0..dim {
            let h = fnv1a((j as u64).to_le_bytes(), prefix);
            m[(i, j)] = ((h as i64) >> 11) as f64 / (1u64 << 52) as f64;
        }
    }
    m
}

/// Reads one or more representation matrices. Each block is a header line
/// `n dim` followed by `n` rows of `dim` whitespace-separated floats; blank
/// lines are ignored.
pub fn parse_repr_matrices(text: &str) -> Result<Vec<Matrix>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let mut out = Vec::new();
    while let Some((hl, header)) = lines.next() {
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format {
                line: hl + 1,
                message: format!("bad header {header:?}"),
            })?;
        let [n, dim] = dims[..] else {
            return Err(Error::Format {
                line: hl + 1,
                message: "header must be `n dim`".into(),
            });
        };
        let mut data = Vec::with_capacity(n * dim);
        for r in 0..n {
            let (ln, line) = lines.next().ok_or_else(|| {
                Error::Dimension(format!(
                    "header on line {} says {n} rows, found {r}",
                    hl + 1
                ))
            })?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Format {
                    line: ln + 1,
                    message: "bad float".into(),
                })?;
            if row.len() != dim {
                return Err(Error::Format {
                    line: ln + 1,
                    message: format!("expected {dim} values, found {}", row.len()),
                });
            }
            data.extend(row);
        }
        let m = Matrix::from_vec(n, dim, data)?;
        if !m.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite representation entry in block at line {}",
                hl + 1
            )));
        }
        out.push(m);
    }
    Ok(out)
}

/// Reads a file holding exactly one representation matrix.
pub fn parse_repr_matrix(text: &str) -> Result<Matrix> {
    let mut blocks = parse_repr_matrices(text)?;
    match blocks.len() {
        1 => Ok(blocks.remove(0)),
        0 => Err(Error::Format {
            line: 1,
            message: "empty representation file".into(),
        }),
        k => Err(Error::Format {
            line: 1,
            message: format!("expected one matrix, found {k}"),
        }),
    }
}

pub fn read_repr_matrices(path: &Path) -> Result<Vec<Matrix>> {
    parse_repr_matrices(&read_file(path)?)
}
