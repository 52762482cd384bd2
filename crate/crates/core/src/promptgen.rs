//! Cloze-style prompts and the sentinel-delimited target codec.
//!
//! A target lists each tuple as `<S₁> e₁ <S₂> e₂ …` in task element order,
//! with one extra sentinel between consecutive tuples:
//!
//! ```text
//! <X> staff <Y> helpful <Z> positive <W> <X> staff <Y> attentive <Z> positive
//! ```

use std::collections::HashSet;

use serde::Serialize;

use crate::corpus::{Element, Polarity, SentimentTuple, TaskSpec};
use crate::error::{Error, Result};

const SENTINEL_LETTERS: &str = "XYZWVUTSRQPONMLKJIHGFEDCBA";

/// Element sentinels for a task plus the tuple separator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentinelSet {
    elements: Vec<String>,
    separator: String,
}

impl SentinelSet {
    /// Default sentinel sequence `<X>, <Y>, <Z>, <W>, <V>, …`; the separator
    /// is the first one not used by an element.
    pub fn for_task(task: TaskSpec) -> Self {
        let mut seq = SENTINEL_LETTERS.chars().map(|c| format!("<{c}>"));
        let elements = task
            .elements()
            .iter()
            .map(|_| seq.next().expect("enough sentinels"))
            .collect();
        let separator = seq.next().expect("enough sentinels");
        Self {
            elements,
            separator,
        }
    }

    pub fn elements(&self) -> &[String] {
        &self.elements
    }

    pub fn separator(&self) -> &str {
        &self.separator
    }

    fn all(&self) -> impl Iterator<Item = &str> {
        self.elements
            .iter()
            .map(String::as_str)
            .chain(std::iter::once(self.separator.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptBundle {
    pub semantic: String,
    pub fewshot: String,
}

impl PromptBundle {
    /// `semantic ␣ fewshot ␣ text`.
    pub fn assembled(&self, text: &str) -> String {
        format!("{} {} {}", self.semantic, self.fewshot, text)
    }
}

fn element_word(e: Element) -> &'static str {
    match e {
        Element::Category => "category",
        Element::Aspect => "aspect",
        Element::Opinion => "opinion",
        Element::Polarity => "sentiment",
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// The single fixed demonstration shared by every task.
fn demonstration(task: TaskSpec) -> SentimentTuple {
    let mut t = SentimentTuple::new("sushi", Polarity::Positive);
    if task.has(Element::Opinion) {
        t = t.with_opinion("good");
    }
    if task.has(Element::Category) {
        t = t.with_category("FOOD#QUALITY");
    }
    t
}

pub fn build_prompt(task: TaskSpec) -> PromptBundle {
    let sentinels = SentinelSet::for_task(task);
    let clauses: Vec<String> = task
        .elements()
        .iter()
        .zip(sentinels.elements())
        .map(|(e, s)| format!("{} mean {s}", element_word(*e)))
        .collect();
    let semantic = format!("{}.", capitalize(&clauses.join(", ")));
    let target = serialize_target(&[demonstration(task)], task)
        .expect("demonstration tuple conforms to its task");
    PromptBundle {
        semantic,
        fewshot: format!("Input : sushi is good . Target : {target}."),
    }
}

pub fn serialize_target(tuples: &[SentimentTuple], task: TaskSpec) -> Result<String> {
    let sentinels = SentinelSet::for_task(task);
    let mut rendered = Vec::with_capacity(tuples.len());
    for (k, t) in tuples.iter().enumerate() {
        let schema = |message: String| Error::Schema {
            id: format!("tuple {k}"),
            message,
        };
        t.validate(task).map_err(schema)?;
        let mut parts = Vec::with_capacity(2 * task.elements().len());
        for (e, s) in task.elements().iter().zip(sentinels.elements()) {
            let value = t.element(*e).unwrap_or_default();
            if let Some(hit) = sentinels.all().find(|s| value.contains(s)) {
                return Err(schema(format!(
                    "{} {value:?} contains sentinel {hit}",
                    e.name()
                )));
            }
            parts.push(s.as_str());
            parts.push(value);
        }
        rendered.push(parts.join(" "));
    }
    Ok(rendered.join(&format!(" {} ", sentinels.separator())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParsedTarget {
    pub tuples: Vec<SentimentTuple>,
    pub dropped: usize,
}

/// Splits `chunk` at every element sentinel, returning `(sentinel index, text)`
/// pairs and any non-blank text preceding the first sentinel.
fn segments<'a>(chunk: &'a str, sentinels: &[String]) -> (&'a str, Vec<(usize, &'a str)>) {
    let mut hits: Vec<(usize, usize)> = Vec::new();
    for (k, s) in sentinels.iter().enumerate() {
        hits.extend(chunk.match_indices(s.as_str()).map(|(pos, _)| (pos, k)));
    }
    hits.sort_unstable();
    let lead = hits.first().map_or(chunk, |&(pos, _)| &chunk[..pos]);
    let mut out = Vec::with_capacity(hits.len());
    for (i, &(pos, k)) in hits.iter().enumerate() {
        let start = pos + sentinels[k].len();
        let end = hits.get(i + 1).map_or(chunk.len(), |&(p, _)| p);
        out.push((k, chunk[start..end].trim()));
    }
    (lead, out)
}

fn parse_tuple(chunk: &str, task: TaskSpec, sentinels: &SentinelSet) -> Option<SentimentTuple> {
    let (lead, segs) = segments(chunk, sentinels.elements());
    let elements = task.elements();
    if !lead.trim().is_empty() || segs.len() != elements.len() {
        return None;
    }
    let mut t = SentimentTuple::new("", Polarity::Neutral);
    for (pos, ((k, text), e)) in segs.into_iter().zip(elements).enumerate() {
        if k != pos || text.is_empty() {
            return None;
        }
        match e {
            Element::Category => t.category = Some(text.to_string()),
            Element::Aspect => t.aspect = text.to_string(),
            Element::Opinion => t.opinion = Some(text.to_string()),
            Element::Polarity => t.polarity = text.trim_end_matches('.').parse().ok()?,
        }
    }
    Some(t)
}

/// Never fails: malformed tuples are dropped and counted, duplicates are
/// removed keeping the first occurrence. A trailing separator is accepted.
pub fn parse_target(text: &str, task: TaskSpec) -> ParsedTarget {
    let sentinels = SentinelSet::for_task(task);
    let mut tuples = Vec::new();
    let mut seen = HashSet::new();
    let mut dropped = 0;
    for chunk in text.split(sentinels.separator()) {
        if chunk.trim().is_empty() {
            continue;
        }
        match parse_tuple(chunk, task, &sentinels) {
            Some(t) => {
                if seen.insert(t.clone()) {
                    tuples.push(t);
                }
            }
            None => dropped += 1,
        }
    }
    ParsedTarget { tuples, dropped }
}
