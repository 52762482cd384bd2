//! Deterministic synthetic ASTE corpus with long-distance aspect/opinion pairs.
//!
//! Each sentence reads `det ASPECT (prep det noun){k} was [adv] OPINION .`
//! with the aspect as subject of the copula and the opinion as its adjectival
//! complement, so the gold pair sits `3k + 2` or more tokens apart.

use crate::corpus::{DepSentence, LabeledExample, Polarity, SentimentTuple, Token};
use crate::rng::SplitMix64;

const ASPECTS: [&str; 8] = [
    "pizza", "staff", "service", "pasta", "waiter", "menu", "sushi", "decor",
];
const OPINIONS: [(&str, Polarity); 8] = [
    ("good", Polarity::Positive),
    ("great", Polarity::Positive),
    ("tasty", Polarity::Positive),
    ("friendly", Polarity::Positive),
    ("rude", Polarity::Negative),
    ("slow", Polarity::Negative),
    ("bland", Polarity::Negative),
    ("average", Polarity::Neutral),
];
const PREPS: [&str; 6] = ["with", "from", "near", "at", "in", "of"];
const NOUNS: [&str; 10] = [
    "cheese", "table", "corner", "place", "night", "friends", "city", "window", "street", "kitchen",
];
const DETS: [&str; 4] = ["the", "a", "our", "that"];
const ADVERBS: [&str; 4] = ["really", "very", "quite", "truly"];

/// Seed used for the shipped corpus files.
pub const SHIPPED_SEED: u64 = 2024;
pub const SHIPPED_SIZE: usize = 50;

/// Builds `size` examples with attached (representation-free) parses.
pub fn long_distance_corpus(size: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = SplitMix64::new(seed);
    let pick = |xs: &[&'static str], rng: &mut SplitMix64| xs[rng.below(xs.len())];
    (0..size)
        .map(|idx| {
            let id = format!("syn-{idx:03}");
            let mut toks: Vec<(&str, Option<usize>, &str)> = Vec::new();
            toks.push((pick(&DETS, &mut rng), Some(1), "det"));
            let aspect = ASPECTS[rng.below(ASPECTS.len())];
            // head filled in once the copula position is known
            toks.push((aspect, None, "nsubj"));
            let phrases = 4 + rng.below(3);
            let mut last_noun = 1;
            for _ in 0..phrases {
                let prep = toks.len();
                toks.push((pick(&PREPS, &mut rng), Some(last_noun), "prep"));
                toks.push((pick(&DETS, &mut rng), Some(prep + 2), "det"));
                toks.push((pick(&NOUNS, &mut rng), Some(prep), "pobj"));
                last_noun = prep + 2;
            }
            let root = toks.len();
            toks[1].1 = Some(root);
            toks.push(("was", None, "root"));
            let has_adv = rng.bernoulli(0.5);
            let opinion_pos = root + 1 + usize::from(has_adv);
            if has_adv {
                toks.push((pick(&ADVERBS, &mut rng), Some(opinion_pos), "advmod"));
            }
            let (opinion, polarity) = OPINIONS[rng.below(OPINIONS.len())];
            toks.push((opinion, Some(root), "acomp"));
            toks.push((".", Some(root), "punct"));

            let tokens: Vec<Token> = toks
                .iter()
                .enumerate()
                .map(|(index, (s, h, d))| Token {
                    index,
                    surface: s.to_string(),
                    head: *h,
                    deprel: d.to_string(),
                })
                .collect();
            let parse = DepSentence::new(id.clone(), tokens).expect("generator builds trees");
            let surfaces: Vec<String> = toks.iter().map(|t| t.0.to_string()).collect();
            LabeledExample {
                text: surfaces.join(" "),
                tokens: surfaces,
                tuples: vec![SentimentTuple::triplet(aspect, opinion, polarity)
                    .with_spans([1, 2], Some([opinion_pos, opinion_pos + 1]))],
                parse: Some(parse),
                id,
            }
        })
        .collect()
}

/// JSONL and CoNLL-U renderings of a corpus, in that order.
pub fn render(corpus: &[LabeledExample]) -> (String, String) {
    let mut jsonl = String::new();
    let mut conllu = String::new();
    for ex in corpus {
        jsonl.push_str(&serde_json::to_string(ex).expect("examples serialize"));
        jsonl.push('\n');
        if let Some(p) = &ex.parse {
            conllu.push_str(&p.to_conllu());
            conllu.push('\n');
        }
    }
    (jsonl, conllu)
}
