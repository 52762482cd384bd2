//! Sequence regulation for generative aspect-based sentiment analysis.
//!
//! The crate reorders a sentence's contextual representations before they
//! reach a decoder, either statically (breadth-first over the dependency tree
//! with relation priorities) or dynamically (graph attention encoder plus a
//! learned position score). Around that sit the cloze prompt and target
//! codec, relative-position bucket diagnostics and a tuple-level evaluator.

pub mod bucketizer;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod linalg;
pub mod promptgen;
pub mod regulator;
pub mod rng;
pub mod static_reorder;
pub mod synth;

pub use error::{Error, Result};
pub use linalg::Matrix;
