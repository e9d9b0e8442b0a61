//! Multinomial mixture clustering of bag-of-words corpora.
//!
//! - [`corpus`]: parsing, pruning and persistence of sparse count data.
//! - [`mixture`]: floor-constrained mixture models, likelihoods, MAP labels, KL.
//! - [`em`]: EM with exact constrained M-steps, multi-start and annihilation.
//! - [`selection`]: penalty shapes, slope heuristics and model selection.
//! - [`synth`]: planted mixtures, brute-force oracles and risk evaluation.

// `!(x > 0.0)` is used on purpose so NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod em;
pub mod mixture;
pub mod selection;
pub mod synth;

pub use corpus::{Corpus, Document, Vocabulary};
pub use em::{robust_em, EmConfig, FitResult, Floor};
pub use mixture::{Assignment, MixtureModel};
pub use selection::{SelectionReport, SweepResult};
