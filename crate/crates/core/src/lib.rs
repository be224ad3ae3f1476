//! Multi-perspective summarization of customer-support dialogs.
//!
//! The crate covers the whole evaluation pipeline around a perspective
//! summarizer:
//!
//! * [`corpus`]: canonical dialog JSONL, tweet-thread reconstruction, gold
//!   selection and deterministic splits.
//! * [`weaklabel`]: the Lead / Long heuristics and weak (source, target)
//!   pairs for external trainers.
//! * [`summarize`]: heuristic baselines, indirect-speech post-processing,
//!   full-summary concatenation and prediction files.
//! * [`rouge`]: ROUGE-1/2/L and run aggregation.
//! * [`experiment`]: nested few-shot subsets, the scoring runner and report
//!   emission.
//!
//! All randomness flows through [`SeededRng`] (ChaCha8), so every seeded
//! operation yields the same output on every platform.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod rouge;
pub mod summarize;
pub mod weaklabel;

pub use corpus::{Corpus, Dialog, GoldSummary, SpeakerRole, Split, Utterance};
pub use error::{Error, Result};
pub use rouge::{RougeScore, ScoreTriple, TokenizerConfig};
pub use summarize::{CandidateSummary, MethodId, Perspective, PredictionSet};
pub use weaklabel::{HeuristicKind, WeakPair};

use rand::SeedableRng;

/// The generator behind every seeded operation: ChaCha with 8 rounds,
/// seeded from a `u64` through `SeedableRng::seed_from_u64`.
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}
