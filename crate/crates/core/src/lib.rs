//! Pairwise neural ranking for machine translation evaluation.
//!
//! Given a reference translation and two candidate hypotheses, the models in
//! this crate decide which hypothesis is better. The pipeline is:
//!
//! 1. [`data`] loads judgment tuples `(t1, t2, r, y)` from JSON lines.
//! 2. [`features`] decomposes BLEU into its sufficient statistics for each
//!    `(hypothesis, reference)` pair, and [`embeddings`] composes sentence
//!    vectors from a word-vector table.
//! 3. [`model`] scores a tuple with a network of three interaction blocks,
//!    `(t1, t2)`, `(t1, r)` and `(t2, r)`, or with a flat logistic layer.
//! 4. [`training`] fits the parameters under the logistic cost, the Kendall
//!    cost, or a logistic-then-Kendall schedule.
//! 5. [`eval`] counts concordant, discordant and tied decisions and reports
//!    Kendall's tau with ties penalized.
//!
//! ```
//! use mtrank::features::{bleu_components, bleu_score, Smoothing};
//! use mtrank::tokenize;
//!
//! let reference = tokenize("The cat sat on the mat");
//! let hyp = tokenize("the cat sat on the mat");
//! let c = bleu_components(&hyp, &reference);
//! assert_eq!(bleu_score(&c, Smoothing::None), 1.0);
//! ```
//!
//! The guide under `book/` walks through each stage in more detail; its code
//! listings are compiled and run as doc-tests of this crate.

pub mod data;
pub mod embeddings;
pub mod eval;
pub mod features;
pub mod model;
pub mod synthetic;
pub mod training;

mod linalg;

pub use data::{load_dataset, vectorize, Dataset, EvaluationTuple, Example, Label};
pub use embeddings::{compose_sentence_vector, load_embedding_table, EmbeddingTable, SentenceVector};
pub use eval::{evaluate, kendall_tau, EvalReport, PairCounts};
pub use features::{assemble_pairwise, bleu_components, bleu_score, ngram_stats, BleuComponents};
pub use model::{decide, Architecture, Model, ModelConfig, ModelInput, Preference, PredictionDelta};
pub use training::{train, CostConfig, CostKind, TrainConfig, TrainReport};

/// Lowercases `text` and splits it on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase().split_whitespace().map(str::to_owned).collect()
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/bleu-components.md")]
    mod bleu_components {}
    #[doc = include_str!("../../../book/src/sentence-vectors.md")]
    mod sentence_vectors {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/costs.md")]
    mod costs {}
    #[doc = include_str!("../../../book/src/kendall-tau.md")]
    mod kendall_tau {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("  The\tCat  SAT\n"), vec!["the", "cat", "sat"]);
        assert!(tokenize("   ").is_empty());
    }
}
