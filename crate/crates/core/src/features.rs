//! Decomposed BLEU statistics and pairwise feature assembly.
//!
//! Instead of feeding the learner a single BLEU score, each
//! `(hypothesis, reference)` pair is described by the quantities BLEU is
//! computed from: clipped n-gram matches, hypothesis n-gram totals and the
//! precisions they imply for n = 1..4, the two lengths, their ratio and the
//! brevity penalty. These 16 values form the lexical part of the pairwise
//! feature vector; externally computed metric scores and embedding
//! similarities may be appended after them.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_ORDER: usize = 4;

/// Number of scalars in a flattened [`BleuComponents`].
pub const BLEU_COMPONENT_COUNT: usize = 16;

/// Names of the flattened [`BleuComponents`] fields, in order.
pub const BLEU_COMPONENT_NAMES: [&str; BLEU_COMPONENT_COUNT] = [
    "precision_1",
    "precision_2",
    "precision_3",
    "precision_4",
    "matches_1",
    "matches_2",
    "matches_3",
    "matches_4",
    "total_1",
    "total_2",
    "total_3",
    "total_4",
    "hyp_len",
    "ref_len",
    "length_ratio",
    "brevity_penalty",
];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("feature {name:?} has non-finite value {value}")]
    NonFiniteFeature { name: String, value: f64 },
}

/// Clipped n-gram counts for a single order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NGramStats {
    pub order: usize,
    pub matches: usize,
    pub total: usize,
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], order: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= order {
        for window in tokens.windows(order) {
            let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Counts the hypothesis n-grams of `order` and how many of them match the
/// reference, each distinct n-gram clipped at its reference frequency.
///
/// # Panics
///
/// If `order` is not in `1..=4`.
pub fn ngram_stats<S: AsRef<str>>(hyp: &[S], reference: &[S], order: usize) -> NGramStats {
    assert!((1..=MAX_ORDER).contains(&order), "n-gram order {order} outside 1..=4");
    let hyp_counts = ngram_counts(hyp, order);
    let ref_counts = ngram_counts(reference, order);
    let matches = hyp_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    NGramStats { order, matches, total: (hyp.len() + 1).saturating_sub(order) }
}

/// BLEU's multiplicative length penalty. An empty hypothesis gets 0.
pub fn brevity_penalty(hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// The sufficient statistics of single-reference sentence BLEU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuComponents {
    pub precisions: [f64; MAX_ORDER],
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
    pub length_ratio: f64,
    pub brevity_penalty: f64,
}

impl BleuComponents {
    /// Flattens into the order given by [`BLEU_COMPONENT_NAMES`].
    pub fn flatten(&self) -> [f64; BLEU_COMPONENT_COUNT] {
        let mut out = [0.0; BLEU_COMPONENT_COUNT];
        out[0..4].copy_from_slice(&self.precisions);
        for n in 0..MAX_ORDER {
            out[4 + n] = self.matches[n] as f64;
            out[8 + n] = self.totals[n] as f64;
        }
        out[12] = self.hyp_len as f64;
        out[13] = self.ref_len as f64;
        out[14] = self.length_ratio;
        out[15] = self.brevity_penalty;
        out
    }
}

pub fn bleu_components<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> BleuComponents {
    let mut precisions = [0.0; MAX_ORDER];
    let mut matches = [0; MAX_ORDER];
    let mut totals = [0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        let stats = ngram_stats(hyp, reference, n + 1);
        matches[n] = stats.matches;
        totals[n] = stats.total;
        if stats.total > 0 {
            precisions[n] = stats.matches as f64 / stats.total as f64;
        }
    }
    let (hyp_len, ref_len) = (hyp.len(), reference.len());
    BleuComponents {
        precisions,
        matches,
        totals,
        hyp_len,
        ref_len,
        length_ratio: if ref_len == 0 { 0.0 } else { hyp_len as f64 / ref_len as f64 },
        brevity_penalty: brevity_penalty(hyp_len, ref_len),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    #[default]
    None,
    /// Zero-match orders count as `1 / (total + 1)`.
    AddOneOnZero,
}

/// Sentence BLEU from its components.
///
/// Orders without any hypothesis n-grams are left out of the geometric mean,
/// which is taken over the remaining orders with uniform weights.
pub fn bleu_score(c: &BleuComponents, smoothing: Smoothing) -> f64 {
    let mut log_sum = 0.0;
    let mut used = 0usize;
    for n in 0..MAX_ORDER {
        let total = c.totals[n];
        if total == 0 {
            continue;
        }
        let p = match (c.matches[n], smoothing) {
            (0, Smoothing::None) => return 0.0,
            (0, Smoothing::AddOneOnZero) => 1.0 / (total as f64 + 1.0),
            (m, _) => m as f64 / total as f64,
        };
        log_sum += p.ln();
        used += 1;
    }
    if used == 0 {
        return 0.0;
    }
    c.brevity_penalty * (log_sum / used as f64).exp()
}

/// Where a pairwise feature came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    Bleucomp,
    Bleu,
    External,
    EmbeddingSimilarity,
}

/// The feature vector describing one `(hypothesis, reference)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseFeatures {
    pub values: Vec<f64>,
    pub names: Vec<String>,
    pub sources: Vec<FeatureSource>,
}

impl PairwiseFeatures {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, name: &str, value: f64, source: FeatureSource) -> Result<(), FeatureError> {
        if !value.is_finite() {
            return Err(FeatureError::NonFiniteFeature { name: name.to_owned(), value });
        }
        self.values.push(value);
        self.names.push(name.to_owned());
        self.sources.push(source);
        Ok(())
    }
}

/// Which lexical block leads the pairwise feature vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LexicalFeatures {
    /// All 16 BLEU components.
    #[default]
    Components,
    /// Only the scalar BLEU score (unsmoothed).
    Score,
}

/// Builds the pairwise feature vector: BLEU components first, then external
/// scores and embedding similarities, each group sorted by name.
pub fn assemble_pairwise(
    bleu: &BleuComponents,
    external_scores: &BTreeMap<String, f64>,
    embedding_sims: &BTreeMap<String, f64>,
) -> Result<PairwiseFeatures, FeatureError> {
    assemble_with(bleu, LexicalFeatures::Components, external_scores, embedding_sims)
}

pub fn assemble_with(
    bleu: &BleuComponents,
    lexical: LexicalFeatures,
    external_scores: &BTreeMap<String, f64>,
    embedding_sims: &BTreeMap<String, f64>,
) -> Result<PairwiseFeatures, FeatureError> {
    let capacity = BLEU_COMPONENT_COUNT + external_scores.len() + embedding_sims.len();
    let mut f = PairwiseFeatures {
        values: Vec::with_capacity(capacity),
        names: Vec::with_capacity(capacity),
        sources: Vec::with_capacity(capacity),
    };
    match lexical {
        LexicalFeatures::Components => {
            for (name, value) in BLEU_COMPONENT_NAMES.iter().zip(bleu.flatten()) {
                f.push(name, value, FeatureSource::Bleucomp)?;
            }
        }
        LexicalFeatures::Score => f.push("bleu", bleu_score(bleu, Smoothing::None), FeatureSource::Bleu)?,
    }
    for (name, &value) in external_scores {
        f.push(name, value, FeatureSource::External)?;
    }
    for (name, &value) in embedding_sims {
        f.push(name, value, FeatureSource::EmbeddingSimilarity)?;
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    // Clipped matches by explicit enumeration: for every hypothesis position,
    // count how often its n-gram occurs in hyp and ref, and credit each
    // occurrence with min(ref, hyp) / hyp.
    fn brute_matches(hyp: &[String], reference: &[String], n: usize) -> (usize, usize) {
        if hyp.len() < n {
            return (0, 0);
        }
        let occurrences = |seq: &[String], gram: &[String]| {
            if seq.len() < n {
                return 0;
            }
            (0..=seq.len() - n).filter(|&j| &seq[j..j + n] == gram).count()
        };
        let total = hyp.len() - n + 1;
        let mut seen: Vec<&[String]> = Vec::new();
        let mut matches = 0;
        for i in 0..total {
            let gram = &hyp[i..i + n];
            if seen.contains(&gram) {
                continue;
            }
            seen.push(gram);
            matches += occurrences(hyp, gram).min(occurrences(reference, gram));
        }
        (matches, total)
    }

    #[test]
    fn ngram_examples() {
        let s = toks("the cat sat");
        assert_eq!(ngram_stats(&s, &s, 1), NGramStats { order: 1, matches: 3, total: 3 });
        let h = toks("the the the the");
        assert_eq!(ngram_stats(&h, &toks("the cat"), 1), NGramStats { order: 1, matches: 1, total: 4 });
        assert_eq!(brute_matches(&h, &toks("the cat"), 1), (1, 4));
        assert_eq!(
            ngram_stats(&toks("a b"), &toks("c d"), 2),
            NGramStats { order: 2, matches: 0, total: 1 }
        );
        let empty: Vec<String> = vec![];
        assert_eq!(ngram_stats(&empty, &empty, 3), NGramStats { order: 3, matches: 0, total: 0 });
    }

    #[test]
    #[should_panic]
    fn ngram_order_out_of_range() {
        ngram_stats(&toks("a"), &toks("a"), 5);
    }

    #[test]
    fn components_identity_three_tokens() {
        let s = toks("the cat sat");
        let c = bleu_components(&s, &s);
        assert_eq!(c.precisions, [1.0, 1.0, 1.0, 0.0]);
        assert_eq!(c.matches, [3, 2, 1, 0]);
        assert_eq!(c.totals, [3, 2, 1, 0]);
        assert_eq!((c.hyp_len, c.ref_len), (3, 3));
        assert_eq!(c.length_ratio, 1.0);
        assert_eq!(c.brevity_penalty, 1.0);
    }

    #[test]
    fn components_short_hypothesis() {
        let c = bleu_components(&toks("the cat"), &toks("the cat sat"));
        assert_eq!(c.precisions[0], 1.0);
        assert_eq!(c.precisions[1], 1.0);
        // exp(-0.5) to 20 digits: 0.60653065971263342360
        assert!((c.brevity_penalty - 0.606_530_659_712_633_4).abs() < 1e-15);
        assert!((c.length_ratio - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn components_empty_hypothesis() {
        let empty: Vec<String> = vec![];
        let c = bleu_components(&empty, &toks("a"));
        assert_eq!(c.totals, [0; 4]);
        assert_eq!(c.precisions, [0.0; 4]);
        assert_eq!(c.brevity_penalty, 0.0);
        assert_eq!(c.length_ratio, 0.0);

        let c = bleu_components(&toks("a"), &empty);
        assert_eq!(c.length_ratio, 0.0);
        assert_eq!(c.brevity_penalty, 1.0);
    }

    #[test]
    fn score_examples() {
        let s = toks("the quick brown fox jumps");
        assert_eq!(bleu_score(&bleu_components(&s, &s), Smoothing::None), 1.0);

        // unigrams and bigrams match, but no 4-gram does
        let c = bleu_components(&toks("a b c d x"), &toks("a b x c d"));
        assert!(c.totals[3] > 0 && c.matches[3] == 0);
        assert_eq!(bleu_score(&c, Smoothing::None), 0.0);
        assert!(bleu_score(&c, Smoothing::AddOneOnZero) > 0.0);

        let c = bleu_components(&toks("the cat"), &toks("the cat sat"));
        let expected = (-0.5f64).exp();
        assert!((bleu_score(&c, Smoothing::AddOneOnZero) - expected).abs() < 1e-15);
        assert!((bleu_score(&c, Smoothing::None) - expected).abs() < 1e-15);

        let empty: Vec<String> = vec![];
        assert_eq!(bleu_score(&bleu_components(&empty, &toks("a")), Smoothing::AddOneOnZero), 0.0);
    }

    #[test]
    fn add_one_smoothing_value() {
        // totals (5,4,3,2); matches (3,1,0,0)
        let c = bleu_components(&toks("a b c d e"), &toks("a b z c"));
        assert_eq!(c.matches, [3, 1, 0, 0]);
        let expected = (0.25 * ((3.0f64 / 5.0).ln() + (1.0f64 / 4.0).ln() + (1.0f64 / 4.0).ln() + (1.0f64 / 3.0).ln())).exp();
        assert!((bleu_score(&c, Smoothing::AddOneOnZero) - expected).abs() < 1e-15);
    }

    #[test]
    fn assembly_ordering() {
        let c = bleu_components(&toks("a b c"), &toks("a b d"));
        let none = BTreeMap::new();
        let f = assemble_pairwise(&c, &none, &none).unwrap();
        assert_eq!(f.len(), 16);
        assert_eq!(f.names, BLEU_COMPONENT_NAMES);

        let mut ext = BTreeMap::new();
        ext.insert("TER".to_owned(), 0.3);
        ext.insert("METEOR".to_owned(), 0.41);
        let mut sims = BTreeMap::new();
        sims.insert("cosine".to_owned(), 0.9);
        let f = assemble_pairwise(&c, &ext, &sims).unwrap();
        assert_eq!(&f.names[16..], ["METEOR", "TER", "cosine"]);
        assert_eq!(&f.values[16..], [0.41, 0.3, 0.9]);
        assert_eq!(f.sources[16], FeatureSource::External);
        assert_eq!(f.sources[18], FeatureSource::EmbeddingSimilarity);
        assert_eq!(f, assemble_pairwise(&c, &ext, &sims).unwrap());

        let mut only = BTreeMap::new();
        only.insert("METEOR".to_owned(), 0.41);
        let f = assemble_pairwise(&c, &only, &none).unwrap();
        assert_eq!(f.len(), 17);
        assert_eq!(f.names.last().unwrap(), "METEOR");
    }

    #[test]
    fn assembly_of_empty_components_is_zero() {
        let empty: Vec<String> = vec![];
        let c = bleu_components(&empty, &empty);
        let f = assemble_pairwise(&c, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(f.values, vec![0.0; 16]);
    }

    #[test]
    fn assembly_rejects_non_finite() {
        let c = bleu_components(&toks("a"), &toks("a"));
        let mut ext = BTreeMap::new();
        ext.insert("METEOR".to_owned(), f64::NAN);
        let err = assemble_pairwise(&c, &ext, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, FeatureError::NonFiniteFeature { ref name, .. } if name == "METEOR"));
    }

    #[test]
    fn score_only_block() {
        let s = toks("a b c d");
        let c = bleu_components(&s, &s);
        let f = assemble_with(&c, LexicalFeatures::Score, &BTreeMap::new(), &BTreeMap::new()).unwrap();
        assert_eq!(f.names, ["bleu"]);
        assert_eq!(f.values, [1.0]);
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(0u8..6, 0..14).prop_map(|v| v.into_iter().map(|i| format!("t{i}")).collect())
    }

    proptest! {
        #[test]
        fn clipping_bounds(hyp in sentence(), reference in sentence(), n in 1usize..=4) {
            let s = ngram_stats(&hyp, &reference, n);
            prop_assert!(s.matches <= s.total);
            prop_assert_eq!(s.total, (hyp.len() + 1).saturating_sub(n));
            let ref_total = (reference.len() + 1).saturating_sub(n);
            prop_assert!(s.matches <= ref_total);
            prop_assert_eq!((s.matches, s.total), brute_matches(&hyp, &reference, n));
        }

        #[test]
        fn identity_scores_one(s in prop::collection::vec(0u8..50, 4..20)) {
            let s: Vec<String> = s.into_iter().map(|i| i.to_string()).collect();
            prop_assert_eq!(bleu_score(&bleu_components(&s, &s), Smoothing::None), 1.0);
        }

        #[test]
        fn score_monotone_in_length(hyp in sentence(), reference in sentence(), extra in 0usize..10) {
            let c = bleu_components(&hyp, &reference);
            prop_assume!(c.hyp_len > 0);
            let mut longer = c.clone();
            longer.hyp_len = (c.hyp_len + extra).min(c.ref_len.max(c.hyp_len));
            longer.brevity_penalty = brevity_penalty(longer.hyp_len, longer.ref_len);
            for s in [Smoothing::None, Smoothing::AddOneOnZero] {
                prop_assert!(bleu_score(&longer, s) >= bleu_score(&c, s));
            }
        }

        #[test]
        fn flattened_components_finite(hyp in sentence(), reference in sentence()) {
            let c = bleu_components(&hyp, &reference);
            let flat = c.flatten();
            prop_assert!(flat.iter().all(|x| x.is_finite()));
            prop_assert!((0.0..=1.0).contains(&c.brevity_penalty));
            prop_assert_eq!(
                assemble_pairwise(&c, &BTreeMap::new(), &BTreeMap::new()).unwrap().values,
                flat.to_vec()
            );
        }
    }
}
