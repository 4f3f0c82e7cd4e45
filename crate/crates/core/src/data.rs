//! Judgment datasets.
//!
//! A dataset is a JSON-lines file, one pairwise judgment per line:
//!
//! ```json
//! {"id": "cz-17-3", "split": "cz-en",
//!  "reference": "the cat sat on the mat",
//!  "hyp1": "the cat sat on a mat",
//!  "hyp2": ["a", "cat", "is", "sitting"],
//!  "y": 1,
//!  "external_scores_1": {"METEOR": 0.61}, "external_scores_2": {"METEOR": 0.32},
//!  "psi_t1": [0.1, 0.2], "psi_t2": [0.0, 0.3], "psi_r": [0.1, 0.1]}
//! ```
//!
//! Sentences are raw strings (lowercased and split on whitespace) or token
//! arrays (kept verbatim). `y` is `1` when `hyp1` is better, `0` when `hyp2`
//! is, or `"tie"`; ties are dropped at load time. `id` defaults to the line
//! number and `split` to `"all"`. The score maps and the three `psi_*`
//! vectors are optional, but every tuple must carry the same score names, and
//! the vectors come all three or not at all.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{compose_sentence_vector, Composition, EmbeddingTable};
use crate::features::{assemble_with, bleu_components, FeatureError, LexicalFeatures};
use crate::model::ModelInput;

pub const DEFAULT_SPLIT: &str = "all";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: malformed JSON: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: label must be 0, 1 or \"tie\", found {value}")]
    InvalidLabel { line: usize, value: String },
    #[error("line {line}: external scores {found:?} differ from schema {expected:?}")]
    InconsistentSchema { line: usize, expected: Vec<String>, found: Vec<String> },
    #[error("line {line}: sentence vectors have dimension {found}, expected {expected}")]
    MixedSentenceDim { line: usize, expected: usize, found: usize },
    #[error("line {line}: psi_t1, psi_t2 and psi_r must be given together with equal length")]
    PartialVectors { line: usize },
    #[error("line {line}: non-finite value in {field}")]
    NonFinite { line: usize, field: String },
    #[error("tuple {id:?} has no precomputed sentence vectors and no embedding table was given")]
    MissingTable { id: String },
    #[error("embedding table dimension {table} conflicts with precomputed sentence dimension {dataset}")]
    DimensionConflict { dataset: usize, table: usize },
    #[error("tuple {id:?}: {source}")]
    Feature { id: String, source: FeatureError },
    #[error("dataset I/O: {0}")]
    Io(#[from] io::Error),
}

/// Which hypothesis the human judged better.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    /// `y = 0`
    T2Better,
    /// `y = 1`
    T1Better,
}

impl Label {
    pub fn from_y(y: u8) -> Option<Label> {
        match y {
            0 => Some(Label::T2Better),
            1 => Some(Label::T1Better),
            _ => None,
        }
    }

    pub fn y(self) -> f64 {
        match self {
            Label::T1Better => 1.0,
            Label::T2Better => 0.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::T1Better => Label::T2Better,
            Label::T2Better => Label::T1Better,
        }
    }
}

impl Serialize for Label {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.y() as u8)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let y = u8::deserialize(d)?;
        Label::from_y(y).ok_or_else(|| serde::de::Error::custom(format!("label {y} is not 0 or 1")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceVectors {
    pub psi_t1: Vec<f64>,
    pub psi_t2: Vec<f64>,
    pub psi_r: Vec<f64>,
}

/// One judgment `(t1, t2, r, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationTuple {
    pub id: String,
    pub split: String,
    pub reference: Vec<String>,
    pub hyp1: Vec<String>,
    pub hyp2: Vec<String>,
    pub label: Label,
    pub external_scores_1: BTreeMap<String, f64>,
    pub external_scores_2: BTreeMap<String, f64>,
    pub vectors: Option<SentenceVectors>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub tuples: Vec<EvaluationTuple>,
    /// External score names shared by every tuple, sorted.
    pub feature_schema: Vec<String>,
    /// Dimension of the precomputed sentence vectors, 0 if there are none.
    pub sentence_dim: usize,
}

/// Bookkeeping from [`load_dataset`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub records: usize,
    pub dropped_ties: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSentence {
    Text(String),
    Tokens(Vec<String>),
}

impl RawSentence {
    fn into_tokens(self) -> Vec<String> {
        match self {
            RawSentence::Text(s) => crate::tokenize(&s),
            RawSentence::Tokens(t) => t,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Number(serde_json::Number),
    Text(String),
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    split: Option<String>,
    reference: RawSentence,
    hyp1: RawSentence,
    hyp2: RawSentence,
    y: RawLabel,
    #[serde(default)]
    external_scores_1: BTreeMap<String, f64>,
    #[serde(default)]
    external_scores_2: BTreeMap<String, f64>,
    psi_t1: Option<Vec<f64>>,
    psi_t2: Option<Vec<f64>>,
    psi_r: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    split: &'a str,
    reference: &'a [String],
    hyp1: &'a [String],
    hyp2: &'a [String],
    y: Label,
    external_scores_1: &'a BTreeMap<String, f64>,
    external_scores_2: &'a BTreeMap<String, f64>,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    vectors: Option<&'a SentenceVectors>,
}

enum Parsed {
    Tuple(Box<EvaluationTuple>),
    Tie,
}

fn parse_label(raw: RawLabel, line: usize) -> Result<Option<Label>, DataError> {
    let invalid = |value: String| DataError::InvalidLabel { line, value };
    match raw {
        RawLabel::Number(n) => match n.as_u64() {
            Some(y @ (0 | 1)) => Ok(Label::from_y(y as u8)),
            _ => Err(invalid(n.to_string())),
        },
        RawLabel::Text(s) if s.eq_ignore_ascii_case("tie") => Ok(None),
        RawLabel::Text(s) => Err(invalid(format!("{s:?}"))),
    }
}

fn parse_record(text: &str, line: usize) -> Result<Parsed, DataError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|source| DataError::Json { line, source })?;
    let Some(label) = parse_label(raw.y, line)? else {
        return Ok(Parsed::Tie);
    };
    let vectors = match (raw.psi_t1, raw.psi_t2, raw.psi_r) {
        (None, None, None) => None,
        (Some(psi_t1), Some(psi_t2), Some(psi_r))
            if psi_t1.len() == psi_r.len() && psi_t2.len() == psi_r.len() && !psi_r.is_empty() =>
        {
            Some(SentenceVectors { psi_t1, psi_t2, psi_r })
        }
        _ => return Err(DataError::PartialVectors { line }),
    };
    if let Some(v) = &vectors {
        for (field, values) in [("psi_t1", &v.psi_t1), ("psi_t2", &v.psi_t2), ("psi_r", &v.psi_r)] {
            if values.iter().any(|x| !x.is_finite()) {
                return Err(DataError::NonFinite { line, field: field.into() });
            }
        }
    }
    Ok(Parsed::Tuple(Box::new(EvaluationTuple {
        id: raw.id.unwrap_or_else(|| line.to_string()),
        split: raw.split.unwrap_or_else(|| DEFAULT_SPLIT.to_owned()),
        reference: raw.reference.into_tokens(),
        hyp1: raw.hyp1.into_tokens(),
        hyp2: raw.hyp2.into_tokens(),
        label,
        external_scores_1: raw.external_scores_1,
        external_scores_2: raw.external_scores_2,
        vectors,
    })))
}

/// Parses and validates a JSON-lines dataset. Blank lines are skipped.
pub fn load_dataset<R: BufRead>(reader: R) -> Result<(Dataset, LoadReport), DataError> {
    let mut dataset = Dataset::default();
    let mut report = LoadReport::default();
    let mut schema: Option<Vec<String>> = None;

    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        let line = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        report.records += 1;
        let tuple = match parse_record(&text, line)? {
            Parsed::Tie => {
                report.dropped_ties += 1;
                continue;
            }
            Parsed::Tuple(t) => *t,
        };

        let names1: Vec<String> = tuple.external_scores_1.keys().cloned().collect();
        let names2: Vec<String> = tuple.external_scores_2.keys().cloned().collect();
        let expected = schema.get_or_insert_with(|| names1.clone());
        for names in [names1, names2] {
            if &names != expected {
                return Err(DataError::InconsistentSchema { line, expected: expected.clone(), found: names });
            }
        }
        for (name, v) in tuple.external_scores_1.iter().chain(&tuple.external_scores_2) {
            if !v.is_finite() {
                return Err(DataError::NonFinite { line, field: name.clone() });
            }
        }
        if let Some(v) = &tuple.vectors {
            let dim = v.psi_r.len();
            if dataset.sentence_dim == 0 {
                dataset.sentence_dim = dim;
            } else if dim != dataset.sentence_dim {
                return Err(DataError::MixedSentenceDim { line, expected: dataset.sentence_dim, found: dim });
            }
        }
        dataset.tuples.push(tuple);
    }
    dataset.feature_schema = schema.unwrap_or_default();
    Ok((dataset, report))
}

/// Writes the dataset back as JSON lines with sentences as token arrays.
pub fn write_dataset<W: Write>(dataset: &Dataset, mut writer: W) -> io::Result<()> {
    for t in &dataset.tuples {
        let record = OutRecord {
            id: &t.id,
            split: &t.split,
            reference: &t.reference,
            hyp1: &t.hyp1,
            hyp2: &t.hyp2,
            y: t.label,
            external_scores_1: &t.external_scores_1,
            external_scores_2: &t.external_scores_2,
            vectors: t.vectors.as_ref(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writeln!(writer)?;
    }
    Ok(())
}

/// A tuple turned into network inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub split: String,
    pub input: ModelInput,
    pub label: Label,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorizeOptions {
    /// Include the sentence vectors `ψ`. When false the sentence dimension is 0.
    pub sentence_vectors: bool,
    pub lexical: LexicalFeatures,
    /// Append the cosine between each hypothesis vector and the reference vector.
    pub embedding_similarity: bool,
}

impl Default for VectorizeOptions {
    fn default() -> Self {
        VectorizeOptions { sentence_vectors: true, lexical: LexicalFeatures::Components, embedding_similarity: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vectorized {
    pub examples: Vec<Example>,
    pub sentence_dim: usize,
    pub pairwise_dim: usize,
    pub feature_names: Vec<String>,
    /// Tokens missing from the embedding table, summed over all composed sentences.
    pub oov_tokens: usize,
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = crate::linalg::dot(a, a).sqrt();
    let nb = crate::linalg::dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        crate::linalg::dot(a, b) / (na * nb)
    }
}

/// Builds model inputs for every tuple, in order.
///
/// Precomputed sentence vectors win; otherwise the vectors are mean-pooled
/// from `table`. The pairwise features always start with the BLEU block
/// computed from the tokens, followed by the external scores.
pub fn vectorize(
    dataset: &Dataset,
    table: Option<&EmbeddingTable>,
    options: &VectorizeOptions,
) -> Result<Vectorized, DataError> {
    let sentence_dim = if !options.sentence_vectors {
        0
    } else {
        match (dataset.sentence_dim, table) {
            (0, Some(t)) => t.dimension(),
            (d, Some(t)) if d != t.dimension() => {
                return Err(DataError::DimensionConflict { dataset: d, table: t.dimension() });
            }
            (d, _) => d,
        }
    };

    let mut examples = Vec::with_capacity(dataset.tuples.len());
    let mut feature_names = Vec::new();
    let mut oov_tokens = 0;
    for t in &dataset.tuples {
        let (psi_t1, psi_t2, psi_r) = if !options.sentence_vectors {
            (vec![], vec![], vec![])
        } else if let Some(v) = &t.vectors {
            (v.psi_t1.clone(), v.psi_t2.clone(), v.psi_r.clone())
        } else {
            let table = table.ok_or_else(|| DataError::MissingTable { id: t.id.clone() })?;
            let mut compose = |tokens: &[String]| {
                let v = compose_sentence_vector(tokens, table, Composition::Mean);
                oov_tokens += v.oov_count;
                v.values
            };
            (compose(&t.hyp1), compose(&t.hyp2), compose(&t.reference))
        };

        let sims = |psi_t: &[f64]| {
            let mut m = BTreeMap::new();
            if options.embedding_similarity && options.sentence_vectors {
                m.insert("cosine".to_owned(), cosine(psi_t, &psi_r));
            }
            m
        };
        let feature = |source| DataError::Feature { id: t.id.clone(), source };
        let phi1 = assemble_with(&bleu_components(&t.hyp1, &t.reference), options.lexical, &t.external_scores_1, &sims(&psi_t1))
            .map_err(feature)?;
        let phi2 = assemble_with(&bleu_components(&t.hyp2, &t.reference), options.lexical, &t.external_scores_2, &sims(&psi_t2))
            .map_err(feature)?;
        if feature_names.is_empty() {
            feature_names = phi1.names.clone();
        }
        examples.push(Example {
            id: t.id.clone(),
            split: t.split.clone(),
            input: ModelInput { psi_t1, psi_t2, psi_r, phi_t1r: phi1.values, phi_t2r: phi2.values },
            label: t.label,
        });
    }
    Ok(Vectorized { pairwise_dim: feature_names.len(), examples, sentence_dim, feature_names, oov_tokens })
}
