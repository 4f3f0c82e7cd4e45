//! Word-embedding tables and sentence composition.
//!
//! Tables are read from the plain text format shared by GloVe and word2vec:
//! one entry per line, the token followed by its vector components.
//!
//! ```text
//! 3 2
//! the 0.418 0.24968
//! cat -0.41242 0.1217
//! sat 0.34527 -0.044457
//! ```
//!
//! The optional first line `<count> <dim>` (word2vec text output) is detected
//! when it consists of exactly two integers. Lines starting with `#` and blank
//! lines are skipped. Any dimension is accepted, as long as every line agrees.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} vector components, found {found}")]
    InconsistentDimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse vector component {field:?}")]
    NonNumeric { line: usize, field: String },
    #[error("line {line}: vector component {field:?} is not finite")]
    NonFinite { line: usize, field: String },
    #[error("embedding input contains no entries")]
    Empty,
    #[error("embedding dimension {found} does not match expected dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("embedding I/O: {0}")]
    Io(#[from] io::Error),
}

/// An immutable map from tokens to vectors of one fixed dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dimension: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    // Row-major, `words.len() * dimension` values.
    vectors: Vec<f64>,
    duplicates: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(token, vector)` pairs. Later duplicates are
    /// ignored and counted.
    pub fn from_entries<I, S>(dimension: usize, entries: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        let mut table = EmbeddingTable::with_dimension(dimension);
        for (i, (word, vector)) in entries.into_iter().enumerate() {
            if vector.len() != dimension {
                return Err(EmbeddingError::InconsistentDimension {
                    line: i + 1,
                    expected: dimension,
                    found: vector.len(),
                });
            }
            table.insert(word.into(), &vector);
        }
        if table.is_empty() || dimension == 0 {
            return Err(EmbeddingError::Empty);
        }
        Ok(table)
    }

    fn with_dimension(dimension: usize) -> Self {
        EmbeddingTable {
            dimension,
            words: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
            duplicates: 0,
        }
    }

    fn insert(&mut self, word: String, vector: &[f64]) {
        if self.index.contains_key(&word) {
            self.duplicates += 1;
            return;
        }
        self.index.insert(word.clone(), self.words.len());
        self.words.push(word);
        self.vectors.extend_from_slice(vector);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Number of duplicate tokens that were skipped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dimension..(i + 1) * self.dimension]
    }

    /// Entries in load order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.words.iter().enumerate().map(move |(i, w)| (w.as_str(), self.row(i)))
    }

    /// Writes the table in the headerless text format. Values are printed with
    /// the shortest representation that parses back to the same `f64`.
    pub fn write_text<W: Write>(&self, mut writer: W) -> io::Result<()> {
        for (word, vector) in self.iter() {
            write!(writer, "{word}")?;
            for v in vector {
                write!(writer, " {v}")?;
            }
            writeln!(writer)?;
        }
        Ok(())
    }
}

fn is_header(fields: &[&str]) -> bool {
    fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok())
}

/// Reads an embedding table from a text stream.
///
/// Duplicate tokens keep their first vector; the number of skipped duplicates
/// is available from [`EmbeddingTable::duplicates`].
pub fn load_embedding_table<R: BufRead>(
    reader: R,
    expected_dimension: Option<usize>,
) -> Result<EmbeddingTable, EmbeddingError> {
    let mut table: Option<EmbeddingTable> = None;
    let mut header_dim = None;
    let mut seen_content = false;
    let mut values = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if !seen_content {
            seen_content = true;
            if is_header(&fields) {
                header_dim = fields[1].parse::<usize>().ok();
                continue;
            }
        }

        let (word, components) = fields.split_first().expect("non-empty line");
        values.clear();
        for field in components {
            let v: f64 = field.parse().map_err(|_| EmbeddingError::NonNumeric {
                line: lineno,
                field: field.to_string(),
            })?;
            if !v.is_finite() {
                return Err(EmbeddingError::NonFinite { line: lineno, field: field.to_string() });
            }
            values.push(v);
        }

        let table = table.get_or_insert_with(|| {
            EmbeddingTable::with_dimension(header_dim.unwrap_or(values.len()))
        });
        if values.len() != table.dimension {
            return Err(EmbeddingError::InconsistentDimension {
                line: lineno,
                expected: table.dimension,
                found: values.len(),
            });
        }
        table.insert(word.to_string(), &values);
    }

    let table = match table {
        Some(t) if t.dimension > 0 => t,
        _ => return Err(EmbeddingError::Empty),
    };
    if let Some(expected) = expected_dimension {
        if expected != table.dimension {
            return Err(EmbeddingError::DimensionMismatch { expected, found: table.dimension });
        }
    }
    Ok(table)
}

/// How word vectors are pooled into a sentence vector.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Composition {
    #[default]
    Mean,
}

/// A fixed-length sentence representation.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceVector {
    pub values: Vec<f64>,
    /// Tokens that were not found in the table.
    pub oov_count: usize,
}

impl SentenceVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

/// Pools the vectors of `tokens` found in `table`.
///
/// Out-of-vocabulary tokens are skipped and counted. If nothing is found the
/// result is the zero vector.
pub fn compose_sentence_vector<S: AsRef<str>>(
    tokens: &[S],
    table: &EmbeddingTable,
    strategy: Composition,
) -> SentenceVector {
    match strategy {
        Composition::Mean => {
            let mut sum = vec![0.0; table.dimension()];
            let mut found = 0usize;
            for token in tokens {
                if let Some(v) = table.get(token.as_ref()) {
                    crate::linalg::axpy(1.0, v, &mut sum);
                    found += 1;
                }
            }
            if found > 0 {
                let n = found as f64;
                sum.iter_mut().for_each(|x| *x /= n);
            }
            SentenceVector { values: sum, oov_count: tokens.len() - found }
        }
    }
}
