//! Kendall's tau over pairwise decisions.
//!
//! Each tuple is one pair: the model's decision is concordant with the human
//! judgment, discordant with it, or a tie. Ties are penalized like
//! discordances:
//!
//! ```text
//! τ = (concordant − discordant − ties) / (concordant + discordant + ties)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Example, Label};
use crate::model::{decide, Model, ModelError, Preference};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot compute tau over zero pairs")]
    EmptyEvaluation,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Concordant,
    Discordant,
    Tie,
}

/// Compares a decision against the gold label.
pub fn classify(decision: Preference, gold: Label) -> Outcome {
    match (decision, gold) {
        (Preference::Tie, _) => Outcome::Tie,
        (Preference::T1Better, Label::T1Better) | (Preference::T2Better, Label::T2Better) => {
            Outcome::Concordant
        }
        _ => Outcome::Discordant,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub concordant: u64,
    pub discordant: u64,
    pub ties: u64,
}

impl PairCounts {
    pub fn total(&self) -> u64 {
        self.concordant + self.discordant + self.ties
    }

    pub fn record(&mut self, outcome: Outcome) {
        match outcome {
            Outcome::Concordant => self.concordant += 1,
            Outcome::Discordant => self.discordant += 1,
            Outcome::Tie => self.ties += 1,
        }
    }

    pub fn tau(&self) -> Result<f64, EvalError> {
        kendall_tau(*self)
    }
}

pub fn kendall_tau(counts: PairCounts) -> Result<f64, EvalError> {
    let total = counts.total();
    if total == 0 {
        return Err(EvalError::EmptyEvaluation);
    }
    let c = counts.concordant as f64;
    let d = counts.discordant as f64;
    let t = counts.ties as f64;
    Ok((c - d - t) / total as f64)
}

/// Tallies decisions against gold labels, pairwise by position.
pub fn count_outcomes(decisions: &[Preference], gold: &[Label]) -> PairCounts {
    assert_eq!(decisions.len(), gold.len(), "decision and gold lengths differ");
    let mut counts = PairCounts::default();
    for (&d, &g) in decisions.iter().zip(gold) {
        counts.record(classify(d, g));
    }
    counts
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub counts: PairCounts,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: PairCounts,
    pub tau: f64,
    pub splits: BTreeMap<String, SplitReport>,
    pub tie_epsilon: f64,
}

impl EvalReport {
    /// Unweighted mean of the per-split taus.
    pub fn average_tau(&self) -> f64 {
        let n = self.splits.len();
        if n == 0 {
            return self.tau;
        }
        self.splits.values().map(|s| s.tau).sum::<f64>() / n as f64
    }

    /// One row per split followed by an `AVG` row (mean of split taus) and an
    /// `ALL` row (pooled counts).
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>8} {:>10} {:>10} {:>8} {:>9}",
            "split", "pairs", "concordant", "discordant", "ties", "tau"
        );
        for (name, s) in &self.splits {
            table_row(&mut out, name, Some(&s.counts), s.tau);
        }
        table_row(&mut out, "AVG", None, self.average_tau());
        table_row(&mut out, "ALL", Some(&self.counts), self.tau);
        out
    }
}

fn table_row(out: &mut String, name: &str, counts: Option<&PairCounts>, tau: f64) {
    let cells = match counts {
        Some(c) => [c.total(), c.concordant, c.discordant, c.ties].map(|n| n.to_string()),
        None => Default::default(),
    };
    let _ = writeln!(
        out,
        "{:<12} {:>8} {:>10} {:>10} {:>8} {:>9.4}",
        name, cells[0], cells[1], cells[2], cells[3], tau
    );
}

/// Scores every example in both orientations and compares the decision with
/// the gold label. Parameters are only read.
pub fn evaluate(model: &Model, examples: &[Example], tie_epsilon: f64) -> Result<EvalReport, EvalError> {
    if examples.is_empty() {
        return Err(EvalError::EmptyEvaluation);
    }
    let mut counts = PairCounts::default();
    let mut by_split: BTreeMap<String, PairCounts> = BTreeMap::new();
    for ex in examples {
        let delta = model.predict_delta(&ex.input)?.delta;
        let outcome = classify(decide(delta, tie_epsilon), ex.label);
        counts.record(outcome);
        by_split.entry(ex.split.clone()).or_default().record(outcome);
    }
    let splits = by_split
        .into_iter()
        .map(|(name, c)| {
            let tau = kendall_tau(c).expect("split has at least one pair");
            (name, SplitReport { counts: c, tau })
        })
        .collect();
    Ok(EvalReport { counts, tau: kendall_tau(counts)?, splits, tie_epsilon })
}
