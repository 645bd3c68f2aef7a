//! Task-statement corpus: ingestion, expert-vote resolution, stratified
//! splits, and occupation/industry lookup tables.

mod ingest;
mod split;

pub use ingest::{
    read_annotated_csv, read_industries, read_occupations, read_tasks, read_votes,
    write_annotated_csv, write_tasks_csv,
};
pub use split::stratified_split;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The three automatability classes. Ordering (`S < C < N`) is the canonical
/// tie-break order everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    Substitution,
    Complementarity,
    Negligibility,
}

pub const ALL_CLASSES: [ClassLabel; 3] = [
    ClassLabel::Substitution,
    ClassLabel::Complementarity,
    ClassLabel::Negligibility,
];

impl ClassLabel {
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Substitution => 0,
            ClassLabel::Complementarity => 1,
            ClassLabel::Negligibility => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<ClassLabel> {
        ALL_CLASSES.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Substitution => "substitution",
            ClassLabel::Complementarity => "complementarity",
            ClassLabel::Negligibility => "negligibility",
        }
    }

    /// Accepts full names or single-letter shorthand, case-insensitively.
    pub fn parse(s: &str) -> Option<ClassLabel> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s" | "substitution" => Some(ClassLabel::Substitution),
            "c" | "complementarity" => Some(ClassLabel::Complementarity),
            "n" | "negligibility" => Some(ClassLabel::Negligibility),
            _ => None,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a task statement came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Onet,
    Esco,
    Aulmi,
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Onet => "onet",
            Source::Esco => "esco",
            Source::Aulmi => "aulmi",
            Source::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Source> {
        match s.trim().to_ascii_lowercase().as_str() {
            "onet" => Some(Source::Onet),
            "esco" => Some(Source::Esco),
            "aulmi" => Some(Source::Aulmi),
            "synthetic" => Some(Source::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One occupational task sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStatement {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub occupation_code: Option<String>,
}

/// Five expert votes for one task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteRecord {
    pub task_id: String,
    pub votes: [ClassLabel; 5],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Human,
    Augmented,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Human => "human",
            Origin::Augmented => "augmented",
        }
    }

    pub fn parse(s: &str) -> Option<Origin> {
        match s.trim().to_ascii_lowercase().as_str() {
            "human" => Some(Origin::Human),
            "augmented" => Some(Origin::Augmented),
            _ => None,
        }
    }
}

/// A labeled task statement. `parent_id` is set exactly when the example was
/// produced by paraphrase augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedExample {
    pub task: TaskStatement,
    pub label: ClassLabel,
    pub origin: Origin,
    pub parent_id: Option<String>,
}

/// Disjoint train/eval/test id sets covering a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub eval: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl SplitAssignment {
    pub fn contains_train(&self, id: &str) -> bool {
        self.train.contains(id)
    }

    pub fn split_of(&self, id: &str) -> Option<&'static str> {
        if self.train.contains(id) {
            Some("train")
        } else if self.eval.contains(id) {
            Some("eval")
        } else if self.test.contains(id) {
            Some("test")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone)]
pub struct OccupationInfo {
    pub title: String,
    pub industry_codes: Vec<String>,
    /// Optional employment weight column; parsed and kept but not used by the
    /// unweighted aggregation.
    pub weight: Option<f64>,
}

/// `occupation_code → OccupationInfo`, ordered for deterministic output.
pub type OccupationMap = std::collections::BTreeMap<String, OccupationInfo>;

/// `industry_code → title`.
pub type IndustryMap = std::collections::BTreeMap<String, String>;

/// Per-class example counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    counts: [usize; 3],
}

impl ClassCounts {
    pub fn new(substitution: usize, complementarity: usize, negligibility: usize) -> Self {
        Self {
            counts: [substitution, complementarity, negligibility],
        }
    }

    pub fn get(&self, label: ClassLabel) -> usize {
        self.counts[label.index()]
    }

    pub fn add(&mut self, label: ClassLabel) {
        self.counts[label.index()] += 1;
    }

    pub fn set(&mut self, label: ClassLabel, count: usize) {
        self.counts[label.index()] = count;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn max(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn as_array(&self) -> [usize; 3] {
        self.counts
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing column `{0}` in {1}")]
    MissingColumn(String, String),
    #[error("duplicate id `{id}` at data row {row}")]
    DuplicateId { id: String, row: usize },
    #[error("empty text at data row {row} (id `{id}`)")]
    EmptyText { id: String, row: usize },
    #[error("data row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("class `{0}` has no examples")]
    EmptyClass(ClassLabel),
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("vote threshold must be in 3..=5 (got {0})")]
    BadThreshold(u32),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

/// Resolves five expert votes to a consensus label: the unique class with at
/// least `threshold` votes, if any. No consensus is a valid outcome, not an
/// error; such tasks stay in the corpus unlabeled.
pub fn resolve_votes(
    record: &VoteRecord,
    threshold: u32,
) -> Result<Option<ClassLabel>, CorpusError> {
    if !(3..=5).contains(&threshold) {
        return Err(CorpusError::BadThreshold(threshold));
    }
    let mut counts = ClassCounts::default();
    for vote in &record.votes {
        counts.add(*vote);
    }
    // With 5 votes and threshold >= 3 at most one class can qualify.
    Ok(ALL_CLASSES
        .into_iter()
        .find(|class| counts.get(*class) >= threshold as usize))
}

/// Tallies labels.
pub fn class_counts(examples: &[AnnotatedExample]) -> ClassCounts {
    let mut counts = ClassCounts::default();
    for example in examples {
        counts.add(example.label);
    }
    counts
}
