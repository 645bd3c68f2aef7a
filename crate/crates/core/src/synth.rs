//! Synthetic keyword-separable corpora.
//!
//! Each class has a marker token that appears in every sentence of the class
//! and nowhere else, so a linear model over unigrams separates the corpus
//! perfectly. Used by the demo fixtures and the test suites.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{AnnotatedExample, ClassLabel, Origin, Source, TaskStatement, ALL_CLASSES};

const CLASS_TOKENS: [&str; 3] = ["machinery", "customers", "therapy"];
const VERBS: [&str; 6] = ["operate", "manage", "support", "handle", "organize", "oversee"];
const FILLERS: [&str; 12] = [
    "daily", "weekly", "carefully", "promptly", "records", "reports", "levels", "systems",
    "stations", "sites", "teams", "plans",
];

/// The marker token whose presence determines the class.
pub fn class_token(label: ClassLabel) -> &'static str {
    CLASS_TOKENS[label.index()]
}

/// Builds `per_class` labeled examples per class, texts drawn from a small
/// template grammar by a seeded generator. Occupation codes cycle through
/// O1–O6.
pub fn keyword_corpus(per_class: [usize; 3], seed: u64) -> Vec<AnnotatedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut serial = 0usize;
    for class in ALL_CLASSES {
        for _ in 0..per_class[class.index()] {
            let verb = VERBS[rng.random_range(0..VERBS.len())];
            let a = FILLERS[rng.random_range(0..FILLERS.len())];
            let b = FILLERS[rng.random_range(0..FILLERS.len())];
            let c = FILLERS[rng.random_range(0..FILLERS.len())];
            let text = format!("{verb} {} for {a} {b} {c}", class_token(class));
            serial += 1;
            out.push(AnnotatedExample {
                task: TaskStatement {
                    id: format!("SYN{serial:04}"),
                    text,
                    source: Source::Synthetic,
                    occupation_code: Some(format!("O{}", serial % 6 + 1)),
                },
                label: class,
                origin: Origin::Human,
                parent_id: None,
            });
        }
    }
    out
}
