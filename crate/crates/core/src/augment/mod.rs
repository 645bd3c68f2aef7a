//! Corpus expansion by paraphrasing through a pluggable provider, with
//! similarity validation and class-balance policies.

mod provider;

pub use provider::{HttpProvider, MockProvider, ParaphraseRequest, ProviderClient};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{
    AnnotatedExample, ClassCounts, ClassLabel, Origin, SplitAssignment, TaskStatement,
    ALL_CLASSES,
};
use crate::text::alnum_tokens;

const ALLOWED_MULTIPLIERS: [f64; 6] = [1.5, 2.0, 2.5, 3.0, 4.0, 5.0];

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider could not produce enough accepted paraphrases; shortfall {shortfall:?}")]
    InsufficientVariants { shortfall: Vec<(ClassLabel, usize)> },
    #[error("invalid paraphrase request: {0}")]
    BadRequest(String),
    #[error("class {0} has no human examples to augment from")]
    NoParents(ClassLabel),
    #[error("multiplier {0} not in {{1.5, 2, 2.5, 3, 4, 5}}")]
    BadMultiplier(f64),
}

/// How far to grow the corpus.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationPolicy {
    /// No augmentation.
    Original,
    /// Grow every class to the pre-augmentation maximum class count.
    Balanced,
    /// Grow every class to `ceil(multiplier × original count)`.
    Multiplier(f64),
    /// Grow classes to explicit target counts (classes already at or above
    /// their target are left alone).
    PerClassTargets(ClassCounts),
}

impl AugmentationPolicy {
    pub fn multiplier(value: f64) -> Result<Self, AugmentError> {
        if ALLOWED_MULTIPLIERS.iter().any(|m| (m - value).abs() < 1e-9) {
            Ok(Self::Multiplier(value))
        } else {
            Err(AugmentError::BadMultiplier(value))
        }
    }

    /// Target count per class given pre-augmentation counts.
    pub fn targets(&self, counts: &ClassCounts) -> ClassCounts {
        match self {
            Self::Original => *counts,
            Self::Balanced => {
                let max = counts.max();
                ClassCounts::new(max, max, max)
            }
            Self::Multiplier(m) => {
                let grow = |n: usize| (m * n as f64).ceil() as usize;
                ClassCounts::new(
                    grow(counts.get(ClassLabel::Substitution)),
                    grow(counts.get(ClassLabel::Complementarity)),
                    grow(counts.get(ClassLabel::Negligibility)),
                )
            }
            Self::PerClassTargets(t) => *t,
        }
    }
}

/// Validation knobs for [`apply_policy`].
#[derive(Debug, Clone)]
pub struct AugmentOptions {
    /// Minimum TF-cosine similarity an accepted paraphrase must reach.
    pub similarity_floor: f64,
    pub temperature: f64,
    /// Provider passes before giving up on a class.
    pub max_rounds: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            similarity_floor: 0.5,
            temperature: 0.7,
            max_rounds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationVerdict {
    pub accepted: bool,
    pub similarity: f64,
    pub reason: Option<String>,
}

/// Cosine similarity of L2-normalized unigram term-frequency vectors over
/// lowercased alphanumeric tokens.
pub fn tf_cosine(a: &str, b: &str) -> f64 {
    use std::collections::BTreeMap;
    if a == b {
        return if alnum_tokens(a).is_empty() { 0.0 } else { 1.0 };
    }
    let count = |s: &str| {
        let mut m: BTreeMap<String, f64> = BTreeMap::new();
        for tok in alnum_tokens(s) {
            *m.entry(tok).or_insert(0.0) += 1.0;
        }
        m
    };
    let ca = count(a);
    let cb = count(b);
    let dot: f64 = ca
        .iter()
        .filter_map(|(t, &x)| cb.get(t).map(|&y| x * y))
        .sum();
    let norm = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let (na, nb) = (norm(&ca), norm(&cb));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}

/// A candidate is accepted when it clears the similarity floor and is not
/// byte-identical to the original.
pub fn validate_paraphrase(original: &str, candidate: &str, floor: f64) -> ValidationVerdict {
    let similarity = tf_cosine(original, candidate);
    if original == candidate {
        return ValidationVerdict {
            accepted: false,
            similarity,
            reason: Some("identical to original".into()),
        };
    }
    if similarity < floor {
        return ValidationVerdict {
            accepted: false,
            similarity,
            reason: Some(format!("similarity {similarity:.3} below floor {floor}")),
        };
    }
    ValidationVerdict {
        accepted: true,
        similarity,
        reason: None,
    }
}

/// Thin wrapper over a provider call that enforces the output contract.
pub fn paraphrase(
    req: &ParaphraseRequest,
    provider: &dyn ProviderClient,
) -> Result<Vec<String>, AugmentError> {
    let variants = provider.paraphrase(req)?;
    if variants.len() > req.n_variants {
        return Err(AugmentError::MalformedResponse(format!(
            "provider returned {} variants, requested {}",
            variants.len(),
            req.n_variants
        )));
    }
    for v in &variants {
        if v.is_empty() {
            return Err(AugmentError::MalformedResponse("empty variant".into()));
        }
        if *v == req.source_text {
            return Err(AugmentError::MalformedResponse(
                "variant identical to source".into(),
            ));
        }
    }
    Ok(variants)
}

/// Expands `examples` to the policy's per-class targets.
///
/// When `split` is given, targets are computed over — and parents drawn
/// solely from — the training split, so no augmented example ever leaks into
/// eval or test. Parents are human-origin examples only; every child carries
/// its parent's label, source, and occupation, with `origin = Augmented` and
/// `parent_id` set. Output order: originals as given, then new examples
/// sorted by `(parent_id, variant index)`.
pub fn apply_policy(
    examples: &[AnnotatedExample],
    policy: &AugmentationPolicy,
    provider: &dyn ProviderClient,
    seed: u64,
    split: Option<&SplitAssignment>,
    options: &AugmentOptions,
) -> Result<Vec<AnnotatedExample>, AugmentError> {
    if matches!(policy, AugmentationPolicy::Original) {
        return Ok(examples.to_vec());
    }
    if let AugmentationPolicy::Multiplier(m) = policy {
        AugmentationPolicy::multiplier(*m)?;
    }

    let population: Vec<&AnnotatedExample> = match split {
        Some(s) => examples
            .iter()
            .filter(|e| s.train.contains(&e.task.id))
            .collect(),
        None => examples.iter().collect(),
    };
    let counts = class_counts_ref(&population);
    let targets = policy.targets(&counts);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut augmented: Vec<(String, usize, AnnotatedExample)> = Vec::new();
    let mut shortfall: Vec<(ClassLabel, usize)> = Vec::new();

    for class in ALL_CLASSES {
        let deficit = targets.get(class).saturating_sub(counts.get(class));
        if deficit == 0 {
            continue;
        }
        let mut parents: Vec<&AnnotatedExample> = population
            .iter()
            .copied()
            .filter(|e| e.label == class && e.origin == Origin::Human)
            .collect();
        if parents.is_empty() {
            return Err(AugmentError::NoParents(class));
        }
        parents.sort_by(|a, b| a.task.id.cmp(&b.task.id));
        parents.shuffle(&mut rng);

        let mut taken: Vec<Vec<String>> = vec![Vec::new(); parents.len()];
        let mut needed = deficit;
        let mut round = 0;
        while needed > 0 && round < options.max_rounds {
            let ask = needed.div_ceil(parents.len()).max(1);
            for (pi, parent) in parents.iter().enumerate() {
                if needed == 0 {
                    break;
                }
                let want = taken[pi].len() + ask;
                let req =
                    ParaphraseRequest::new(&parent.task.text, want, options.temperature)?;
                let variants = paraphrase(&req, provider)?;
                for candidate in variants {
                    if needed == 0 {
                        break;
                    }
                    if taken[pi].contains(&candidate) {
                        continue;
                    }
                    let verdict =
                        validate_paraphrase(&parent.task.text, &candidate, options.similarity_floor);
                    if verdict.accepted {
                        taken[pi].push(candidate);
                        needed -= 1;
                    }
                }
            }
            round += 1;
        }
        if needed > 0 {
            shortfall.push((class, needed));
            continue;
        }
        for (pi, parent) in parents.iter().enumerate() {
            for (k, text) in taken[pi].iter().enumerate() {
                let child = AnnotatedExample {
                    task: TaskStatement {
                        id: format!("{}-aug{}", parent.task.id, k + 1),
                        text: text.clone(),
                        source: parent.task.source,
                        occupation_code: parent.task.occupation_code.clone(),
                    },
                    label: parent.label,
                    origin: Origin::Augmented,
                    parent_id: Some(parent.task.id.clone()),
                };
                augmented.push((parent.task.id.clone(), k, child));
            }
        }
    }

    if !shortfall.is_empty() {
        return Err(AugmentError::InsufficientVariants { shortfall });
    }

    augmented.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = examples.to_vec();
    out.extend(augmented.into_iter().map(|(_, _, e)| e));
    Ok(out)
}

fn class_counts_ref(examples: &[&AnnotatedExample]) -> ClassCounts {
    let mut counts = ClassCounts::default();
    for e in examples {
        counts.add(e.label);
    }
    counts
}
