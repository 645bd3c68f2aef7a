//! Deterministic stratified train/eval/test splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{class_counts, AnnotatedExample, CorpusError, SplitAssignment, ALL_CLASSES};

/// Splits examples into train/eval/test id sets, stratified per class with
/// largest-remainder rounding, so each split's class mix tracks the corpus
/// within one example per class. Pure function of `(examples, ratios, seed)`.
pub fn stratified_split(
    examples: &[AnnotatedExample],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitAssignment, CorpusError> {
    if ratios.iter().any(|r| *r < 0.0) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let counts = class_counts(examples);
    for class in ALL_CLASSES {
        if counts.get(class) == 0 {
            return Err(CorpusError::EmptyClass(class));
        }
    }

    let mut assignment = SplitAssignment {
        train: Default::default(),
        eval: Default::default(),
        test: Default::default(),
        seed,
        ratios,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for class in ALL_CLASSES {
        // Input order then shuffle keeps the result independent of id format.
        let mut ids: Vec<&str> = examples
            .iter()
            .filter(|e| e.label == class)
            .map(|e| e.task.id.as_str())
            .collect();
        ids.shuffle(&mut rng);

        let targets = largest_remainder(ids.len(), ratios);
        let (train_n, eval_n) = (targets[0], targets[1]);
        for (pos, id) in ids.into_iter().enumerate() {
            let set = if pos < train_n {
                &mut assignment.train
            } else if pos < train_n + eval_n {
                &mut assignment.eval
            } else {
                &mut assignment.test
            };
            set.insert(id.to_string());
        }
    }
    Ok(assignment)
}

/// Apportions `total` into three integer counts proportional to `ratios`,
/// summing exactly to `total`. Ties go to the earlier split.
fn largest_remainder(total: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &idx in order.iter().take(total - assigned) {
        counts[idx] += 1;
    }
    [counts[0], counts[1], counts[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ClassLabel, Origin, Source, TaskStatement};

    fn corpus(per_class: [usize; 3]) -> Vec<AnnotatedExample> {
        let mut examples = Vec::new();
        for (class_idx, &n) in per_class.iter().enumerate() {
            let label = ClassLabel::from_index(class_idx).unwrap();
            for i in 0..n {
                examples.push(AnnotatedExample {
                    task: TaskStatement {
                        id: format!("{}-{i}", label.as_str()),
                        text: format!("example {i}"),
                        source: Source::Synthetic,
                        occupation_code: None,
                    },
                    label,
                    origin: Origin::Human,
                    parent_id: None,
                });
            }
        }
        examples
    }

    fn per_class_count(
        ids: &std::collections::BTreeSet<String>,
        examples: &[AnnotatedExample],
        class: ClassLabel,
    ) -> usize {
        examples
            .iter()
            .filter(|e| e.label == class && ids.contains(&e.task.id))
            .count()
    }

    #[test]
    fn split_811_respects_per_class_tolerance() {
        // Independent tally: each split's per-class count must sit within one
        // example of ratio * class size, and splits must partition the corpus.
        let examples = corpus([50, 30, 20]);
        let split = stratified_split(&examples, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(split.train.len(), 80);
        assert_eq!(split.eval.len(), 10);
        assert_eq!(split.test.len(), 10);
        for (ids, ratio) in [
            (&split.train, 0.8f64),
            (&split.eval, 0.1),
            (&split.test, 0.1),
        ] {
            for class in ALL_CLASSES {
                let class_total = examples.iter().filter(|e| e.label == class).count();
                let got = per_class_count(ids, &examples, class) as f64;
                assert!(
                    (got - ratio * class_total as f64).abs() <= 1.0,
                    "class {class} ratio {ratio}: got {got}"
                );
            }
        }
    }

    #[test]
    fn degenerate_ratio_puts_everything_in_train() {
        let examples = corpus([5, 4, 3]);
        let split = stratified_split(&examples, [1.0, 0.0, 0.0], 1).unwrap();
        assert_eq!(split.train.len(), 12);
        assert!(split.eval.is_empty());
        assert!(split.test.is_empty());
    }

    #[test]
    fn same_seed_reproduces_and_different_seed_differs() {
        let examples = corpus([20, 20, 20]);
        let a = stratified_split(&examples, [0.8, 0.1, 0.1], 1).unwrap();
        let b = stratified_split(&examples, [0.8, 0.1, 0.1], 1).unwrap();
        let c = stratified_split(&examples, [0.8, 0.1, 0.1], 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn empty_class_is_rejected() {
        let examples = corpus([5, 5, 0]);
        assert!(matches!(
            stratified_split(&examples, [0.8, 0.1, 0.1], 1),
            Err(CorpusError::EmptyClass(ClassLabel::Negligibility))
        ));
    }

    #[test]
    fn bad_ratios_rejected() {
        let examples = corpus([2, 2, 2]);
        assert!(stratified_split(&examples, [0.8, 0.1, 0.2], 1).is_err());
        assert!(stratified_split(&examples, [1.2, -0.1, -0.1], 1).is_err());
    }

    #[test]
    fn largest_remainder_sums_exactly() {
        for total in 0..50 {
            let counts = largest_remainder(total, [0.8, 0.1, 0.1]);
            assert_eq!(counts.iter().sum::<usize>(), total);
        }
        assert_eq!(largest_remainder(10, [0.8, 0.1, 0.1]), [8, 1, 1]);
    }
}
