//! Shared fixture builders for the integration suites.

use taskauto_core::aggregate::PredictionRecord;
use taskauto_core::corpus::{ClassLabel, OccupationInfo, OccupationMap, ALL_CLASSES};

/// Class totals reported for the full O*NET inference run.
pub const ONET_TASK_TOTALS: [usize; 3] = [6_664, 10_678, 2_188];
pub const ONET_N_TASKS: usize = 19_530;
pub const ONET_N_OCCUPATIONS: usize = 974;
/// Occupations engineered above the strict 0.5 threshold per class. The
/// three flags are mutually exclusive, so they must sum to at most 974;
/// 244 + 602 + 128 covers every occupation.
pub const ONET_FLAG_COUNTS: [usize; 3] = [244, 602, 128];

/// Builds the O*NET-shaped prediction fixture: 19,530 tasks over 974
/// occupations with exactly 244/602/128 occupations holding a strict
/// majority of substitution/complementarity/negligibility predictions and
/// class totals 6,664/10,678/2,188.
pub fn onet_shaped_fixture() -> (Vec<PredictionRecord>, OccupationMap) {
    let mut remaining = ONET_TASK_TOTALS;
    let mut predictions = Vec::with_capacity(ONET_N_TASKS);
    let mut occupations = OccupationMap::new();

    for occ_idx in 0..ONET_N_OCCUPATIONS {
        let majority = if occ_idx < ONET_FLAG_COUNTS[0] {
            ClassLabel::Substitution
        } else if occ_idx < ONET_FLAG_COUNTS[0] + ONET_FLAG_COUNTS[1] {
            ClassLabel::Complementarity
        } else {
            ClassLabel::Negligibility
        };
        // 974 × 20 = 19,480; the first 50 occupations carry one extra task.
        let n_tasks = if occ_idx < 50 { 21 } else { 20 };
        let majority_count = 11;

        let code = format!("OCC{occ_idx:04}");
        occupations.insert(
            code.clone(),
            OccupationInfo {
                title: format!("Occupation {occ_idx}"),
                industry_codes: vec![format!("IND{:02}", occ_idx % 20)],
                weight: None,
            },
        );

        let mut task_labels = Vec::with_capacity(n_tasks);
        for _ in 0..majority_count {
            task_labels.push(majority);
        }
        remaining[majority.index()] -= majority_count;
        for _ in majority_count..n_tasks {
            let filler = ALL_CLASSES
                .into_iter()
                .find(|c| remaining[c.index()] > 0)
                .expect("filler budget exhausted early");
            remaining[filler.index()] -= 1;
            task_labels.push(filler);
        }

        for (t, label) in task_labels.into_iter().enumerate() {
            let mut probabilities = [0.05, 0.05, 0.05];
            probabilities[label.index()] = 0.9;
            predictions.push(PredictionRecord {
                task_id: format!("{code}-T{t:02}"),
                probabilities,
                label,
                occupation_code: Some(code.clone()),
            });
        }
    }
    assert_eq!(remaining, [0, 0, 0], "class budgets must be exhausted");
    assert_eq!(predictions.len(), ONET_N_TASKS);
    (predictions, occupations)
}
