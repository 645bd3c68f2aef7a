//! Rolls task-level predictions up to occupation and industry
//! automatability profiles, risk flags, rankings, and attention term-weight
//! tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{ClassCounts, ClassLabel, IndustryMap, OccupationMap, ALL_CLASSES};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("unknown occupation code `{0}`")]
    UnknownOccupation(String),
    #[error("unknown industry code `{0}`")]
    UnknownIndustry(String),
    #[error("no occupation profiles to summarize")]
    Empty,
    #[error("invalid prediction for task `{task_id}`: {message}")]
    BadPrediction { task_id: String, message: String },
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

/// Task-level model output.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub task_id: String,
    pub probabilities: [f64; 3],
    pub label: ClassLabel,
    pub occupation_code: Option<String>,
}

impl PredictionRecord {
    /// Builds a record, deriving the label as the argmax of the
    /// probabilities.
    pub fn new(
        task_id: &str,
        probabilities: [f64; 3],
        occupation_code: Option<String>,
    ) -> Result<Self, AggregateError> {
        let sum: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (sum - 1.0).abs() > 1e-6
        {
            return Err(AggregateError::BadPrediction {
                task_id: task_id.into(),
                message: format!("probabilities {probabilities:?} are not a distribution"),
            });
        }
        let mut best = 0;
        for c in 1..3 {
            if probabilities[c] > probabilities[best] {
                best = c;
            }
        }
        Ok(Self {
            task_id: task_id.into(),
            probabilities,
            label: ClassLabel::from_index(best).expect("index in range"),
            occupation_code,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RiskFlags {
    pub high_substitution: bool,
    pub high_complementarity: bool,
    pub safe: bool,
}

/// Per-occupation rollup. `distribution[c]` is the fraction of the
/// occupation's tasks predicted as class `c`; flags use a strict `> 0.5`
/// threshold, so at most one can be set.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationProfile {
    pub code: String,
    pub title: String,
    pub n_tasks: usize,
    pub class_counts: ClassCounts,
    pub distribution: [f64; 3],
    pub flags: RiskFlags,
}

/// Groups predictions by occupation. Predictions without an occupation code
/// cannot be aggregated and are skipped; unknown codes are an error. Output
/// is sorted by occupation code.
pub fn occupation_profiles(
    predictions: &[PredictionRecord],
    occupations: &OccupationMap,
) -> Result<Vec<OccupationProfile>, AggregateError> {
    let mut grouped: BTreeMap<&str, ClassCounts> = BTreeMap::new();
    for record in predictions {
        let Some(code) = record.occupation_code.as_deref() else {
            continue;
        };
        if !occupations.contains_key(code) {
            return Err(AggregateError::UnknownOccupation(code.to_string()));
        }
        grouped.entry(code).or_default().add(record.label);
    }
    Ok(grouped
        .into_iter()
        .map(|(code, counts)| {
            let n = counts.total();
            let frac = |c: ClassLabel| counts.get(c) as f64 / n as f64;
            let distribution = [
                frac(ClassLabel::Substitution),
                frac(ClassLabel::Complementarity),
                frac(ClassLabel::Negligibility),
            ];
            OccupationProfile {
                code: code.to_string(),
                title: occupations[code].title.clone(),
                n_tasks: n,
                class_counts: counts,
                distribution,
                flags: RiskFlags {
                    high_substitution: distribution[0] > 0.5,
                    high_complementarity: distribution[1] > 0.5,
                    safe: distribution[2] > 0.5,
                },
            }
        })
        .collect())
}

/// Renders `100·num/den` to one decimal place, rounding half away from zero.
pub fn render_percent(numerator: usize, denominator: usize) -> String {
    if denominator == 0 {
        return "0.0%".to_string();
    }
    let pct = 100.0 * numerator as f64 / denominator as f64;
    format!("{:.1}%", (pct * 10.0).round() / 10.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlagStat {
    pub count: usize,
    pub percent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaskClassTotals {
    pub substitution: usize,
    pub complementarity: usize,
    pub negligibility: usize,
}

/// Corpus-level occupation summary: flag counts with rendered percentages
/// plus total task-class counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub n_occupations: usize,
    pub n_tasks: usize,
    pub task_class_counts: TaskClassTotals,
    pub high_substitution: FlagStat,
    pub high_complementarity: FlagStat,
    pub safe: FlagStat,
    pub no_majority: FlagStat,
}

pub fn summarize(profiles: &[OccupationProfile]) -> Result<Summary, AggregateError> {
    if profiles.is_empty() {
        return Err(AggregateError::Empty);
    }
    let n_occupations = profiles.len();
    let mut totals = ClassCounts::default();
    let mut n_tasks = 0usize;
    let (mut high_sub, mut high_comp, mut safe) = (0usize, 0usize, 0usize);
    for p in profiles {
        n_tasks += p.n_tasks;
        for class in ALL_CLASSES {
            totals.set(class, totals.get(class) + p.class_counts.get(class));
        }
        high_sub += p.flags.high_substitution as usize;
        high_comp += p.flags.high_complementarity as usize;
        safe += p.flags.safe as usize;
    }
    let no_majority = n_occupations - high_sub - high_comp - safe;
    let stat = |count: usize| FlagStat {
        count,
        percent: render_percent(count, n_occupations),
    };
    Ok(Summary {
        n_occupations,
        n_tasks,
        task_class_counts: TaskClassTotals {
            substitution: totals.get(ClassLabel::Substitution),
            complementarity: totals.get(ClassLabel::Complementarity),
            negligibility: totals.get(ClassLabel::Negligibility),
        },
        high_substitution: stat(high_sub),
        high_complementarity: stat(high_comp),
        safe: stat(safe),
        no_majority: stat(no_majority),
    })
}

/// Per-industry rollup: the unweighted mean of member occupations'
/// distributions. Occupations belonging to several industries count in each.
#[derive(Debug, Clone, PartialEq)]
pub struct IndustryProfile {
    pub code: String,
    pub title: String,
    pub occupation_codes: Vec<String>,
    pub distribution: [f64; 3],
}

/// Full ranking orders over industries (codes), ties broken
/// lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndustryRankings {
    /// Most automatable first: substitution fraction descending.
    pub by_substitution: Vec<String>,
    /// Least automatable first: negligibility fraction descending.
    pub by_negligibility: Vec<String>,
}

pub fn industry_profiles(
    profiles: &[OccupationProfile],
    occupations: &OccupationMap,
    industries: &IndustryMap,
) -> Result<(Vec<IndustryProfile>, IndustryRankings), AggregateError> {
    let mut members: BTreeMap<&str, Vec<&OccupationProfile>> = BTreeMap::new();
    for profile in profiles {
        let info = occupations
            .get(&profile.code)
            .ok_or_else(|| AggregateError::UnknownOccupation(profile.code.clone()))?;
        for industry in &info.industry_codes {
            if !industries.contains_key(industry) {
                return Err(AggregateError::UnknownIndustry(industry.clone()));
            }
            members.entry(industry).or_default().push(profile);
        }
    }
    let result: Vec<IndustryProfile> = members
        .into_iter()
        .map(|(code, occs)| {
            let n = occs.len() as f64;
            let mut distribution = [0.0f64; 3];
            for occ in &occs {
                for (acc, v) in distribution.iter_mut().zip(&occ.distribution) {
                    *acc += v;
                }
            }
            for v in &mut distribution {
                *v /= n;
            }
            IndustryProfile {
                code: code.to_string(),
                title: industries[code].clone(),
                occupation_codes: occs.iter().map(|o| o.code.clone()).collect(),
                distribution,
            }
        })
        .collect();

    let rank = |class: ClassLabel| -> Vec<String> {
        let mut order: Vec<&IndustryProfile> = result.iter().collect();
        order.sort_by(|a, b| {
            b.distribution[class.index()]
                .partial_cmp(&a.distribution[class.index()])
                .unwrap()
                .then_with(|| a.code.cmp(&b.code))
        });
        order.into_iter().map(|p| p.code.clone()).collect()
    };
    let rankings = IndustryRankings {
        by_substitution: rank(ClassLabel::Substitution),
        by_negligibility: rank(ClassLabel::Negligibility),
    };
    Ok((result, rankings))
}

/// Occupation codes ordered by `distribution[class]` descending, ties
/// lexicographic.
pub fn rank_occupations(profiles: &[OccupationProfile], class: ClassLabel) -> Vec<String> {
    let mut order: Vec<&OccupationProfile> = profiles.iter().collect();
    order.sort_by(|a, b| {
        b.distribution[class.index()]
            .partial_cmp(&a.distribution[class.index()])
            .unwrap()
            .then_with(|| a.code.cmp(&b.code))
    });
    order.into_iter().map(|p| p.code.clone()).collect()
}

/// One `(task, term, mass)` row exported by the prediction stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionExport {
    pub task_id: String,
    pub term: String,
    pub mass: f64,
}

/// Per-class aggregation of attention mass over terms, descending, top `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermWeightTable {
    pub class: ClassLabel,
    pub entries: Vec<(String, f64)>,
}

pub fn term_weights(
    predictions: &[PredictionRecord],
    attention: &[AttentionExport],
    class: ClassLabel,
    top_k: usize,
) -> TermWeightTable {
    let predicted: BTreeMap<&str, ClassLabel> = predictions
        .iter()
        .map(|p| (p.task_id.as_str(), p.label))
        .collect();
    let mut masses: BTreeMap<&str, f64> = BTreeMap::new();
    for row in attention {
        if predicted.get(row.task_id.as_str()) == Some(&class) {
            *masses.entry(row.term.as_str()).or_insert(0.0) += row.mass;
        }
    }
    let mut entries: Vec<(String, f64)> = masses
        .into_iter()
        .map(|(t, m)| (t.to_string(), m))
        .collect();
    entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    entries.truncate(top_k);
    TermWeightTable { class, entries }
}

// ---------------------------------------------------------------------------
// CSV / JSON artifacts
// ---------------------------------------------------------------------------

fn csv_err(path: &Path, source: csv::Error) -> AggregateError {
    AggregateError::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AggregateError {
    AggregateError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_predictions_csv(
    path: &Path,
    records: &[PredictionRecord],
) -> Result<(), AggregateError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record([
        "task_id",
        "p_substitution",
        "p_complementarity",
        "p_negligibility",
        "label",
        "occupation_code",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in records {
        wtr.write_record([
            r.task_id.as_str(),
            &format!("{:.9}", r.probabilities[0]),
            &format!("{:.9}", r.probabilities[1]),
            &format!("{:.9}", r.probabilities[2]),
            r.label.as_str(),
            r.occupation_code.as_deref().unwrap_or(""),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<PredictionRecord>, AggregateError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let task_id = record.get(0).unwrap_or("").to_string();
        let parse = |i: usize| -> Result<f64, AggregateError> {
            record
                .get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| AggregateError::BadPrediction {
                    task_id: task_id.clone(),
                    message: e.to_string(),
                })
        };
        let probabilities = [parse(1)?, parse(2)?, parse(3)?];
        let label = ClassLabel::parse(record.get(4).unwrap_or("")).ok_or_else(|| {
            AggregateError::BadPrediction {
                task_id: task_id.clone(),
                message: "bad label".into(),
            }
        })?;
        let occ = record.get(5).unwrap_or("").trim();
        out.push(PredictionRecord {
            task_id,
            probabilities,
            label,
            occupation_code: if occ.is_empty() {
                None
            } else {
                Some(occ.to_string())
            },
        });
    }
    Ok(out)
}

pub fn write_attention_csv(path: &Path, rows: &[AttentionExport]) -> Result<(), AggregateError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record(["task_id", "term", "mass"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        wtr.write_record([r.task_id.as_str(), r.term.as_str(), &format!("{:.9}", r.mass)])
            .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

pub fn read_attention_csv(path: &Path) -> Result<Vec<AttentionExport>, AggregateError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let task_id = record.get(0).unwrap_or("").to_string();
        let mass = record
            .get(2)
            .unwrap_or("")
            .parse::<f64>()
            .map_err(|e| AggregateError::BadPrediction {
                task_id: task_id.clone(),
                message: e.to_string(),
            })?;
        out.push(AttentionExport {
            task_id,
            term: record.get(1).unwrap_or("").to_string(),
            mass,
        });
    }
    Ok(out)
}

pub fn write_occupation_profiles_csv(
    path: &Path,
    profiles: &[OccupationProfile],
) -> Result<(), AggregateError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record([
        "code",
        "title",
        "n_tasks",
        "substitution_fraction",
        "complementarity_fraction",
        "negligibility_fraction",
        "high_substitution",
        "high_complementarity",
        "safe",
    ])
    .map_err(|e| csv_err(path, e))?;
    for p in profiles {
        wtr.write_record([
            p.code.as_str(),
            p.title.as_str(),
            &p.n_tasks.to_string(),
            &format!("{:.6}", p.distribution[0]),
            &format!("{:.6}", p.distribution[1]),
            &format!("{:.6}", p.distribution[2]),
            &p.flags.high_substitution.to_string(),
            &p.flags.high_complementarity.to_string(),
            &p.flags.safe.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

pub fn write_industry_profiles_csv(
    path: &Path,
    profiles: &[IndustryProfile],
) -> Result<(), AggregateError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record([
        "code",
        "title",
        "n_occupations",
        "substitution_fraction",
        "complementarity_fraction",
        "negligibility_fraction",
    ])
    .map_err(|e| csv_err(path, e))?;
    for p in profiles {
        wtr.write_record([
            p.code.as_str(),
            p.title.as_str(),
            &p.occupation_codes.len().to_string(),
            &format!("{:.6}", p.distribution[0]),
            &format!("{:.6}", p.distribution[1]),
            &format!("{:.6}", p.distribution[2]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}

pub fn write_term_weights_csv(path: &Path, table: &TermWeightTable) -> Result<(), AggregateError> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    wtr.write_record(["term", "mass"])
        .map_err(|e| csv_err(path, e))?;
    for (term, mass) in &table.entries {
        wtr.write_record([term.as_str(), &format!("{:.9}", mass)])
            .map_err(|e| csv_err(path, e))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))
}
