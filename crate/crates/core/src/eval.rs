//! Per-class and averaged precision/recall/F1 over 3-class predictions.

use std::fmt;
use std::path::Path;

use crate::corpus::{ClassLabel, CorpusError, ALL_CLASSES};

/// 3×3 counts; rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[usize; 3]; 3],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[usize; 3]; 3]) -> Self {
        Self { counts }
    }

    pub fn from_pairs(pairs: &[(ClassLabel, ClassLabel)]) -> Self {
        let mut cm = Self::default();
        for (truth, predicted) in pairs {
            cm.counts[truth.index()][predicted.index()] += 1;
        }
        cm
    }

    pub fn count(&self, truth: ClassLabel, predicted: ClassLabel) -> usize {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn counts(&self) -> &[[usize; 3]; 3] {
        &self.counts
    }
}

/// Tallies (true, predicted) pairs.
pub fn confusion(pairs: &[(ClassLabel, ClassLabel)]) -> ConfusionMatrix {
    ConfusionMatrix::from_pairs(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True when a 0/0 was coerced to 0 for this class (no predictions or no
    /// true instances), so degenerate classes stay visible.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; 3],
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Support-weighted averages, for comparison with macro.
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Computes one-vs-rest precision/recall/F1 per class plus macro (unweighted)
/// and support-weighted averages. Any 0/0 is reported as 0 with the class
/// flagged degenerate.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let n = cm.total();
    let mut per_class = [ClassMetrics {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        degenerate: false,
    }; 3];
    let mut support = [0usize; 3];

    for class in ALL_CLASSES {
        let c = class.index();
        let tp = cm.counts[c][c];
        let fp: usize = (0..3).filter(|&r| r != c).map(|r| cm.counts[r][c]).sum();
        let fn_: usize = (0..3).filter(|&p| p != c).map(|p| cm.counts[c][p]).sum();
        support[c] = tp + fn_;

        let (precision, p_deg) = ratio(tp, tp + fp);
        let (recall, r_deg) = ratio(tp, tp + fn_);
        let (f1, f_deg) = if precision + recall == 0.0 {
            (0.0, true)
        } else {
            (2.0 * precision * recall / (precision + recall), false)
        };
        per_class[c] = ClassMetrics {
            precision,
            recall,
            f1,
            degenerate: p_deg || r_deg || f_deg,
        };
    }

    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_class
                .iter()
                .zip(&support)
                .map(|(m, &s)| f(m) * s as f64)
                .sum::<f64>()
                / n as f64
        }
    };
    let correct: usize = (0..3).map(|c| cm.counts[c][c]).sum();

    MetricsReport {
        per_class,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        accuracy: if n == 0 {
            0.0
        } else {
            correct as f64 / n as f64
        },
        n,
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>9} {:>9} {:>9}",
            "class", "precision", "recall", "f1"
        )?;
        for class in ALL_CLASSES {
            let m = &self.per_class[class.index()];
            writeln!(
                f,
                "{:<16} {:>9.4} {:>9.4} {:>9.4}{}",
                class.as_str(),
                m.precision,
                m.recall,
                m.f1,
                if m.degenerate { "  (degenerate)" } else { "" }
            )?;
        }
        writeln!(
            f,
            "{:<16} {:>9.4} {:>9.4} {:>9.4}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1
        )?;
        writeln!(
            f,
            "{:<16} {:>9.4} {:>9.4} {:>9.4}",
            "weighted", self.weighted_precision, self.weighted_recall, self.weighted_f1
        )?;
        write!(f, "accuracy {:.4} over n={}", self.accuracy, self.n)
    }
}

/// One row of `metrics.csv`; baselines reuse the same schema.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub model: String,
    pub dataset: String,
    pub split: String,
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsRow {
    pub fn from_report(model: &str, dataset: &str, split: &str, report: &MetricsReport) -> Vec<MetricsRow> {
        let mut rows = Vec::with_capacity(4);
        for class in ALL_CLASSES {
            let m = &report.per_class[class.index()];
            rows.push(MetricsRow {
                model: model.into(),
                dataset: dataset.into(),
                split: split.into(),
                class: class.as_str().into(),
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
            });
        }
        rows.push(MetricsRow {
            model: model.into(),
            dataset: dataset.into(),
            split: split.into(),
            class: "macro".into(),
            precision: report.macro_precision,
            recall: report.macro_recall,
            f1: report.macro_f1,
        });
        rows
    }
}

/// Appends rows to `metrics.csv`, writing the header when the file is new.
pub fn append_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<(), CorpusError> {
    let exists = path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| CorpusError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    let mut wtr = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| CorpusError::Csv {
        path: path.display().to_string(),
        source: e,
    };
    if !exists {
        wtr.write_record(["model", "dataset", "split", "class", "precision", "recall", "f1"])
            .map_err(csv_err)?;
    }
    for row in rows {
        wtr.write_record([
            row.model.as_str(),
            row.dataset.as_str(),
            row.split.as_str(),
            row.class.as_str(),
            &format!("{:.6}", row.precision),
            &format!("{:.6}", row.recall),
            &format!("{:.6}", row.f1),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
