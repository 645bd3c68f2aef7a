//! Python bindings: the tokenizer, encoder, attention math, vote
//! resolution, paraphrase validation, and evaluation metrics, importable as
//! `taskauto`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use taskauto_core::aggregate::render_percent;
use taskauto_core::augment::{
    validate_paraphrase as core_validate, MockProvider, ParaphraseRequest, ProviderClient,
};
use taskauto_core::corpus::{ClassLabel, VoteRecord};
use taskauto_core::eval::{confusion, metrics};
use taskauto_core::model::{
    attention as core_attention, cross_entropy as core_cross_entropy, extract_attention,
    load_checkpoint, softmax as core_softmax, ModelConfig, ModelParams,
};
use taskauto_core::tensor::Tensor2D;
use taskauto_core::tokenizer::{
    build_vocab, decode as core_decode, encode as core_encode,
    Vocabulary as CoreVocabulary,
};
use taskauto_core::train::gradient_check as core_gradient_check;

fn value_err(err: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn parse_label(s: &str) -> PyResult<ClassLabel> {
    ClassLabel::parse(s).ok_or_else(|| value_err(format!("unknown class label `{s}`")))
}

fn tensor_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Tensor2D> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(value_err(format!("{what} must be a non-empty 2D list")));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(value_err(format!("{what} rows have inconsistent lengths")));
    }
    Ok(Tensor2D::from_rows(&rows))
}

type Rows = Vec<Vec<f64>>;

fn tensor_to_rows(t: &Tensor2D) -> Rows {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

/// Subword vocabulary with WordPiece-style greedy encoding.
#[pyclass(name = "Vocabulary")]
struct PyVocabulary {
    inner: CoreVocabulary,
}

#[pymethods]
impl PyVocabulary {
    /// Build from training texts.
    #[staticmethod]
    #[pyo3(signature = (texts, max_size=2000, min_freq=1))]
    fn build(texts: Vec<String>, max_size: usize, min_freq: usize) -> PyResult<Self> {
        Ok(Self {
            inner: build_vocab(&texts, max_size, min_freq).map_err(value_err)?,
        })
    }

    /// Load a `vocab.txt` written by `save` or the CLI.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreVocabulary::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner
            .save(&path)
            .map_err(|e| PyIOError::new_err(e.to_string()))
    }

    /// Encode to `(ids, mask, true_length)`.
    #[pyo3(signature = (text, max_len=64))]
    fn encode(&self, text: &str, max_len: usize) -> PyResult<(Vec<u32>, Vec<u8>, usize)> {
        if max_len < 3 {
            return Err(value_err("max_len must be at least 3"));
        }
        let seq = core_encode(text, &self.inner, max_len);
        Ok((seq.ids, seq.mask, seq.true_length))
    }

    fn decode(&self, ids: Vec<u32>) -> String {
        core_decode(&ids, &self.inner)
    }

    fn id_of(&self, token: &str) -> Option<u32> {
        self.inner.id_of(token)
    }

    fn token_of(&self, id: u32) -> Option<String> {
        self.inner.token_of(id).map(str::to_string)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A trained encoder checkpoint plus its vocabulary.
#[pyclass(name = "Classifier")]
struct PyClassifier {
    params: ModelParams,
    vocab: CoreVocabulary,
}

#[pymethods]
impl PyClassifier {
    /// Load `ckpt.json` (with its sibling `.bin`) and `vocab.txt`.
    #[staticmethod]
    fn load(checkpoint: PathBuf, vocab: PathBuf) -> PyResult<Self> {
        let (params, _) =
            load_checkpoint(&checkpoint).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let vocab =
            CoreVocabulary::load(&vocab).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self { params, vocab })
    }

    /// Classify one task statement. Returns a dict with `probabilities`,
    /// `label`, and per-term attention `terms`.
    fn predict<'py>(&self, py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
        let seq = core_encode(text, &self.vocab, self.params.config.max_len);
        let trace = self.params.forward(&seq).map_err(value_err)?;
        let out = PyDict::new(py);
        out.set_item("probabilities", trace.probabilities.to_vec())?;
        out.set_item("label", trace.predicted().as_str())?;
        out.set_item("terms", extract_attention(&trace, &seq, &self.vocab))?;
        Ok(out)
    }

    /// Model hyperparameters.
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let c: &ModelConfig = &self.params.config;
        let out = PyDict::new(py);
        out.set_item("vocab_size", c.vocab_size)?;
        out.set_item("max_len", c.max_len)?;
        out.set_item("d_model", c.d_model)?;
        out.set_item("n_heads", c.n_heads)?;
        out.set_item("n_layers", c.n_layers)?;
        out.set_item("d_ff", c.d_ff)?;
        out.set_item("dropout_rate", c.dropout_rate)?;
        Ok(out)
    }
}

/// Scaled dot-product attention; returns `(output, weights)`.
#[pyfunction]
fn attention(q: Rows, k: Rows, v: Rows, mask: Vec<u8>) -> PyResult<(Rows, Rows)> {
    let q = tensor_from_rows(q, "q")?;
    let k = tensor_from_rows(k, "k")?;
    let v = tensor_from_rows(v, "v")?;
    let (output, weights) = core_attention(&q, &k, &v, &mask).map_err(value_err)?;
    Ok((tensor_to_rows(&output), tensor_to_rows(&weights)))
}

/// Class probabilities from three logits.
#[pyfunction]
fn softmax(logits: [f64; 3]) -> [f64; 3] {
    core_softmax(&logits)
}

/// `-ln p(true class)` with the probability floored at 1e-12.
#[pyfunction]
fn cross_entropy(probabilities: [f64; 3], label: &str) -> PyResult<f64> {
    Ok(core_cross_entropy(&probabilities, parse_label(label)?))
}

/// Consensus of five expert votes, or `None` when no class reaches the
/// threshold.
#[pyfunction]
#[pyo3(signature = (votes, threshold=4))]
fn resolve_votes(votes: Vec<String>, threshold: u32) -> PyResult<Option<&'static str>> {
    let parsed: Vec<ClassLabel> = votes
        .iter()
        .map(|v| parse_label(v))
        .collect::<PyResult<_>>()?;
    let array: [ClassLabel; 5] = parsed
        .try_into()
        .map_err(|_| value_err("exactly five votes are required"))?;
    let record = VoteRecord {
        task_id: String::new(),
        votes: array,
    };
    Ok(taskauto_core::corpus::resolve_votes(&record, threshold)
        .map_err(value_err)?
        .map(ClassLabel::as_str))
}

/// TF-cosine validation verdict as `(accepted, similarity, reason)`.
#[pyfunction]
#[pyo3(signature = (original, candidate, floor=0.5))]
fn validate_paraphrase(
    original: &str,
    candidate: &str,
    floor: f64,
) -> (bool, f64, Option<String>) {
    let verdict = core_validate(original, candidate, floor);
    (verdict.accepted, verdict.similarity, verdict.reason)
}

/// Deterministic offline paraphrases from the rule-based mock provider.
#[pyfunction]
#[pyo3(signature = (text, n_variants=3, seed=0))]
fn mock_paraphrase(text: &str, n_variants: usize, seed: u64) -> PyResult<Vec<String>> {
    let req = ParaphraseRequest::new(text, n_variants, 0.7).map_err(value_err)?;
    MockProvider::new(seed).paraphrase(&req).map_err(value_err)
}

/// Precision/recall/F1 from `(true, predicted)` label pairs.
#[pyfunction]
fn metrics_from_pairs<'py>(
    py: Python<'py>,
    pairs: Vec<(String, String)>,
) -> PyResult<Bound<'py, PyDict>> {
    let parsed: Vec<(ClassLabel, ClassLabel)> = pairs
        .iter()
        .map(|(t, p)| Ok((parse_label(t)?, parse_label(p)?)))
        .collect::<PyResult<_>>()?;
    let report = metrics(&confusion(&parsed));
    let out = PyDict::new(py);
    for class in taskauto_core::corpus::ALL_CLASSES {
        let m = &report.per_class[class.index()];
        let entry = PyDict::new(py);
        entry.set_item("precision", m.precision)?;
        entry.set_item("recall", m.recall)?;
        entry.set_item("f1", m.f1)?;
        out.set_item(class.as_str(), entry)?;
    }
    out.set_item("macro_precision", report.macro_precision)?;
    out.set_item("macro_recall", report.macro_recall)?;
    out.set_item("macro_f1", report.macro_f1)?;
    out.set_item("weighted_precision", report.weighted_precision)?;
    out.set_item("weighted_recall", report.weighted_recall)?;
    out.set_item("weighted_f1", report.weighted_f1)?;
    out.set_item("accuracy", report.accuracy)?;
    out.set_item("n", report.n)?;
    Ok(out)
}

/// Verify analytic gradients against central finite differences on a tiny
/// model; returns `{tensor name: max relative error}`.
#[pyfunction]
#[pyo3(signature = (seed=0, dropout_rate=0.1, tolerance=1e-6))]
fn gradient_check<'py>(
    py: Python<'py>,
    seed: u64,
    dropout_rate: f64,
    tolerance: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let config = ModelConfig {
        vocab_size: 16,
        max_len: 8,
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        dropout_rate,
    };
    let report = core_gradient_check(&config, seed, tolerance).map_err(value_err)?;
    let out = PyDict::new(py);
    for tensor in &report.tensors {
        out.set_item(&tensor.name, tensor.max_rel_error)?;
    }
    out.set_item("pass", report.pass())?;
    Ok(out)
}

/// Percentage rendered to one decimal, half away from zero (e.g. 244/974
/// gives "25.1%").
#[pyfunction]
fn percent(numerator: usize, denominator: usize) -> String {
    render_percent(numerator, denominator)
}

#[pymodule]
fn taskauto(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(attention, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_votes, m)?)?;
    m.add_function(wrap_pyfunction!(validate_paraphrase, m)?)?;
    m.add_function(wrap_pyfunction!(mock_paraphrase, m)?)?;
    m.add_function(wrap_pyfunction!(metrics_from_pairs, m)?)?;
    m.add_function(wrap_pyfunction!(gradient_check, m)?)?;
    m.add_function(wrap_pyfunction!(percent, m)?)?;
    Ok(())
}
