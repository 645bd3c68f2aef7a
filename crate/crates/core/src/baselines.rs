//! Sanity baselines: TF-IDF + multinomial logistic regression, and the
//! majority-class floor.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::{ClassLabel, ALL_CLASSES};
use crate::tensor::Tensor2D;
use crate::text::alnum_tokens;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("cannot fit on an empty corpus")]
    EmptyCorpus,
    #[error("class {0} has no training examples")]
    MissingClass(ClassLabel),
}

/// Sorted sparse vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn zero() -> Self {
        Self {
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }
}

/// Unigram TF-IDF featurizer with smoothed idf
/// `ln((1+N)/(1+df)) + 1`; transforms are L2-normalized.
#[derive(Debug, Clone)]
pub struct TfidfVectorizer {
    vocabulary: BTreeMap<String, usize>,
    idf: Vec<f64>,
    n_docs: usize,
}

/// Builds the vocabulary and idf table. Fit on training texts only.
pub fn fit_tfidf(texts: &[String]) -> Result<TfidfVectorizer, BaselineError> {
    if texts.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        let mut seen: Vec<String> = alnum_tokens(text);
        seen.sort();
        seen.dedup();
        for term in seen {
            *df.entry(term).or_insert(0) += 1;
        }
    }
    if df.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let n_docs = texts.len();
    let vocabulary: BTreeMap<String, usize> = df
        .keys()
        .enumerate()
        .map(|(i, term)| (term.clone(), i))
        .collect();
    let mut idf = vec![0.0; vocabulary.len()];
    for (term, &count) in &df {
        idf[vocabulary[term]] = ((1 + n_docs) as f64 / (1 + count) as f64).ln() + 1.0;
    }
    Ok(TfidfVectorizer {
        vocabulary,
        idf,
        n_docs,
    })
}

impl TfidfVectorizer {
    pub fn n_terms(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn idf_of(&self, term: &str) -> Option<f64> {
        self.vocabulary.get(term).map(|&i| self.idf[i])
    }

    /// TF·IDF with L2 normalization; texts of entirely unseen terms map to
    /// the zero vector.
    pub fn transform(&self, text: &str) -> SparseVec {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for term in alnum_tokens(text) {
            if let Some(&idx) = self.vocabulary.get(&term) {
                *tf.entry(idx).or_insert(0.0) += 1.0;
            }
        }
        let mut vec = SparseVec {
            indices: Vec::with_capacity(tf.len()),
            values: Vec::with_capacity(tf.len()),
        };
        for (idx, count) in tf {
            vec.indices.push(idx);
            vec.values.push(count * self.idf[idx]);
        }
        let norm = vec.l2_norm();
        if norm > 0.0 {
            for v in &mut vec.values {
                *v /= norm;
            }
        }
        vec
    }
}

#[derive(Debug, Clone)]
pub struct LogisticConfig {
    pub l2_lambda: f64,
    pub max_iters: usize,
    pub grad_tolerance: f64,
    pub step_size: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 0.0,
            max_iters: 5000,
            grad_tolerance: 1e-6,
            step_size: 1.0,
        }
    }
}

/// Multinomial logistic regression over sparse features.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    w: Tensor2D,
    b: [f64; 3],
    pub l2_lambda: f64,
}

impl LogisticModel {
    pub fn predict(&self, x: &SparseVec) -> [f64; 3] {
        let mut z = self.b;
        for (idx, v) in x.iter() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += v * self.w.get(idx, c);
            }
        }
        crate::model::softmax(&z)
    }

    pub fn predict_label(&self, x: &SparseVec) -> ClassLabel {
        let p = self.predict(x);
        let mut best = 0;
        for c in 1..3 {
            if p[c] > p[best] {
                best = c;
            }
        }
        ClassLabel::from_index(best).expect("class index")
    }

    pub fn weight_norm(&self) -> f64 {
        self.w.squared_sum().sqrt()
    }
}

struct LogisticState {
    w: Tensor2D,
    b: [f64; 3],
}

fn logistic_loss_and_grads(
    state: &LogisticState,
    xs: &[SparseVec],
    ys: &[ClassLabel],
    lambda: f64,
) -> (f64, Tensor2D, [f64; 3]) {
    let n = xs.len() as f64;
    let mut grad_w = Tensor2D::zeros(state.w.rows(), 3);
    let mut grad_b = [0.0f64; 3];
    let mut loss = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut z = state.b;
        for (idx, v) in x.iter() {
            for (c, zc) in z.iter_mut().enumerate() {
                *zc += v * state.w.get(idx, c);
            }
        }
        let p = crate::model::softmax(&z);
        loss -= p[y.index()].max(1e-12).ln();
        for c in 0..3 {
            let delta = (p[c] - if c == y.index() { 1.0 } else { 0.0 }) / n;
            grad_b[c] += delta;
            for (idx, v) in x.iter() {
                let cur = grad_w.get(idx, c);
                grad_w.set(idx, c, cur + v * delta);
            }
        }
    }
    loss /= n;
    loss += lambda * state.w.squared_sum();
    for i in 0..grad_w.rows() {
        for c in 0..3 {
            let cur = grad_w.get(i, c);
            grad_w.set(i, c, cur + 2.0 * lambda * state.w.get(i, c));
        }
    }
    (loss, grad_w, grad_b)
}

/// Full-batch gradient descent on L2-regularized multinomial cross-entropy,
/// with step halving whenever a step would increase the loss. Stops when the
/// gradient norm drops below tolerance or after `max_iters`.
pub fn fit_logistic(
    xs: &[SparseVec],
    ys: &[ClassLabel],
    n_terms: usize,
    config: &LogisticConfig,
) -> Result<LogisticModel, BaselineError> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(BaselineError::EmptyCorpus);
    }
    for class in ALL_CLASSES {
        if !ys.contains(&class) {
            return Err(BaselineError::MissingClass(class));
        }
    }

    let mut state = LogisticState {
        w: Tensor2D::zeros(n_terms, 3),
        b: [0.0; 3],
    };
    let mut step = config.step_size;
    let (mut loss, mut grad_w, mut grad_b) =
        logistic_loss_and_grads(&state, xs, ys, config.l2_lambda);

    for _ in 0..config.max_iters {
        let grad_norm = (grad_w.squared_sum() + grad_b.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if grad_norm < config.grad_tolerance {
            break;
        }
        let mut accepted = false;
        while step > 1e-12 {
            let mut candidate = LogisticState {
                w: state.w.clone(),
                b: state.b,
            };
            for i in 0..candidate.w.rows() {
                for c in 0..3 {
                    let v = candidate.w.get(i, c) - step * grad_w.get(i, c);
                    candidate.w.set(i, c, v);
                }
            }
            for c in 0..3 {
                candidate.b[c] -= step * grad_b[c];
            }
            let (cand_loss, cand_gw, cand_gb) =
                logistic_loss_and_grads(&candidate, xs, ys, config.l2_lambda);
            if cand_loss <= loss {
                state = candidate;
                loss = cand_loss;
                grad_w = cand_gw;
                grad_b = cand_gb;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(LogisticModel {
        w: state.w,
        b: state.b,
        l2_lambda: config.l2_lambda,
    })
}

/// Constant predictor of the most frequent training class (ties broken by
/// class order S < C < N).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MajorityBaseline {
    pub label: ClassLabel,
}

pub fn majority_baseline(labels: &[ClassLabel]) -> Result<MajorityBaseline, BaselineError> {
    if labels.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let mut best = ClassLabel::Substitution;
    for class in ALL_CLASSES {
        if counts[class.index()] > counts[best.index()] {
            best = class;
        }
    }
    Ok(MajorityBaseline { label: best })
}

impl MajorityBaseline {
    pub fn predict(&self) -> ClassLabel {
        self.label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{Complementarity as C, Negligibility as N, Substitution as S};

    fn texts(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn idf_matches_hand_evaluation() {
        // corpus ["a b", "a"]: df(a) = 2, df(b) = 1, N = 2.
        let v = fit_tfidf(&texts(&["a b", "a"])).unwrap();
        assert!((v.idf_of("a").unwrap() - 1.0).abs() < 1e-12);
        assert!((v.idf_of("b").unwrap() - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-12);
        assert_eq!(v.n_docs(), 2);
    }

    #[test]
    fn unseen_terms_transform_to_zero_vector() {
        let v = fit_tfidf(&texts(&["a b", "a"])).unwrap();
        let x = v.transform("zzz");
        assert_eq!(x.nnz(), 0);
        assert_eq!(x.l2_norm(), 0.0);
    }

    #[test]
    fn single_known_term_normalizes_to_one() {
        let v = fit_tfidf(&texts(&["a b", "a"])).unwrap();
        let x = v.transform("a");
        assert_eq!(x.nnz(), 1);
        assert!((x.values[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_norm_is_one_or_zero() {
        let v = fit_tfidf(&texts(&["record data", "file reports", "record reports"])).unwrap();
        for text in ["record data now", "file", "unrelated words only"] {
            let n = v.transform(text).l2_norm();
            assert!(n.abs() < 1e-12 || (n - 1.0).abs() < 1e-12, "norm {n}");
        }
    }

    #[test]
    fn transform_is_document_order_independent() {
        let v1 = fit_tfidf(&texts(&["a b", "b c", "c a"])).unwrap();
        let v2 = fit_tfidf(&texts(&["c a", "a b", "b c"])).unwrap();
        assert_eq!(v1.transform("a b c"), v2.transform("a b c"));
    }

    fn separable_toy() -> (Vec<SparseVec>, Vec<ClassLabel>, TfidfVectorizer) {
        let corpus = texts(&[
            "machinery shift one",
            "machinery shift two",
            "customers desk one",
            "customers desk two",
            "therapy room one",
            "therapy room two",
        ]);
        let labels = vec![S, S, C, C, N, N];
        let v = fit_tfidf(&corpus).unwrap();
        let xs = corpus.iter().map(|t| v.transform(t)).collect();
        (xs, labels, v)
    }

    #[test]
    fn separable_toy_set_reaches_full_accuracy() {
        // Separability: each class has a marker term absent from the others,
        // so by enumeration a linear rule keyed on that term classifies all.
        let (xs, ys, v) = separable_toy();
        let model = fit_logistic(&xs, &ys, v.n_terms(), &LogisticConfig::default()).unwrap();
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, y)| model.predict_label(x) == **y)
            .count();
        assert_eq!(correct, xs.len());
    }

    #[test]
    fn zero_vector_predicts_bias_softmax() {
        let (xs, ys, v) = separable_toy();
        let model = fit_logistic(&xs, &ys, v.n_terms(), &LogisticConfig::default()).unwrap();
        let p = model.predict(&SparseVec::zero());
        let expected = crate::model::softmax(&model.b);
        for (a, b) in p.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn huge_lambda_shrinks_weights() {
        let (xs, ys, v) = separable_toy();
        let free = fit_logistic(&xs, &ys, v.n_terms(), &LogisticConfig::default()).unwrap();
        let shrunk = fit_logistic(
            &xs,
            &ys,
            v.n_terms(),
            &LogisticConfig {
                l2_lambda: 1e6,
                ..LogisticConfig::default()
            },
        )
        .unwrap();
        assert!(shrunk.weight_norm() < 1e-2, "norm {}", shrunk.weight_norm());
        assert!(shrunk.weight_norm() < free.weight_norm());
    }

    #[test]
    fn loss_is_non_increasing_over_iterations() {
        let (xs, ys, v) = separable_toy();
        // Re-run the descent manually and record the accepted losses.
        let mut state = LogisticState {
            w: Tensor2D::zeros(v.n_terms(), 3),
            b: [0.0; 3],
        };
        let mut step = 1.0;
        let (mut loss, mut gw, mut gb) = logistic_loss_and_grads(&state, &xs, &ys, 0.0);
        let mut losses = vec![loss];
        for _ in 0..200 {
            let mut accepted = false;
            while step > 1e-12 {
                let mut cand = LogisticState {
                    w: state.w.clone(),
                    b: state.b,
                };
                for i in 0..cand.w.rows() {
                    for c in 0..3 {
                        let v = cand.w.get(i, c) - step * gw.get(i, c);
                        cand.w.set(i, c, v);
                    }
                }
                for c in 0..3 {
                    cand.b[c] -= step * gb[c];
                }
                let (l2, g2w, g2b) = logistic_loss_and_grads(&cand, &xs, &ys, 0.0);
                if l2 <= loss {
                    state = cand;
                    loss = l2;
                    gw = g2w;
                    gb = g2b;
                    accepted = true;
                    break;
                }
                step /= 2.0;
            }
            if !accepted {
                break;
            }
            losses.push(loss);
        }
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
    }

    #[test]
    fn missing_class_is_rejected() {
        let (xs, _, v) = separable_toy();
        let ys = vec![S, S, C, C, C, C];
        assert!(matches!(
            fit_logistic(&xs, &ys, v.n_terms(), &LogisticConfig::default()),
            Err(BaselineError::MissingClass(N))
        ));
    }

    #[test]
    fn majority_counts_and_tie_break() {
        let labels = [vec![S; 5], vec![C; 3], vec![N; 2]].concat();
        assert_eq!(majority_baseline(&labels).unwrap().predict(), S);
        let tied = [vec![S; 3], vec![C; 3], vec![N; 1]].concat();
        assert_eq!(majority_baseline(&tied).unwrap().predict(), S);
        let c_wins = [vec![S; 1], vec![C; 3], vec![N; 2]].concat();
        assert_eq!(majority_baseline(&c_wins).unwrap().predict(), C);
    }

    #[test]
    fn majority_training_accuracy_equals_max_frequency() {
        let labels = [vec![S; 6], vec![C; 3], vec![N; 1]].concat();
        let model = majority_baseline(&labels).unwrap();
        let correct = labels.iter().filter(|l| **l == model.predict()).count();
        assert_eq!(correct as f64 / labels.len() as f64, 0.6);
    }
}
