//! Paraphrase providers: the HTTP JSON client and the deterministic
//! rule-based mock used offline.

use std::collections::BTreeSet;
use std::time::Duration;

use super::AugmentError;

/// One paraphrase call.
#[derive(Debug, Clone, PartialEq)]
pub struct ParaphraseRequest {
    pub source_text: String,
    pub n_variants: usize,
    pub temperature: f64,
}

impl ParaphraseRequest {
    pub fn new(source_text: &str, n_variants: usize, temperature: f64) -> Result<Self, AugmentError> {
        if source_text.trim().is_empty() {
            return Err(AugmentError::BadRequest("source_text is empty".into()));
        }
        if n_variants == 0 {
            return Err(AugmentError::BadRequest("n_variants must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&temperature) {
            return Err(AugmentError::BadRequest(format!(
                "temperature {temperature} outside [0, 2]"
            )));
        }
        Ok(Self {
            source_text: source_text.to_string(),
            n_variants,
            temperature,
        })
    }
}

/// Anything that can paraphrase a task statement.
pub trait ProviderClient {
    /// Returns up to `n_variants` paraphrases, each non-empty and none
    /// byte-identical to the source.
    fn paraphrase(&self, req: &ParaphraseRequest) -> Result<Vec<String>, AugmentError>;
}

// ---------------------------------------------------------------------------
// Deterministic mock
// ---------------------------------------------------------------------------

/// Verb/noun substitution table. The first alternative is the preferred
/// rewrite; later variants cycle through the rest and finally keep the
/// original word.
const SYNONYMS: &[(&str, &[&str])] = &[
    ("aids", &["elements", "tools", "devices"]),
    ("analyze", &["assess", "evaluate", "study"]),
    ("assist", &["help", "support", "aid"]),
    ("charts", &["diagrams", "chart visuals"]),
    ("clean", &["sanitize", "wash", "scrub"]),
    ("data", &["information", "figures", "measurements"]),
    ("develop", &["design", "build", "formulate"]),
    ("documenting", &["recording", "logging", "noting"]),
    ("equipment", &["apparatus", "gear", "hardware"]),
    ("examining", &["scrutinizing", "reviewing", "inspecting"]),
    ("generate", &["create", "produce", "compose"]),
    ("graphs", &["plots", "figures"]),
    ("inspect", &["examine", "check", "review"]),
    ("maintain", &["service", "preserve", "keep up"]),
    ("monitor", &["observe", "track", "watch"]),
    ("operate", &["run", "control", "handle"]),
    ("perform", &["execute", "conduct", "complete"]),
    ("prepare", &["draft", "assemble", "arrange"]),
    ("provide", &["supply", "deliver", "offer"]),
    ("record", &["log", "register", "document"]),
    ("records", &["logs", "registers", "documents"]),
    ("repair", &["fix", "mend", "restore"]),
    ("review", &["evaluate", "assess", "examine"]),
    ("schedule", &["plan", "arrange", "organize"]),
    ("teach", &["instruct", "educate", "coach"]),
    ("utilizing", &["that incorporate", "employing", "applying"]),
];

fn lookup(word: &str) -> Option<&'static [&'static str]> {
    SYNONYMS
        .binary_search_by(|(k, _)| k.cmp(&word))
        .ok()
        .map(|i| SYNONYMS[i].1)
}

/// Offline paraphraser: synonym substitution plus clause reordering, fully
/// determined by `(seed, request)`.
#[derive(Debug, Clone)]
pub struct MockProvider {
    seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Variant `v` replaces each table word with its `v`-th alternative
    /// (cycling back to the original spelling on the last index).
    fn substitute(text: &str, variant: usize) -> String {
        let mut out: Vec<String> = Vec::new();
        for word in text.split_whitespace() {
            let trailing: String = word
                .chars()
                .rev()
                .take_while(|c| !c.is_alphanumeric())
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            let core = &word[..word.len() - trailing.len()];
            let lower = core.to_lowercase();
            let replaced = match lookup(lower.as_str()) {
                Some(alternatives) => {
                    let idx = variant % (alternatives.len() + 1);
                    if idx == alternatives.len() {
                        core.to_string()
                    } else {
                        let alt = alternatives[idx];
                        if core.chars().next().is_some_and(char::is_uppercase) {
                            capitalize(alt)
                        } else {
                            alt.to_string()
                        }
                    }
                }
                None => core.to_string(),
            };
            out.push(format!("{replaced}{trailing}"));
        }
        out.join(" ")
    }

    /// Clause reordering: rotate comma clauses when present, words otherwise.
    fn rotate(text: &str, by: usize) -> String {
        let clauses: Vec<&str> = text.split(", ").collect();
        if clauses.len() >= 2 {
            let by = by % clauses.len();
            let mut rotated: Vec<&str> = clauses[by..].to_vec();
            rotated.extend_from_slice(&clauses[..by]);
            rotated.join(", ")
        } else {
            let words: Vec<&str> = text.split_whitespace().collect();
            if words.len() < 2 {
                return text.to_string();
            }
            let by = by % words.len();
            let mut rotated: Vec<&str> = words[by..].to_vec();
            rotated.extend_from_slice(&words[..by]);
            rotated.join(" ")
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

impl ProviderClient for MockProvider {
    fn paraphrase(&self, req: &ParaphraseRequest) -> Result<Vec<String>, AugmentError> {
        let source = req.source_text.as_str();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        seen.insert(source.to_string());
        let mut out = Vec::new();

        for v in 0..req.n_variants + 8 {
            if out.len() == req.n_variants {
                break;
            }
            let candidate = Self::substitute(source, v);
            if !candidate.is_empty() && seen.insert(candidate.clone()) {
                out.push(candidate);
            }
        }

        let units = source.split_whitespace().count().max(1);
        for k in 0..units.saturating_sub(1) {
            if out.len() == req.n_variants {
                break;
            }
            let by = 1 + (k + self.seed as usize) % (units - 1).max(1);
            let candidate = Self::rotate(source, by);
            if !candidate.is_empty() && seen.insert(candidate.clone()) {
                out.push(candidate);
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// HTTP provider
// ---------------------------------------------------------------------------

/// Chat-completion-style HTTP paraphraser.
///
/// Contract: `POST` JSON `{"text": …, "n": …, "temperature": …}` and expect
/// `{"variants": ["…", …]}` back. Transport and status failures are
/// retryable `ProviderUnavailable`; a non-conforming payload is
/// `MalformedResponse`.
pub struct HttpProvider {
    url: String,
    token: Option<String>,
    retries: u32,
    agent: ureq::Agent,
}

impl HttpProvider {
    pub fn new(url: &str, token: Option<String>, timeout: Duration, retries: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build();
        Self {
            url: url.to_string(),
            token,
            retries,
            agent: config.into(),
        }
    }

    fn call_once(&self, req: &ParaphraseRequest) -> Result<Vec<String>, AugmentError> {
        let payload = serde_json::json!({
            "text": req.source_text,
            "n": req.n_variants,
            "temperature": req.temperature,
        });
        let mut request = self.agent.post(&self.url);
        if let Some(token) = &self.token {
            request = request.header("authorization", &format!("Bearer {token}"));
        }
        let mut response = request
            .send_json(&payload)
            .map_err(|e| AugmentError::ProviderUnavailable(e.to_string()))?;
        let body: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| AugmentError::MalformedResponse(e.to_string()))?;
        let variants = body
            .get("variants")
            .and_then(|v| v.as_array())
            .ok_or_else(|| {
                AugmentError::MalformedResponse("missing `variants` array".into())
            })?;
        let mut out = Vec::with_capacity(variants.len());
        for v in variants {
            let s = v.as_str().ok_or_else(|| {
                AugmentError::MalformedResponse("non-string entry in `variants`".into())
            })?;
            if !s.is_empty() && s != req.source_text {
                out.push(s.to_string());
            }
        }
        Ok(out)
    }
}

impl ProviderClient for HttpProvider {
    fn paraphrase(&self, req: &ParaphraseRequest) -> Result<Vec<String>, AugmentError> {
        let mut last = None;
        for _ in 0..=self.retries {
            match self.call_once(req) {
                Ok(v) => return Ok(v),
                Err(AugmentError::ProviderUnavailable(msg)) => {
                    last = Some(AugmentError::ProviderUnavailable(msg));
                }
                Err(fatal) => return Err(fatal),
            }
        }
        Err(last.unwrap_or_else(|| AugmentError::ProviderUnavailable("no attempt made".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synonym_table_is_sorted_for_binary_search() {
        for pair in SYNONYMS.windows(2) {
            assert!(pair[0].0 < pair[1].0, "{} !< {}", pair[0].0, pair[1].0);
        }
    }

    #[test]
    fn first_variant_follows_preferred_rewrites() {
        let source = "Generate reports utilizing visual aids such as charts, graphs, and \
                      narratives by examining and documenting test data.";
        let provider = MockProvider::new(0);
        let req = ParaphraseRequest::new(source, 1, 0.7).unwrap();
        let variants = provider.paraphrase(&req).unwrap();
        assert!(
            variants[0].starts_with("Create reports that incorporate visual elements"),
            "got: {}",
            variants[0]
        );
    }

    #[test]
    fn mock_is_deterministic_per_seed() {
        let provider = MockProvider::new(9);
        let req = ParaphraseRequest::new("Record test data for the laboratory", 4, 0.7).unwrap();
        let a = provider.paraphrase(&req).unwrap();
        let b = provider.paraphrase(&req).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mock_yields_requested_number_of_distinct_variants() {
        let provider = MockProvider::new(0);
        let req = ParaphraseRequest::new("Operate machinery to record data", 3, 0.7).unwrap();
        let variants = provider.paraphrase(&req).unwrap();
        assert_eq!(variants.len(), 3);
        let distinct: BTreeSet<&String> = variants.iter().collect();
        assert_eq!(distinct.len(), 3);
        assert!(variants.iter().all(|v| v != "Operate machinery to record data"));
    }

    #[test]
    fn single_word_source_yields_no_variants() {
        let provider = MockProvider::new(0);
        let req = ParaphraseRequest::new("welding", 2, 0.7).unwrap();
        let variants = provider.paraphrase(&req).unwrap();
        assert!(variants.len() < 2);
    }

    #[test]
    fn request_validation() {
        assert!(ParaphraseRequest::new(" ", 1, 0.5).is_err());
        assert!(ParaphraseRequest::new("x", 0, 0.5).is_err());
        assert!(ParaphraseRequest::new("x", 1, 2.5).is_err());
    }
}
