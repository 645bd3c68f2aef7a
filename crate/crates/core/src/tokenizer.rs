//! Subword vocabulary construction and fixed-length sequence encoding.
//!
//! Vocabularies are built from scratch on the training corpus: start from
//! observed characters, then greedily merge the most frequent adjacent
//! symbol pairs (BPE-style) until `max_size` is reached. Encoding uses
//! greedy longest-match segmentation with `##` continuation pieces.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";

const CONTINUATION: &str = "##";

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("max_size must be at least 8 (got {0})")]
    MaxSizeTooSmall(usize),
    #[error("min_freq must be at least 1")]
    MinFreqZero,
    #[error("vocabulary file is invalid: {0}")]
    BadVocabFile(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Bijective token ↔ id mapping with the four specials at ids 0–3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub(crate) fn from_tokens(tokens: Vec<String>) -> Self {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            token_to_id,
            id_to_token: tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token_of(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Writes one token per line, line number = id, LF endings.
    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut body = String::new();
        for token in &self.id_to_token {
            body.push_str(token);
            body.push('\n');
        }
        std::fs::write(path, body).map_err(|e| TokenizerError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let body = std::fs::read_to_string(path).map_err(|e| TokenizerError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let tokens: Vec<String> = body.lines().map(str::to_string).collect();
        let expected = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN];
        if tokens.len() < 4 || tokens[..4] != expected {
            return Err(TokenizerError::BadVocabFile(
                "first four lines must be the special tokens".into(),
            ));
        }
        if tokens[4..].iter().any(String::is_empty) {
            return Err(TokenizerError::BadVocabFile("empty token line".into()));
        }
        Ok(Self::from_tokens(tokens))
    }
}

/// An encoded, padded, masked token-id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub true_length: usize,
}

impl TokenSequence {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }
}

/// Lowercases and splits on Unicode whitespace; any non-alphanumeric char
/// becomes its own single-char word.
fn basic_tokenize(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for ch in text.to_lowercase().chars() {
        if ch.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else if !ch.is_alphanumeric() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(ch.to_string());
        } else {
            current.push(ch);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// A word as its current symbol segmentation: first piece bare, continuation
/// pieces `##`-prefixed.
fn initial_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION}{c}")
            }
        })
        .collect()
}

fn merge_symbols(left: &str, right: &str) -> String {
    format!("{left}{}", right.strip_prefix(CONTINUATION).unwrap_or(right))
}

/// Builds a vocabulary from training texts.
///
/// Observed characters (in both word-initial and continuation position) are
/// always kept for coverage; merges are admitted most-frequent-first while
/// their pair count stays at or above `min_freq` and the size budget allows.
/// The final file order is specials first, then tokens by (frequency of use
/// in the final segmentation, descending) with lexicographic tie-break.
pub fn build_vocab(
    texts: &[String],
    max_size: usize,
    min_freq: usize,
) -> Result<Vocabulary, TokenizerError> {
    if max_size < 8 {
        return Err(TokenizerError::MaxSizeTooSmall(max_size));
    }
    if min_freq == 0 {
        return Err(TokenizerError::MinFreqZero);
    }

    // Word frequencies over the whole corpus.
    let mut word_freq: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        for word in basic_tokenize(text) {
            *word_freq.entry(word).or_insert(0) += 1;
        }
    }
    if word_freq.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }

    let mut segmentations: Vec<(Vec<String>, usize)> = word_freq
        .iter()
        .map(|(word, &freq)| (initial_symbols(word), freq))
        .collect();

    // Character-level symbols, counted by position kind.
    let mut symbol_freq: BTreeMap<String, usize> = BTreeMap::new();
    for (symbols, freq) in &segmentations {
        for symbol in symbols {
            *symbol_freq.entry(symbol.clone()).or_insert(0) += freq;
        }
    }

    let budget = max_size.saturating_sub(4);
    let mut kept: Vec<String> = if symbol_freq.len() > budget {
        // Rare corner: more distinct characters than room. Keep the most
        // frequent ones; everything else encodes to [UNK].
        let mut chars: Vec<(&String, &usize)> = symbol_freq.iter().collect();
        chars.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
        chars.into_iter().take(budget).map(|(s, _)| s.clone()).collect()
    } else {
        symbol_freq.keys().cloned().collect()
    };

    // Greedy merge loop.
    while kept.len() < budget {
        let mut pair_freq: BTreeMap<(String, String), usize> = BTreeMap::new();
        for (symbols, freq) in &segmentations {
            for window in symbols.windows(2) {
                let key = (window[0].clone(), window[1].clone());
                *pair_freq.entry(key).or_insert(0) += freq;
            }
        }
        let best = pair_freq
            .into_iter()
            .filter(|(_, freq)| *freq >= min_freq)
            .max_by(|a, b| {
                a.1.cmp(&b.1)
                    .then_with(|| merge_symbols(&b.0 .0, &b.0 .1).cmp(&merge_symbols(&a.0 .0, &a.0 .1)))
            });
        let Some(((left, right), _)) = best else {
            break;
        };
        let merged = merge_symbols(&left, &right);
        for (symbols, _) in &mut segmentations {
            let mut i = 0;
            while i + 1 < symbols.len() {
                if symbols[i] == left && symbols[i + 1] == right {
                    symbols[i] = merged.clone();
                    symbols.remove(i + 1);
                } else {
                    i += 1;
                }
            }
        }
        if !kept.contains(&merged) {
            kept.push(merged);
        }
    }

    // Frequency of each kept token in the final segmentation.
    let mut final_freq: BTreeMap<&str, usize> = kept.iter().map(|t| (t.as_str(), 0)).collect();
    for (symbols, freq) in &segmentations {
        for symbol in symbols {
            if let Some(slot) = final_freq.get_mut(symbol.as_str()) {
                *slot += freq;
            }
        }
    }
    let mut ordered: Vec<&str> = kept.iter().map(String::as_str).collect();
    ordered.sort_by(|a, b| final_freq[b].cmp(&final_freq[a]).then(a.cmp(b)));

    let mut tokens = vec![
        PAD_TOKEN.to_string(),
        UNK_TOKEN.to_string(),
        CLS_TOKEN.to_string(),
        SEP_TOKEN.to_string(),
    ];
    tokens.extend(ordered.into_iter().map(str::to_string));
    Ok(Vocabulary::from_tokens(tokens))
}

/// Greedy longest-match segmentation of one word. Unmatched characters emit
/// `[UNK]` and scanning continues.
fn wordpiece(word: &str, vocab: &Vocabulary, out: &mut Vec<u32>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    let mut first = true;
    while start < chars.len() {
        let mut end = chars.len();
        let mut matched = None;
        while end > start {
            let piece: String = if first {
                chars[start..end].iter().collect()
            } else {
                format!(
                    "{CONTINUATION}{}",
                    chars[start..end].iter().collect::<String>()
                )
            };
            if let Some(id) = vocab.id_of(&piece) {
                matched = Some((id, end));
                break;
            }
            end -= 1;
        }
        match matched {
            Some((id, end)) => {
                out.push(id);
                start = end;
            }
            None => {
                out.push(UNK_ID);
                start += 1;
            }
        }
        first = false;
    }
}

/// Encodes any string into a `[CLS] … [SEP]`-wrapped, padded sequence of
/// exactly `max_len` ids. Content pieces beyond `max_len - 2` are truncated.
pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSequence {
    assert!(max_len >= 3, "max_len must be at least 3");
    let mut pieces = Vec::new();
    for word in basic_tokenize(text) {
        wordpiece(&word, vocab, &mut pieces);
        if pieces.len() >= max_len - 2 {
            pieces.truncate(max_len - 2);
            break;
        }
    }

    let true_length = pieces.len() + 2;
    let mut ids = Vec::with_capacity(max_len);
    ids.push(CLS_ID);
    ids.extend(pieces);
    ids.push(SEP_ID);
    ids.resize(max_len, PAD_ID);

    let mut mask = vec![0u8; max_len];
    for m in mask.iter_mut().take(true_length) {
        *m = 1;
    }
    TokenSequence {
        ids,
        mask,
        true_length,
    }
}

/// Reassembles text from ids, joining `##` continuations and skipping
/// specials. Inverse of `encode` for in-vocabulary whole words.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> String {
    let mut words: Vec<String> = Vec::new();
    for &id in ids {
        if id == PAD_ID || id == CLS_ID || id == SEP_ID {
            continue;
        }
        let token = vocab.token_of(id).unwrap_or(UNK_TOKEN);
        if let Some(cont) = token.strip_prefix(CONTINUATION) {
            if let Some(last) = words.last_mut() {
                last.push_str(cont);
                continue;
            }
        }
        words.push(token.to_string());
    }
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn frequent_word_becomes_whole_token() {
        // Brute-force tally: "aa" occurs 3 times, so the (a, ##a) merge fires.
        let vocab = build_vocab(&texts(&["aa aa", "aa"]), 10, 1).unwrap();
        assert!(vocab.contains("aa"), "vocab: {:?}", vocab.id_to_token);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(
            build_vocab(&[], 10, 1),
            Err(TokenizerError::EmptyCorpus)
        ));
        assert!(matches!(
            build_vocab(&texts(&["   "]), 10, 1),
            Err(TokenizerError::EmptyCorpus)
        ));
    }

    #[test]
    fn vocab_build_is_deterministic() {
        let corpus = texts(&["record test data", "record the data", "the data logs"]);
        let a = build_vocab(&corpus, 40, 1).unwrap();
        let b = build_vocab(&corpus, 40, 1).unwrap();
        assert_eq!(a, b);

        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("v1.txt");
        let p2 = dir.path().join("v2.txt");
        a.save(&p1).unwrap();
        b.save(&p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "vocab files must be byte-identical"
        );
    }

    #[test]
    fn specials_occupy_first_four_ids() {
        let vocab = build_vocab(&texts(&["ab"]), 10, 1).unwrap();
        assert_eq!(vocab.token_of(PAD_ID), Some(PAD_TOKEN));
        assert_eq!(vocab.token_of(UNK_ID), Some(UNK_TOKEN));
        assert_eq!(vocab.token_of(CLS_ID), Some(CLS_TOKEN));
        assert_eq!(vocab.token_of(SEP_ID), Some(SEP_TOKEN));
    }

    #[test]
    fn empty_text_encodes_to_cls_sep() {
        let vocab = build_vocab(&texts(&["ab"]), 10, 1).unwrap();
        let seq = encode("", &vocab, 8);
        assert_eq!(seq.true_length, 2);
        assert_eq!(seq.ids[0], CLS_ID);
        assert_eq!(seq.ids[1], SEP_ID);
        assert!(seq.ids[2..].iter().all(|&id| id == PAD_ID));
        assert_eq!(seq.mask, vec![1, 1, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn greedy_longest_match_uses_continuations() {
        // Hand-traced: "running" → "run" + "##ning".
        let vocab = Vocabulary::from_tokens(
            [
                PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN, "run", "##ning", "##n",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        );
        let seq = encode("running", &vocab, 8);
        assert_eq!(&seq.ids[..4], &[CLS_ID, 4, 5, SEP_ID]);
        assert_eq!(seq.true_length, 4);
    }

    #[test]
    fn whole_word_in_vocab_is_single_piece() {
        let vocab = build_vocab(&texts(&["report report report"]), 30, 1).unwrap();
        let seq = encode("report", &vocab, 8);
        assert_eq!(seq.true_length, 3);
        assert_eq!(decode(&seq.ids, &vocab), "report");
    }

    #[test]
    fn truncation_keeps_at_most_one_piece_at_max_len_3() {
        let vocab = build_vocab(&texts(&["a b c d"]), 12, 1).unwrap();
        let seq = encode("a b c d", &vocab, 3);
        assert_eq!(seq.true_length, 3);
        assert_eq!(seq.ids[0], CLS_ID);
        assert_eq!(seq.ids[2], SEP_ID);
    }

    #[test]
    fn unknown_character_maps_to_unk() {
        let vocab = build_vocab(&texts(&["abc abc"]), 12, 1).unwrap();
        let seq = encode("axz", &vocab, 8);
        assert!(seq.ids[1..seq.true_length - 1].contains(&UNK_ID));
    }

    #[test]
    fn punctuation_splits_words() {
        let vocab = build_vocab(&texts(&["log, data"]), 16, 1).unwrap();
        let with_comma = encode("log, data", &vocab, 10);
        let without = encode("log data", &vocab, 10);
        assert_eq!(with_comma.true_length, without.true_length + 1);
    }

    #[test]
    fn vocab_file_roundtrip() {
        let vocab = build_vocab(&texts(&["record test data", "record data"]), 24, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(vocab, loaded);
    }
}
