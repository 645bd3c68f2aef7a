//! Shared lexical helpers.

/// Lowercased maximal alphanumeric runs, the unigram unit used by the
/// TF-cosine validator and the TF-IDF featurizer.
pub fn alnum_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_whitespace() {
        assert_eq!(
            alnum_tokens("Record test-data, twice!"),
            vec!["record", "test", "data", "twice"]
        );
    }

    #[test]
    fn empty_and_symbol_only_strings_produce_nothing() {
        assert!(alnum_tokens("").is_empty());
        assert!(alnum_tokens("?!—…").is_empty());
    }
}
