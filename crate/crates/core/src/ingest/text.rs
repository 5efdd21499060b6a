//! Text normalization and tokenization.

use serde::{Deserialize, Serialize};

/// Ordered lowercase alphanumeric tokens.
///
/// Every token matches `[a-z0-9]+`. The only way to build one outside of tests is
/// [`preprocess`], which upholds that.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenList(Vec<String>);

impl TokenList {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

/// Lowercase, replace everything outside `[a-z0-9]` and whitespace with a space,
/// then split on whitespace runs.
pub fn preprocess(raw_text: &str) -> TokenList {
    let mut cleaned = String::with_capacity(raw_text.len());
    for c in raw_text.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            cleaned.push(c);
        } else {
            cleaned.push(' ');
        }
    }
    TokenList(cleaned.split_ascii_whitespace().map(str::to_owned).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(t: &TokenList) -> Vec<&str> {
        t.tokens().iter().map(String::as_str).collect()
    }

    #[test]
    fn punctuation_is_stripped() {
        assert_eq!(toks(&preprocess("Hello, World!!!")), ["hello", "world"]);
    }

    #[test]
    fn empty_text() {
        assert!(preprocess("").is_empty());
        assert!(preprocess("  !!! ...  ").is_empty());
    }

    #[test]
    fn tweet_golden() {
        assert_eq!(
            toks(&preprocess("@user :) I LOVE it 100%")),
            ["user", "i", "love", "it", "100"]
        );
    }

    #[test]
    fn non_ascii_becomes_separator() {
        assert_eq!(toks(&preprocess("café\tNAÏVE\u{00A0}x")), ["caf", "na", "ve", "x"]);
    }

    proptest! {
        #[test]
        fn idempotent(text in "\\PC{0,64}") {
            let once = preprocess(&text);
            prop_assert_eq!(preprocess(&once.join()), once);
        }

        #[test]
        fn tokens_are_ascii_alnum(text in "\\PC{0,64}") {
            for t in preprocess(&text).tokens() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit()));
            }
        }
    }
}
