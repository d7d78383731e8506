//! Tokenization shared by the thesaurus index, the embedding lookups and the
//! local search engine.
//!
//! Tokens are lowercased runs of alphanumeric characters; everything else is a
//! separator. The stopword list is the NLTK English list, pinned in
//! `data/stopwords_en.txt`.

use std::collections::HashSet;
use std::sync::OnceLock;

const STOPWORDS_RAW: &str = include_str!("../data/stopwords_en.txt");

fn stopword_set() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Returns true if `token` (already lowercased) is in the bundled stopword list.
pub fn is_stopword(token: &str) -> bool {
    stopword_set().contains(token)
}

/// Number of entries in the bundled stopword list.
pub fn stopword_count() -> usize {
    stopword_set().len()
}

/// Lowercased alphanumeric tokens, stopwords kept.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Lowercased alphanumeric tokens with stopwords removed.
pub fn content_tokens(text: &str) -> Vec<String> {
    tokens(text)
        .into_iter()
        .filter(|t| !is_stopword(t))
        .collect()
}

/// Collapses runs of whitespace into single spaces and trims both ends.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Key used for case- and punctuation-insensitive matching of terms:
/// the token sequence joined by single spaces.
pub fn match_key(text: &str) -> String {
    tokens(text).join(" ")
}
