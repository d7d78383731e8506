//! Entity features for learning-to-rank and re-scoring with a linear model.
//!
//! The feature vector, in order:
//!
//! | # | feature |
//! |---|---------|
//! | 1 | raw suggester score |
//! | 2 | min-max normalized score within the list |
//! | 3 | reciprocal rank in the list |
//! | 4 | number of the fragment's clauses whose list contains the heading |
//! | 5 | heading length in characters |
//! | 6 | heading word count |
//! | 7 | synonym count (heading included) |
//! | 8 | MeSH tree depth, minimum over tree numbers |
//! | 9 | mean idf of heading tokens in the synonym index |
//! | 10 | 1 if the heading equals a clause (normalized), else 0 |
//! | 11 | best token Jaccard between heading and any clause |

use std::collections::HashSet;
use std::path::Path;

use thiserror::Error;

use crate::fragment::Fragment;
use crate::scored::{ScoredTerm, Source, SuggestionList};
use crate::suggest::fusion::min_max_normalize;
use crate::text::{content_tokens, match_key};
use crate::thesaurus::Thesaurus;

pub const FEATURE_COUNT: usize = 11;

pub type FeatureVector = [f64; FEATURE_COUNT];

#[derive(Debug, Error)]
pub enum LtrError {
    #[error("heading not in thesaurus: {0}")]
    UnknownHeading(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("weights file: {0}")]
    BadWeights(String),
}

/// Everything features are computed against, besides the term itself.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext<'a> {
    /// The ranking the term is being scored in.
    pub list: &'a SuggestionList,
    /// Per-clause rankings for the same fragment (for feature 4).
    pub clause_lists: &'a [SuggestionList],
    pub fragment: &'a Fragment,
    pub thesaurus: &'a Thesaurus,
}

fn token_jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn ltr_features(term: &ScoredTerm, ctx: &FeatureContext<'_>) -> Result<FeatureVector, LtrError> {
    let entry = ctx
        .thesaurus
        .by_heading(&term.heading)
        .ok_or_else(|| LtrError::UnknownHeading(term.heading.clone()))?;

    let scores: Vec<f64> = ctx.list.items.iter().map(|t| t.score).collect();
    let position = ctx.list.items.iter().position(|t| t.heading == term.heading);
    let normalized = match position {
        Some(p) => min_max_normalize(&scores)[p],
        None => {
            let mut with_term = scores.clone();
            with_term.push(term.score);
            *min_max_normalize(&with_term).last().unwrap()
        }
    };
    let reciprocal_rank = position.map_or(0.0, |p| 1.0 / (p as f64 + 1.0));
    let retrieving_clauses = ctx
        .clause_lists
        .iter()
        .filter(|l| l.items.iter().any(|t| t.heading == term.heading))
        .count();

    let heading_tokens = content_tokens(&entry.heading);
    let mean_idf = if heading_tokens.is_empty() {
        0.0
    } else {
        heading_tokens.iter().map(|t| ctx.thesaurus.idf(t)).sum::<f64>() / heading_tokens.len() as f64
    };
    let heading_key = match_key(&entry.heading);
    let exact = ctx.fragment.atomic_clauses.iter().any(|c| match_key(&c.text) == heading_key);
    let heading_set: HashSet<String> = heading_tokens.into_iter().collect();
    let best_jaccard = ctx
        .fragment
        .atomic_clauses
        .iter()
        .map(|c| token_jaccard(&heading_set, &content_tokens(&c.text).into_iter().collect()))
        .fold(0.0, f64::max);

    Ok([
        term.score,
        normalized,
        reciprocal_rank,
        retrieving_clauses as f64,
        entry.heading.chars().count() as f64,
        entry.heading.split_whitespace().count() as f64,
        entry.synonyms.len() as f64,
        ctx.thesaurus.tree_depth(&entry.heading) as f64,
        mean_idf,
        if exact { 1.0 } else { 0.0 },
        best_jaccard,
    ])
}

/// Weights of a linear scoring model over [`ltr_features`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearWeights(pub FeatureVector);

impl LinearWeights {
    /// Reads one real per line, exactly [`FEATURE_COUNT`] lines. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LtrError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, LtrError> {
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| LtrError::BadWeights(format!("line {}: not a number", i + 1)))?;
            if !v.is_finite() {
                return Err(LtrError::BadWeights(format!("line {}: not finite", i + 1)));
            }
            values.push(v);
        }
        let arr: FeatureVector = values
            .try_into()
            .map_err(|v: Vec<f64>| LtrError::BadWeights(format!("expected {FEATURE_COUNT} weights, found {}", v.len())))?;
        Ok(LinearWeights(arr))
    }

    pub fn score(&self, features: &FeatureVector) -> f64 {
        self.0.iter().zip(features).map(|(w, f)| w * f).sum()
    }
}

/// Re-scores every item of `ctx.list` with the linear model and re-sorts.
pub fn linear_rank(weights: &LinearWeights, ctx: &FeatureContext<'_>) -> Result<SuggestionList, LtrError> {
    let mut items = Vec::with_capacity(ctx.list.len());
    for t in &ctx.list.items {
        let f = ltr_features(t, ctx)?;
        items.push(ScoredTerm::new(t.heading.clone(), weights.score(&f), Source::Ltr));
    }
    Ok(SuggestionList::from_items(ctx.list.scope, items))
}
