//! Score-based rank fusion.

use std::collections::HashMap;

use crate::scored::{ScoredTerm, Scope, Source, SuggestionList};

/// Min-max normalizes scores to `[0, 1]`. A constant list (including a
/// singleton) normalizes to all ones.
pub fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let (min, max) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = max - min;
    scores
        .iter()
        .map(|&s| if range > 0.0 { (s - min) / range } else { 1.0 })
        .collect()
}

fn common_scope(lists: &[SuggestionList]) -> Scope {
    match lists.first() {
        Some(first) if lists.iter().all(|l| l.scope == first.scope) => first.scope,
        _ => Scope::Fragment,
    }
}

fn common_source<'a>(mut items: impl Iterator<Item = &'a ScoredTerm>) -> Source {
    let Some(first) = items.next() else { return Source::Fusion };
    if items.all(|t| t.source == first.source) {
        first.source.clone()
    } else {
        Source::Fusion
    }
}

/// Sums each heading's contributions. Contributions are added in ascending
/// order so the result does not depend on list order.
fn sum_by_heading(contributions: Vec<(String, f64)>, scope: Scope, source: Source) -> SuggestionList {
    let mut by_heading: HashMap<String, Vec<f64>> = HashMap::new();
    for (h, s) in contributions {
        by_heading.entry(h).or_default().push(s);
    }
    let items = by_heading
        .into_iter()
        .map(|(h, mut parts)| {
            parts.sort_by(f64::total_cmp);
            ScoredTerm::new(h, parts.iter().sum(), source.clone())
        })
        .collect();
    SuggestionList::from_items(scope, items)
}

/// CombSUM over raw scores: a heading's fused score is the sum of its scores
/// across lists, absent counting as zero.
pub fn combsum_rescore(lists: &[SuggestionList]) -> SuggestionList {
    let source = common_source(lists.iter().flat_map(|l| &l.items));
    let contributions = lists
        .iter()
        .flat_map(|l| l.items.iter().map(|t| (t.heading.clone(), t.score)))
        .collect();
    sum_by_heading(contributions, common_scope(lists), source)
}

/// CombSUM after min-max normalizing each list independently.
pub fn normalized_combsum(lists: &[SuggestionList]) -> SuggestionList {
    let source = common_source(lists.iter().flat_map(|l| &l.items));
    let mut contributions = Vec::new();
    for l in lists {
        let scores: Vec<f64> = l.items.iter().map(|t| t.score).collect();
        for (t, n) in l.items.iter().zip(min_max_normalize(&scores)) {
            contributions.push((t.heading.clone(), n));
        }
    }
    sum_by_heading(contributions, common_scope(lists), source)
}
