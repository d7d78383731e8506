//! Scored MeSH terms and ranked suggestion lists.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Which method produced a score.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Source {
    Atm,
    Bm25,
    Dense,
    Fusion,
    Ltr,
    External(String),
}

impl Source {
    pub fn as_str(&self) -> &str {
        match self {
            Source::Atm => "atm",
            Source::Bm25 => "bm25",
            Source::Dense => "dense",
            Source::Fusion => "fusion",
            Source::Ltr => "ltr",
            Source::External(name) => name,
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> String {
        s.as_str().to_string()
    }
}

impl From<String> for Source {
    fn from(s: String) -> Source {
        match s.as_str() {
            "atm" => Source::Atm,
            "bm25" => Source::Bm25,
            "dense" => Source::Dense,
            "fusion" => Source::Fusion,
            "ltr" => Source::Ltr,
            _ => Source::External(s),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTerm {
    pub heading: String,
    pub score: f64,
    pub source: Source,
}

impl ScoredTerm {
    pub fn new(heading: impl Into<String>, score: f64, source: Source) -> Self {
        ScoredTerm {
            heading: heading.into(),
            score,
            source,
        }
    }
}

/// Standard ranking order: score descending, then heading ascending.
pub fn rank_order(a: &ScoredTerm, b: &ScoredTerm) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.heading.cmp(&b.heading))
}

/// What a ranked list was computed for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Scope {
    /// One free-text atomic clause, by position in the fragment.
    Clause(usize),
    /// One semantic group, by position.
    Group(usize),
    Fragment,
}

impl From<Scope> for String {
    fn from(s: Scope) -> String {
        match s {
            Scope::Clause(i) => format!("clause:{i}"),
            Scope::Group(i) => format!("group:{i}"),
            Scope::Fragment => "fragment".to_string(),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&String::from(*self))
    }
}

impl TryFrom<String> for Scope {
    type Error = String;

    fn try_from(s: String) -> Result<Scope, String> {
        if s == "fragment" {
            return Ok(Scope::Fragment);
        }
        let parse = |rest: &str| rest.parse::<usize>().map_err(|_| format!("bad scope '{s}'"));
        if let Some(rest) = s.strip_prefix("clause:") {
            return parse(rest).map(Scope::Clause);
        }
        if let Some(rest) = s.strip_prefix("group:") {
            return parse(rest).map(Scope::Group);
        }
        Err(format!("bad scope '{s}'"))
    }
}

/// A ranking of distinct headings, sorted by [`rank_order`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionList {
    pub scope: Scope,
    pub items: Vec<ScoredTerm>,
}

impl SuggestionList {
    /// Sorts `items` into rank order. A heading that occurs more than once
    /// keeps its highest score.
    pub fn from_items(scope: Scope, items: Vec<ScoredTerm>) -> Self {
        let mut best: HashMap<String, ScoredTerm> = HashMap::with_capacity(items.len());
        for item in items {
            debug_assert!(item.score.is_finite());
            match best.get_mut(&item.heading) {
                Some(existing) if existing.score >= item.score => {}
                Some(existing) => *existing = item,
                None => {
                    best.insert(item.heading.clone(), item);
                }
            }
        }
        let mut items: Vec<ScoredTerm> = best.into_values().collect();
        items.sort_by(rank_order);
        SuggestionList { scope, items }
    }

    pub fn empty(scope: Scope) -> Self {
        SuggestionList { scope, items: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.items.truncate(k);
    }

    pub fn headings(&self) -> Vec<&str> {
        self.items.iter().map(|t| t.heading.as_str()).collect()
    }

    /// True if sorted by [`rank_order`] with no repeated heading.
    pub fn is_well_formed(&self) -> bool {
        let sorted = self
            .items
            .windows(2)
            .all(|w| rank_order(&w[0], &w[1]) == Ordering::Less);
        let mut seen = std::collections::HashSet::new();
        sorted && self.items.iter().all(|t| seen.insert(t.heading.as_str()))
    }
}
