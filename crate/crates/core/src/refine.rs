//! Cutting suggestion rankings down to the headings that go into the query.
//!
//! [`cg_cut`] is a cumulative-gain cut-off: each term's gain is one minus its
//! min-max normalized score, and terms are kept while the running gain stays
//! within a fraction κ of the list's total gain. Tied terms are kept or
//! dropped together.
//!
//! The count-based strategies ([`Strategy::Fo`], [`Strategy::Sa`],
//! [`Strategy::So`], [`Strategy::Ln`]) keep a fixed number of top terms.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{f_beta, heading_key, jaccard};
use crate::fragment::Fragment;
use crate::scored::{Scope, SuggestionList};
use crate::suggest::min_max_normalize;

#[derive(Debug, Error, PartialEq)]
pub enum RefineError {
    #[error("cannot cut an empty list")]
    EmptyList,
    #[error("kappa must be in (0, 1], got {0}")]
    InvalidKappa(f64),
    #[error("strategy {0} needs fragment-scoped lists, got {1}")]
    NotFragmentScope(&'static str, Scope),
    #[error("strategy so needs the fragment's original MeSH terms")]
    MissingOriginalMesh,
    #[error("degenerate regression: all x values are equal")]
    DegenerateRegression,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("empty training set")]
    EmptyTraining,
    #[error("unknown strategy: {0}")]
    UnknownStrategy(String),
}

/// Relative slack on the gain budget, so that budgets landing exactly on a
/// block boundary are not lost to rounding.
const BUDGET_SLACK: f64 = 1e-9;

/// Keeps the prefix of `list` whose cumulative gain fits in `kappa` of the
/// total. The first tied block is always kept.
///
/// ```
/// use meshforge::refine::cg_cut;
/// use meshforge::scored::{ScoredTerm, Scope, Source, SuggestionList};
///
/// let items = [("A", 0.9), ("B", 0.6), ("C", 0.6), ("D", 0.3)]
///     .map(|(h, s)| ScoredTerm::new(h, s, Source::Dense));
/// let list = SuggestionList::from_items(Scope::Fragment, items.to_vec());
/// assert_eq!(cg_cut(&list, 0.5).unwrap().headings(), ["A", "B", "C"]);
/// ```
pub fn cg_cut(list: &SuggestionList, kappa: f64) -> Result<SuggestionList, RefineError> {
    check_kappa(kappa)?;
    if list.is_empty() {
        return Err(RefineError::EmptyList);
    }
    let scores: Vec<f64> = list.items.iter().map(|t| t.score).collect();
    let gains: Vec<f64> = min_max_normalize(&scores).into_iter().map(|n| 1.0 - n).collect();
    let total: f64 = gains.iter().sum();
    let budget = kappa * total + BUDGET_SLACK * total;

    let mut keep = 0;
    let mut cumulative = 0.0;
    while keep < scores.len() {
        let mut end = keep + 1;
        while end < scores.len() && scores[end] == scores[keep] {
            end += 1;
        }
        let block: f64 = gains[keep..end].iter().sum();
        if keep > 0 && cumulative + block > budget {
            break;
        }
        cumulative += block;
        keep = end;
    }
    Ok(SuggestionList { scope: list.scope, items: list.items[..keep].to_vec() })
}

fn check_kappa(kappa: f64) -> Result<(), RefineError> {
    if kappa.is_finite() && kappa > 0.0 && kappa <= 1.0 {
        Ok(())
    } else {
        Err(RefineError::InvalidKappa(kappa))
    }
}

/// κ values tried by [`tune_kappa`]: 0.05, 0.10, ..., 0.95.
pub fn kappa_grid() -> Vec<f64> {
    (1..=19).map(|i| (i * 5) as f64 / 100.0).collect()
}

/// Set measure comparing a cut list with the gold headings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[default]
    F1,
    F3,
    Precision,
    Recall,
    Jaccard,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::F1 => "f1",
            Objective::F3 => "f3",
            Objective::Precision => "precision",
            Objective::Recall => "recall",
            Objective::Jaccard => "jaccard",
        }
    }

    pub fn score(self, cut: &BTreeSet<String>, gold: &BTreeSet<String>) -> f64 {
        let tp = cut.intersection(gold).count() as f64;
        let p = if cut.is_empty() { 0.0 } else { tp / cut.len() as f64 };
        let r = if gold.is_empty() { 0.0 } else { tp / gold.len() as f64 };
        match self {
            Objective::F1 => f_beta(p, r, 1.0),
            Objective::F3 => f_beta(p, r, 3.0),
            Objective::Precision => p,
            Objective::Recall => r,
            Objective::Jaccard => jaccard(cut, gold),
        }
    }
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "f1" => Objective::F1,
            "f3" => Objective::F3,
            "precision" | "p" => Objective::Precision,
            "recall" | "r" => Objective::Recall,
            "jaccard" => Objective::Jaccard,
            _ => return Err(format!("unknown objective: {s}")),
        })
    }
}

/// Mean objective of [`cg_cut`] at `kappa` over the training pairs. Empty
/// lists contribute an empty cut.
pub fn kappa_objective(training: &[(SuggestionList, BTreeSet<String>)], kappa: f64, objective: Objective) -> f64 {
    let total: f64 = training
        .iter()
        .map(|(list, gold)| {
            let cut = if list.is_empty() {
                BTreeSet::new()
            } else {
                cg_cut(list, kappa).expect("grid kappa is valid").items.iter().map(|t| heading_key(&t.heading)).collect()
            };
            let gold: BTreeSet<String> = gold.iter().map(|h| heading_key(h)).collect();
            objective.score(&cut, &gold)
        })
        .sum();
    total / training.len() as f64
}

/// The grid κ with the best mean objective; ties go to the smaller κ.
pub fn tune_kappa(training: &[(SuggestionList, BTreeSet<String>)], objective: Objective) -> Result<f64, RefineError> {
    if training.is_empty() {
        return Err(RefineError::EmptyTraining);
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for kappa in kappa_grid() {
        let v = kappa_objective(training, kappa, objective);
        if v > best.0 {
            best = (v, kappa);
        }
    }
    Ok(best.1)
}

/// `y = a·x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub a: f64,
    pub b: f64,
}

impl LinearModel {
    /// Predicted count, rounded half up, at least 1.
    pub fn count(&self, x: usize) -> usize {
        let y = (self.a * x as f64 + self.b + 0.5).floor();
        if y.is_finite() && y >= 1.0 {
            y as usize
        } else {
            1
        }
    }
}

/// Ordinary least squares fit of `y` on `x`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearModel, RefineError> {
    if points.len() < 2 {
        return Err(RefineError::TooFewPoints(points.len()));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(RefineError::NonFinite);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(RefineError::DegenerateRegression);
    }
    let a = sxy / sxx;
    Ok(LinearModel { a, b: my - a * mx })
}

/// How each ranking is cut.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    /// Cumulative-gain cut-off, per list.
    CgCut { kappa: f64 },
    /// First term of each list.
    Fo,
    /// As many terms as the fragment has free-text clauses.
    Sa,
    /// As many terms as the fragment originally had MeSH terms.
    So,
    /// A fitted linear function of the clause count.
    Ln { a: f64, b: f64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::CgCut { .. } => "cg_cut",
            Strategy::Fo => "fo",
            Strategy::Sa => "sa",
            Strategy::So => "so",
            Strategy::Ln { .. } => "ln",
        }
    }

    pub fn validate(&self) -> Result<(), RefineError> {
        match *self {
            Strategy::CgCut { kappa } => check_kappa(kappa),
            Strategy::Ln { a, b } if !a.is_finite() || !b.is_finite() => Err(RefineError::NonFinite),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::CgCut { kappa } => write!(f, "cg_cut:{kappa}"),
            Strategy::Ln { a, b } => write!(f, "ln:{a},{b}"),
            s => f.write_str(s.name()),
        }
    }
}

/// Accepts `fo`, `sa`, `so`, `cg_cut:<kappa>` and `ln:<a>,<b>`.
impl FromStr for Strategy {
    type Err = RefineError;
    fn from_str(s: &str) -> Result<Self, RefineError> {
        let bad = || RefineError::UnknownStrategy(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        let (name, arg) = match lower.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (lower.as_str(), None),
        };
        let strategy = match (name, arg) {
            ("fo", None) => Strategy::Fo,
            ("sa", None) => Strategy::Sa,
            ("so", None) => Strategy::So,
            ("cg_cut" | "cut", Some(k)) => Strategy::CgCut { kappa: k.trim().parse().map_err(|_| bad())? },
            ("ln", Some(ab)) => {
                let (a, b) = ab.split_once(',').ok_or_else(bad)?;
                Strategy::Ln { a: a.trim().parse().map_err(|_| bad())?, b: b.trim().parse().map_err(|_| bad())? }
            }
            _ => return Err(bad()),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

fn fragment_only(strategy: &Strategy, lists: &[SuggestionList]) -> Result<(), RefineError> {
    match lists.iter().find(|l| l.scope != Scope::Fragment) {
        Some(l) => Err(RefineError::NotFragmentScope(strategy.name(), l.scope)),
        None => Ok(()),
    }
}

/// Cuts every list according to `strategy`. Empty lists stay empty.
pub fn refine_lists(
    lists: &[SuggestionList],
    fragment: &Fragment,
    strategy: &Strategy,
) -> Result<Vec<SuggestionList>, RefineError> {
    strategy.validate()?;
    let keep = |n: usize| -> Vec<SuggestionList> {
        lists
            .iter()
            .map(|l| {
                let mut l = l.clone();
                l.truncate(n);
                l
            })
            .collect()
    };
    match *strategy {
        Strategy::CgCut { kappa } => lists
            .iter()
            .map(|l| if l.is_empty() { Ok(l.clone()) } else { cg_cut(l, kappa) })
            .collect(),
        Strategy::Fo => Ok(keep(1)),
        Strategy::Sa => {
            fragment_only(strategy, lists)?;
            Ok(keep(fragment.atomic_clauses.len()))
        }
        Strategy::So => {
            fragment_only(strategy, lists)?;
            if fragment.original_mesh.is_empty() {
                return Err(RefineError::MissingOriginalMesh);
            }
            Ok(keep(fragment.original_mesh.len()))
        }
        Strategy::Ln { a, b } => {
            fragment_only(strategy, lists)?;
            Ok(keep(LinearModel { a, b }.count(fragment.atomic_clauses.len())))
        }
    }
}

/// Headings of already cut lists, in list then rank order, without
/// case-insensitive duplicates.
pub fn union_headings(lists: &[SuggestionList]) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for l in lists {
        for t in &l.items {
            if seen.insert(heading_key(&t.heading)) {
                out.push(t.heading.clone());
            }
        }
    }
    out
}

/// The headings a strategy selects for one fragment.
pub fn apply_strategy(lists: &[SuggestionList], fragment: &Fragment, strategy: &Strategy) -> Result<Vec<String>, RefineError> {
    Ok(union_headings(&refine_lists(lists, fragment, strategy)?))
}
