//! Per-fragment MeSH suggestion.
//!
//! A [`Suggester`] ranks headings for one free-text atomic clause. The
//! functions here turn per-clause rankings into the three ranking
//! representations:
//!
//! * [`suggest_atomic`]: one list per clause, no combination;
//! * [`suggest_fragment`]: one list for the whole fragment, by normalized
//!   CombSUM over the per-clause lists;
//! * [`suggest_semantic`]: one list per group of semantically similar
//!   clauses, fused the same way within each group.
//!
//! [`suggest_lexical`] and [`atm_fragment_list`] produce the single fragment
//! lists of the lexical methods.

pub mod external;
pub mod fusion;
pub mod ltr;

use std::sync::Arc;

use thiserror::Error;

use crate::embed::{dense_suggest, semantic_groups, VectorStore};
use crate::fragment::Fragment;
use crate::query::Clause;
use crate::scored::{ScoredTerm, Scope, Source, SuggestionList};
use crate::thesaurus::{atm_suggest_clauses, bm25_suggest, Thesaurus};

pub use fusion::{combsum_rescore, min_max_normalize, normalized_combsum};

/// Per-clause candidate depth.
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum SuggestError {
    #[error("external suggester {name}: {message}")]
    External { name: String, message: String },
}

/// Ranks MeSH headings for a single free-text clause.
pub trait Suggester: Send + Sync {
    fn source(&self) -> Source;

    /// At most `k` suggestions; order does not matter.
    fn suggest(&self, clause: &Clause, k: usize) -> Result<Vec<ScoredTerm>, SuggestError>;

    /// Whether concurrent calls are allowed. Suggesters answering `false` are
    /// called from one thread at a time.
    fn is_thread_safe(&self) -> bool {
        true
    }
}

/// BM25 over thesaurus synonyms.
#[derive(Debug, Clone)]
pub struct Bm25Suggester {
    pub thesaurus: Arc<Thesaurus>,
}

impl Suggester for Bm25Suggester {
    fn source(&self) -> Source {
        Source::Bm25
    }

    fn suggest(&self, clause: &Clause, k: usize) -> Result<Vec<ScoredTerm>, SuggestError> {
        Ok(bm25_suggest(clause, &self.thesaurus, k))
    }
}

/// Cosine ranking against precomputed heading vectors.
#[derive(Debug, Clone)]
pub struct DenseSuggester {
    pub mesh: Arc<VectorStore>,
    pub words: Arc<VectorStore>,
}

impl Suggester for DenseSuggester {
    fn source(&self) -> Source {
        Source::Dense
    }

    fn suggest(&self, clause: &Clause, k: usize) -> Result<Vec<ScoredTerm>, SuggestError> {
        Ok(dense_suggest(clause, &self.mesh, &self.words, k))
    }
}

/// One ranked list per atomic clause, in clause order, each cut to `k`.
pub fn suggest_atomic(fragment: &Fragment, method: &dyn Suggester, k: usize) -> Result<Vec<SuggestionList>, SuggestError> {
    fragment
        .atomic_clauses
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut list = SuggestionList::from_items(Scope::Clause(i), method.suggest(c, k)?);
            list.truncate(k);
            Ok(list)
        })
        .collect()
}

/// Normalized CombSUM over the fragment's per-clause top-`k` lists.
pub fn suggest_fragment(fragment: &Fragment, method: &dyn Suggester, k: usize) -> Result<SuggestionList, SuggestError> {
    let lists = suggest_atomic(fragment, method, k)?;
    Ok(fragment_from_atomic(&lists))
}

/// Fragment representation from already computed per-clause lists.
pub fn fragment_from_atomic(lists: &[SuggestionList]) -> SuggestionList {
    let mut fused = normalized_combsum(lists);
    fused.scope = Scope::Fragment;
    fused
}

/// Per-group normalized CombSUM, groups from [`semantic_groups`].
pub fn suggest_semantic(
    fragment: &Fragment,
    method: &dyn Suggester,
    words: &VectorStore,
    threshold: f64,
    k: usize,
) -> Result<Vec<SuggestionList>, SuggestError> {
    let lists = suggest_atomic(fragment, method, k)?;
    let groups = semantic_groups(&fragment.atomic_clauses, words, threshold);
    Ok(semantic_from_atomic(&lists, &groups))
}

/// Semantic representation from per-clause lists and a clause partition.
pub fn semantic_from_atomic(lists: &[SuggestionList], groups: &[Vec<usize>]) -> Vec<SuggestionList> {
    groups
        .iter()
        .enumerate()
        .map(|(g, members)| {
            let group_lists: Vec<SuggestionList> = members.iter().map(|&i| lists[i].clone()).collect();
            let mut fused = normalized_combsum(&group_lists);
            fused.scope = Scope::Group(g);
            fused
        })
        .collect()
}

/// Lexical fragment list: raw CombSUM over per-clause lists, so a heading
/// retrieved for several clauses accumulates score.
pub fn suggest_lexical(fragment: &Fragment, method: &dyn Suggester, k: usize) -> Result<SuggestionList, SuggestError> {
    let lists = suggest_atomic(fragment, method, k)?;
    let mut fused = combsum_rescore(&lists);
    fused.scope = Scope::Fragment;
    Ok(fused)
}

/// Longest-match exact mapping over the whole stripped fragment.
pub fn atm_fragment_list(fragment: &Fragment, thesaurus: &Thesaurus) -> SuggestionList {
    SuggestionList::from_items(Scope::Fragment, atm_suggest_clauses(&fragment.atomic_clauses, thesaurus))
}
