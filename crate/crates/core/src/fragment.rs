//! Query fragmentation and defragmentation.
//!
//! A fragment is a first-level subtree of a query whose root is `AND`; any
//! other query is a single fragment. Fragments lose their MeSH leaves before
//! suggestion and get the suggested headings OR-ed back in front of the
//! remaining free text when the query is rebuilt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{Clause, Operator, QueryNode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fragment {
    /// Position among the query's fragments, from 0.
    pub index: usize,
    pub original: QueryNode,
    /// `original` without MeSH leaves, or `None` if nothing else was there.
    pub stripped: Option<QueryNode>,
    /// Distinct MeSH headings of `original` in order of first appearance.
    pub original_mesh: Vec<String>,
    /// Free-text leaves of `original`, in order.
    pub atomic_clauses: Vec<Clause>,
}

impl Fragment {
    pub fn new(index: usize, original: QueryNode) -> Self {
        let stripped = strip_mesh(&original);
        let mut original_mesh: Vec<String> = Vec::new();
        let mut atomic_clauses = Vec::new();
        for leaf in original.leaves() {
            if leaf.is_mesh() {
                if !original_mesh.contains(&leaf.text) {
                    original_mesh.push(leaf.text.clone());
                }
            } else {
                atomic_clauses.push(leaf.clone());
            }
        }
        Fragment {
            index,
            original,
            stripped,
            original_mesh,
            atomic_clauses,
        }
    }

    /// Serialized stripped form, empty when the fragment was MeSH-only.
    pub fn stripped_text(&self) -> String {
        self.stripped.as_ref().map(QueryNode::to_query_string).unwrap_or_default()
    }
}

/// Removes every MeSH leaf, collapsing operators left with fewer than two
/// operands. A `NOT` whose left side disappears is removed entirely, right
/// side included.
pub fn strip_mesh(node: &QueryNode) -> Option<QueryNode> {
    match node {
        QueryNode::Leaf(c) if c.is_mesh() => None,
        QueryNode::Leaf(_) => Some(node.clone()),
        QueryNode::Op { op: Operator::Not, children } => {
            let left = strip_mesh(&children[0])?;
            match strip_mesh(&children[1]) {
                Some(right) => Some(QueryNode::not(left, right)),
                None => Some(left),
            }
        }
        QueryNode::Op { op, children } => {
            let kept: Vec<QueryNode> = children.iter().filter_map(strip_mesh).collect();
            match op {
                Operator::And => QueryNode::and(kept),
                _ => QueryNode::or(kept),
            }
        }
    }
}

/// Splits a query into fragments: one per child of a root `AND`, otherwise
/// the whole query.
pub fn fragment(q: &QueryNode) -> Vec<Fragment> {
    match q {
        QueryNode::Op { op: Operator::And, children } => children
            .iter()
            .enumerate()
            .map(|(i, c)| Fragment::new(i, c.clone()))
            .collect(),
        _ => vec![Fragment::new(0, q.clone())],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DefragmentError {
    #[error("empty query: no fragment has free text or suggestions")]
    EmptyQuery,
}

/// A fragment together with the MeSH headings chosen for it, in rank order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSuggestions {
    pub index: usize,
    pub stripped: Option<QueryNode>,
    pub headings: Vec<String>,
}

impl FragmentSuggestions {
    pub fn new(fragment: &Fragment, headings: Vec<String>) -> Self {
        FragmentSuggestions {
            index: fragment.index,
            stripped: fragment.stripped.clone(),
            headings,
        }
    }
}

/// Rebuilds a query: each fragment becomes `OR(suggested MeSH..., stripped)`
/// and fragments are joined with `AND`. Fragments with neither free text nor
/// suggestions are dropped (with a warning). Duplicate headings within a
/// fragment are emitted once.
pub fn defragment(parts: &[FragmentSuggestions]) -> Result<QueryNode, DefragmentError> {
    let mut fragments = Vec::with_capacity(parts.len());
    for part in parts {
        let mut seen: Vec<&str> = Vec::new();
        let mut children: Vec<QueryNode> = Vec::new();
        for h in &part.headings {
            if seen.iter().any(|s| s.eq_ignore_ascii_case(h)) {
                continue;
            }
            seen.push(h);
            children.push(QueryNode::Leaf(Clause::mesh(h)));
        }
        if let Some(stripped) = &part.stripped {
            children.push(stripped.clone());
        }
        match QueryNode::or(children) {
            Some(node) => fragments.push(node),
            None => log::warn!("fragment {} has no free text and no suggestions; dropped", part.index),
        }
    }
    QueryNode::and(fragments).ok_or(DefragmentError::EmptyQuery)
}
