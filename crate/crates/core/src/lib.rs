//! MeSH term suggestion for Boolean systematic-review queries.
//!
//! The crate parses PubMed-style Boolean queries, splits them into
//! fragments, ranks candidate MeSH headings for the free-text part of each
//! fragment, cuts the rankings down, and rebuilds a query with the chosen
//! headings. Retrieval and evaluation helpers close the loop.

pub mod embed;
pub mod eval;
pub mod fragment;
pub mod pipeline;
pub mod query;
pub mod refine;
pub mod retrieval;
pub mod scored;
pub mod suggest;
pub mod text;
pub mod thesaurus;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/queries.md")]
    mod queries {}
    #[doc = include_str!("../../../book/src/fragments.md")]
    mod fragments {}
    #[doc = include_str!("../../../book/src/lexical.md")]
    mod lexical {}
    #[doc = include_str!("../../../book/src/dense.md")]
    mod dense {}
    #[doc = include_str!("../../../book/src/fusion.md")]
    mod fusion {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/retrieval.md")]
    mod retrieval {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
