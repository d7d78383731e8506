//! Precomputed embeddings: the dense suggester and semantic grouping of
//! atomic clauses.
//!
//! Vectors are read from the word2vec text format. Tokens may not contain
//! spaces in that format, so spaces are written as `_` and restored on load;
//! `Pain,_Postoperative` is stored under `Pain, Postoperative`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::query::Clause;
use crate::scored::{rank_order, ScoredTerm, Source};
use crate::text::content_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    MeshTerm,
    Word,
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: duplicate token {token}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: non-finite component")]
    NonFinite { line: usize },
    #[error("zero vector")]
    ZeroVector,
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Dense vectors keyed by token, all of one dimension.
#[derive(Debug, Clone)]
pub struct VectorStore {
    dim: usize,
    kind: VectorKind,
    tokens: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

pub fn escape_token(token: &str) -> String {
    token.replace(' ', "_")
}

pub fn unescape_token(token: &str) -> String {
    token.replace('_', " ")
}

impl VectorStore {
    pub fn new(dim: usize, kind: VectorKind) -> Self {
        VectorStore {
            dim,
            kind,
            tokens: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>, kind: VectorKind) -> Result<Self, EmbedError> {
        Self::read(BufReader::new(File::open(path)?), kind)
    }

    /// Parses the word2vec text format: a `<count> <dim>` header, then one
    /// `<token> v1 ... v<dim>` line per vector.
    pub fn read(reader: impl BufRead, kind: VectorKind) -> Result<Self, EmbedError> {
        let mut lines = reader.lines().enumerate();
        let (count, dim) = loop {
            let Some((i, line)) = lines.next() else {
                return Err(EmbedError::Malformed { line: 1, message: "missing header".into() });
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let parsed = match parts.as_slice() {
                [c, d] => c.parse::<usize>().ok().zip(d.parse::<usize>().ok()),
                _ => None,
            };
            match parsed {
                Some((c, d)) if d > 0 => break (c, d),
                _ => {
                    return Err(EmbedError::Malformed {
                        line: i + 1,
                        message: "header must be '<count> <dim>' with dim > 0".into(),
                    })
                }
            }
        };
        let mut store = VectorStore::new(dim, kind);
        for (i, line) in lines {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(raw_token) = parts.next() else { continue };
            let values: Vec<&str> = parts.collect();
            if values.len() != dim {
                return Err(EmbedError::DimensionMismatch { line: i + 1, expected: dim, found: values.len() });
            }
            let mut vec = Vec::with_capacity(dim);
            for v in values {
                let x: f64 = v.parse().map_err(|_| EmbedError::Malformed {
                    line: i + 1,
                    message: format!("bad number '{v}'"),
                })?;
                if !x.is_finite() {
                    return Err(EmbedError::NonFinite { line: i + 1 });
                }
                vec.push(x);
            }
            let token = unescape_token(raw_token);
            if store.index.contains_key(&token) {
                return Err(EmbedError::DuplicateToken { line: i + 1, token });
            }
            store.push_unchecked(token, &vec);
        }
        if store.len() != count {
            return Err(EmbedError::Malformed {
                line: 1,
                message: format!("header declares {count} vectors, found {}", store.len()),
            });
        }
        Ok(store)
    }

    /// Writes the store back in word2vec text format.
    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for (i, tok) in self.tokens.iter().enumerate() {
            write!(w, "{}", escape_token(tok))?;
            for x in self.vector_at(i) {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Adds a vector. Fails on wrong length, non-finite values or a repeated token.
    pub fn insert(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<(), EmbedError> {
        let token = token.into();
        if vector.len() != self.dim {
            return Err(EmbedError::LengthMismatch(self.dim, vector.len()));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::NonFinite { line: 0 });
        }
        if self.index.contains_key(&token) {
            return Err(EmbedError::DuplicateToken { line: 0, token });
        }
        self.push_unchecked(token, vector);
        Ok(())
    }

    fn push_unchecked(&mut self, token: String, vector: &[f64]) {
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.data.extend_from_slice(vector);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> VectorKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vector_at(i))
    }

    fn vector_at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), self.vector_at(i)))
    }

    /// Keeps only the tokens for which `keep` returns true.
    pub fn retain(&mut self, mut keep: impl FnMut(&str) -> bool) {
        let mut next = VectorStore::new(self.dim, self.kind);
        for (t, v) in self.iter() {
            if keep(t) {
                next.push_unchecked(t.to_string(), v);
            }
        }
        *self = next;
    }
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbedError::ZeroVector);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Mean of the in-vocabulary vectors of a clause's content tokens, or `None`
/// when no token is in vocabulary.
pub fn embed_clause(clause: &Clause, words: &VectorStore) -> Option<Vec<f64>> {
    debug_assert_eq!(words.kind(), VectorKind::Word);
    let mut sum = vec![0.0; words.dim()];
    let mut n = 0usize;
    for tok in content_tokens(&clause.text) {
        if let Some(v) = words.get(&tok) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    for s in &mut sum {
        *s /= n as f64;
    }
    Some(sum)
}

/// Ranks every heading in `mesh` by cosine similarity to the clause
/// embedding and returns the top `k`. Zero heading vectors are skipped.
pub fn dense_suggest(clause: &Clause, mesh: &VectorStore, words: &VectorStore, k: usize) -> Vec<ScoredTerm> {
    debug_assert_eq!(mesh.kind(), VectorKind::MeshTerm);
    let Some(q) = embed_clause(clause, words) else { return Vec::new() };
    dense_rank(&q, mesh, k)
}

/// Top-`k` headings by cosine to a query vector.
pub fn dense_rank(query: &[f64], mesh: &VectorStore, k: usize) -> Vec<ScoredTerm> {
    let mut out: Vec<ScoredTerm> = mesh
        .iter()
        .filter_map(|(h, v)| cosine(query, v).ok().map(|s| ScoredTerm::new(h, s, Source::Dense)))
        .collect();
    out.sort_by(rank_order);
    out.truncate(k);
    out
}

/// Partitions clauses into connected components of the graph with an edge
/// wherever both clauses embed and their cosine is at least `threshold`.
/// Clauses without an embedding are singletons. Groups hold clause indices
/// and are ordered by their first member.
pub fn semantic_groups(clauses: &[Clause], words: &VectorStore, threshold: f64) -> Vec<Vec<usize>> {
    let vecs: Vec<Option<Vec<f64>>> = clauses.iter().map(|c| embed_clause(c, words)).collect();
    let mut parent: Vec<usize> = (0..clauses.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..clauses.len() {
        for j in i + 1..clauses.len() {
            let (Some(a), Some(b)) = (&vecs[i], &vecs[j]) else { continue };
            if matches!(cosine(a, b), Ok(s) if s >= threshold) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot: HashMap<usize, usize> = HashMap::new();
    for i in 0..clauses.len() {
        let root = find(&mut parent, i);
        let g = *slot.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    groups
}
