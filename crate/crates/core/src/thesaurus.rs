//! The MeSH thesaurus and the two lexical suggestion backends built on it:
//! longest-match exact mapping ([`atm_suggest`]) and BM25 retrieval over
//! synonyms ([`bm25_suggest`]).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::{parse_query, Clause};
use crate::scored::{rank_order, ScoredTerm, Source};
use crate::text::{content_tokens, match_key, tokens};

/// BM25 term-frequency saturation.
pub const BM25_K1: f64 = 1.2;
/// BM25 length normalization.
pub const BM25_B: f64 = 0.75;

/// One MeSH descriptor. File format: one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThesaurusEntry {
    pub uid: String,
    pub heading: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    #[serde(default)]
    pub tree_numbers: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ThesaurusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate uid {uid}")]
    DuplicateUid { line: usize, uid: String },
    #[error("line {line}: duplicate heading {heading}")]
    DuplicateHeading { line: usize, heading: String },
    #[error("empty thesaurus")]
    Empty,
}

#[derive(Debug, Clone)]
struct SynonymDoc {
    entry: usize,
    len: usize,
}

/// BM25 index with one document per (entry, synonym) pair.
#[derive(Debug, Clone, Default)]
struct SynonymIndex {
    docs: Vec<SynonymDoc>,
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    avgdl: f64,
}

impl SynonymIndex {
    fn build(entries: &[ThesaurusEntry]) -> Self {
        let mut idx = SynonymIndex::default();
        let mut total = 0usize;
        for (e, entry) in entries.iter().enumerate() {
            for syn in &entry.synonyms {
                let toks = content_tokens(syn);
                let doc = idx.docs.len();
                let mut tf: BTreeMap<String, u32> = BTreeMap::new();
                for t in &toks {
                    *tf.entry(t.clone()).or_default() += 1;
                }
                for (t, n) in tf {
                    idx.postings.entry(t).or_default().push((doc, n));
                }
                total += toks.len();
                idx.docs.push(SynonymDoc { entry: e, len: toks.len() });
            }
        }
        idx.avgdl = if idx.docs.is_empty() { 0.0 } else { total as f64 / idx.docs.len() as f64 };
        idx
    }

    fn df(&self, token: &str) -> usize {
        self.postings.get(token).map_or(0, Vec::len)
    }

    fn idf(&self, token: &str) -> f64 {
        bm25_idf(self.docs.len(), self.df(token))
    }

    fn prefix_matches<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = &'a String> + 'a {
        self.postings
            .range::<str, _>((std::ops::Bound::Included(prefix), std::ops::Bound::Unbounded))
            .map(|(k, _)| k)
            .take_while(move |k| k.starts_with(prefix))
    }
}

/// Lucene-style idf: `ln(1 + (N - df + 0.5) / (df + 0.5))`.
pub fn bm25_idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Loaded thesaurus; immutable after construction.
#[derive(Debug, Clone)]
pub struct Thesaurus {
    entries: Vec<ThesaurusEntry>,
    by_uid: HashMap<String, usize>,
    by_heading: HashMap<String, usize>,
    exact: HashMap<String, usize>,
    by_tree_number: HashMap<String, usize>,
    index: SynonymIndex,
}

impl Thesaurus {
    /// Reads a JSONL thesaurus file. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ThesaurusError> {
        let reader = BufReader::new(File::open(path)?);
        Self::read(reader)
    }

    pub fn read(reader: impl BufRead) -> Result<Self, ThesaurusError> {
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ThesaurusEntry = serde_json::from_str(&line).map_err(|e| ThesaurusError::Malformed {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((i + 1, entry));
        }
        Self::build(entries)
    }

    /// Builds from in-memory entries; line numbers in errors are 1-based positions.
    pub fn from_entries(entries: Vec<ThesaurusEntry>) -> Result<Self, ThesaurusError> {
        Self::build(entries.into_iter().enumerate().map(|(i, e)| (i + 1, e)).collect())
    }

    fn build(raw: Vec<(usize, ThesaurusEntry)>) -> Result<Self, ThesaurusError> {
        if raw.is_empty() {
            return Err(ThesaurusError::Empty);
        }
        let mut entries = Vec::with_capacity(raw.len());
        let mut by_uid = HashMap::new();
        let mut by_heading = HashMap::new();
        let mut by_tree_number = HashMap::new();
        for (line, mut entry) in raw {
            if entry.uid.trim().is_empty() || entry.heading.trim().is_empty() {
                return Err(ThesaurusError::Malformed {
                    line,
                    message: "uid and heading must be non-empty".into(),
                });
            }
            let idx = entries.len();
            if by_uid.insert(entry.uid.clone(), idx).is_some() {
                return Err(ThesaurusError::DuplicateUid { line, uid: entry.uid });
            }
            if by_heading.insert(entry.heading.to_lowercase(), idx).is_some() {
                return Err(ThesaurusError::DuplicateHeading { line, heading: entry.heading });
            }
            // heading first, then distinct synonyms
            let mut synonyms = vec![entry.heading.clone()];
            for s in entry.synonyms.drain(..) {
                if !synonyms.iter().any(|x| x.eq_ignore_ascii_case(&s)) && !s.trim().is_empty() {
                    synonyms.push(s);
                }
            }
            entry.synonyms = synonyms;
            for tn in &entry.tree_numbers {
                by_tree_number.entry(tn.clone()).or_insert(idx);
            }
            entries.push(entry);
        }

        // Headings take precedence over other entries' synonyms; otherwise first wins.
        let mut exact = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            exact.insert(match_key(&e.heading), i);
        }
        for (i, e) in entries.iter().enumerate() {
            for s in &e.synonyms[1..] {
                exact.entry(match_key(s)).or_insert(i);
            }
        }
        exact.remove("");

        let index = SynonymIndex::build(&entries);
        Ok(Thesaurus {
            entries,
            by_uid,
            by_heading,
            exact,
            by_tree_number,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ThesaurusEntry] {
        &self.entries
    }

    pub fn by_uid(&self, uid: &str) -> Option<&ThesaurusEntry> {
        self.by_uid.get(uid).map(|&i| &self.entries[i])
    }

    /// Case-insensitive heading lookup.
    pub fn by_heading(&self, heading: &str) -> Option<&ThesaurusEntry> {
        self.by_heading.get(&heading.to_lowercase()).map(|&i| &self.entries[i])
    }

    /// Normalized exact lookup of a heading or synonym.
    pub fn exact_map(&self, term: &str) -> Option<&ThesaurusEntry> {
        self.exact.get(&match_key(term)).map(|&i| &self.entries[i])
    }

    /// Headings owning a proper ancestor of any of `heading`'s tree numbers.
    pub fn ancestor_headings(&self, heading: &str) -> Vec<&str> {
        let Some(entry) = self.by_heading(heading) else { return Vec::new() };
        let mut out: Vec<&str> = Vec::new();
        for tn in &entry.tree_numbers {
            for anc in tree_ancestors(tn) {
                if let Some(&i) = self.by_tree_number.get(anc) {
                    let h = self.entries[i].heading.as_str();
                    if h != entry.heading && !out.contains(&h) {
                        out.push(h);
                    }
                }
            }
        }
        out
    }

    /// Smallest depth over the entry's tree numbers (`"A01"` is depth 1), or 0 without any.
    pub fn tree_depth(&self, heading: &str) -> usize {
        self.by_heading(heading)
            .and_then(|e| e.tree_numbers.iter().map(|t| t.split('.').count()).min())
            .unwrap_or(0)
    }

    /// Number of indexed synonym documents.
    pub fn synonym_doc_count(&self) -> usize {
        self.index.docs.len()
    }

    /// BM25 idf of a token in the synonym index.
    pub fn idf(&self, token: &str) -> f64 {
        self.index.idf(token)
    }

    pub fn avg_synonym_len(&self) -> f64 {
        self.index.avgdl
    }
}

/// Proper ancestors of a dotted tree number, shortest first.
pub fn tree_ancestors(tree_number: &str) -> impl Iterator<Item = &str> {
    tree_number
        .match_indices('.')
        .map(move |(i, _)| &tree_number[..i])
}

/// Longest-match exact mapping over a (stripped) fragment, standing in for
/// PubMed's automatic term mapping.
///
/// Each free-text clause is scanned left to right; at every position the
/// longest token n-gram present in the exact map is emitted with score `n`
/// and the scan resumes after it. If `fragment_text` does not parse, it is
/// scanned as a single clause.
pub fn atm_suggest(fragment_text: &str, t: &Thesaurus) -> Vec<ScoredTerm> {
    let texts: Vec<String> = match parse_query(fragment_text) {
        Ok(q) => q
            .leaves()
            .into_iter()
            .filter(|c| !c.is_mesh())
            .map(|c| c.text.clone())
            .collect(),
        Err(_) => vec![fragment_text.to_string()],
    };
    atm_suggest_texts(texts.iter().map(String::as_str), t)
}

/// [`atm_suggest`] over already-extracted clauses.
pub fn atm_suggest_clauses(clauses: &[Clause], t: &Thesaurus) -> Vec<ScoredTerm> {
    atm_suggest_texts(clauses.iter().filter(|c| !c.is_mesh()).map(|c| c.text.as_str()), t)
}

fn atm_suggest_texts<'a>(texts: impl Iterator<Item = &'a str>, t: &Thesaurus) -> Vec<ScoredTerm> {
    let mut best: HashMap<usize, usize> = HashMap::new();
    for text in texts {
        for (entry, n) in longest_matches(&tokens(text), t) {
            let slot = best.entry(entry).or_insert(0);
            *slot = (*slot).max(n);
        }
    }
    let mut out: Vec<ScoredTerm> = best
        .into_iter()
        .map(|(e, n)| ScoredTerm::new(t.entries[e].heading.clone(), n as f64, Source::Atm))
        .collect();
    out.sort_by(rank_order);
    out
}

/// Greedy non-overlapping longest matches: (entry index, n-gram length).
fn longest_matches(toks: &[String], t: &Thesaurus) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let mut matched = None;
        for n in (1..=toks.len() - i).rev() {
            let key = toks[i..i + n].join(" ");
            if let Some(&e) = t.exact.get(&key) {
                matched = Some((e, n));
                break;
            }
        }
        match matched {
            Some((e, n)) => {
                out.push((e, n));
                i += n;
            }
            None => i += 1,
        }
    }
    out
}

/// Query terms for BM25: content tokens, with the last token expanded over
/// the index vocabulary when the clause is truncated. Duplicates are removed.
fn bm25_query_terms(clause: &Clause, t: &Thesaurus) -> Vec<String> {
    let mut terms: Vec<String> = Vec::new();
    let raw = tokens(&clause.text);
    let (prefix, rest) = if clause.truncated {
        match raw.split_last() {
            Some((last, rest)) => (Some(last.clone()), rest.to_vec()),
            None => (None, Vec::new()),
        }
    } else {
        (None, raw)
    };
    for tok in rest {
        if !crate::text::is_stopword(&tok) && !terms.contains(&tok) {
            terms.push(tok);
        }
    }
    if let Some(p) = prefix {
        for m in t.index.prefix_matches(&p) {
            if !terms.contains(m) {
                terms.push(m.clone());
            }
        }
    }
    terms
}

/// Top-`k` headings by BM25 against their synonyms; an entry scores the
/// maximum over its synonyms. Only entries matching at least one query term
/// are returned, in rank order.
pub fn bm25_suggest(clause: &Clause, t: &Thesaurus, k: usize) -> Vec<ScoredTerm> {
    let idx = &t.index;
    let terms = bm25_query_terms(clause, t);
    let mut doc_scores: HashMap<usize, f64> = HashMap::new();
    for term in &terms {
        let Some(postings) = idx.postings.get(term) else { continue };
        let idf = idx.idf(term);
        for &(doc, tf) in postings {
            let tf = tf as f64;
            let dl = idx.docs[doc].len as f64;
            let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * dl / idx.avgdl);
            *doc_scores.entry(doc).or_default() += idf * tf * (BM25_K1 + 1.0) / (tf + norm);
        }
    }
    let mut entry_scores: HashMap<usize, f64> = HashMap::new();
    for (doc, s) in doc_scores {
        let e = idx.docs[doc].entry;
        let slot = entry_scores.entry(e).or_insert(f64::NEG_INFINITY);
        *slot = slot.max(s);
    }
    let mut out: Vec<ScoredTerm> = entry_scores
        .into_iter()
        .map(|(e, s)| ScoredTerm::new(t.entries[e].heading.clone(), s, Source::Bm25))
        .collect();
    out.sort_by(rank_order);
    out.truncate(k);
    out
}

/// Converts the NLM MeSH descriptor ASCII export (`d20XX.bin`) into entries.
/// Records lacking `MH` or `UI` are skipped.
pub fn convert_mesh_ascii(reader: impl BufRead) -> Result<Vec<ThesaurusEntry>, std::io::Error> {
    let mut out = Vec::new();
    let mut cur: Option<ThesaurusEntry> = None;
    let flush = |cur: &mut Option<ThesaurusEntry>, out: &mut Vec<ThesaurusEntry>| {
        if let Some(e) = cur.take() {
            if !e.uid.is_empty() && !e.heading.is_empty() {
                out.push(e);
            }
        }
    };
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end();
        if line == "*NEWRECORD" {
            flush(&mut cur, &mut out);
            cur = Some(ThesaurusEntry {
                uid: String::new(),
                heading: String::new(),
                synonyms: Vec::new(),
                tree_numbers: Vec::new(),
            });
            continue;
        }
        let (Some(e), Some((key, value))) = (cur.as_mut(), line.split_once(" = ")) else {
            continue;
        };
        match key {
            "MH" => e.heading = value.to_string(),
            "UI" => e.uid = value.to_string(),
            "MN" => e.tree_numbers.push(value.to_string()),
            "ENTRY" | "PRINT ENTRY" => {
                let term = value.split('|').next().unwrap_or_default().to_string();
                if !term.is_empty() && !e.synonyms.contains(&term) {
                    e.synonyms.push(term);
                }
            }
            _ => {}
        }
    }
    flush(&mut cur, &mut out);
    Ok(out)
}

/// Set of distinct lowercased tokens across all synonyms of an entry.
pub fn entry_vocabulary(entry: &ThesaurusEntry) -> HashSet<String> {
    entry.synonyms.iter().flat_map(|s| content_tokens(s)).collect()
}
