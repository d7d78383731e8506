//! Boolean retrieval over a local annotated corpus.
//!
//! Matching rules:
//!
//! * free-text fields match on lowercased alphanumeric tokens; a multi-word
//!   clause needs every token present in the field (bag of words, not a
//!   phrase), and a truncated clause matches its last token by prefix;
//! * `[tiab]` is title plus abstract; `[all]` adds MeSH heading tokens,
//!   keywords and publication types;
//! * `[mh]` matches a document indexed with that heading or, when exploded
//!   and a thesaurus was given at index time, with any of its descendants.
//!
//! A remote PubMed-compatible client lives in [`remote`].

pub mod remote;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::heading_key;
use crate::query::{Clause, Field, Operator, QueryNode};
use crate::text::tokens;
use crate::thesaurus::Thesaurus;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate pmid {0}")]
    DuplicatePmid(String),
    #[error("corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub pmid: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub mesh: Vec<String>,
    #[serde(default)]
    pub keywords: Vec<String>,
    pub date: NaiveDate,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub publication_types: Vec<String>,
}

type Postings = BTreeMap<String, BTreeSet<usize>>;

/// Inverted index over a corpus. Immutable once built.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    docs: Vec<CorpusDoc>,
    ti: Postings,
    ab: Postings,
    pt: Postings,
    all_extra: Postings,
    /// Heading key -> docs indexed with exactly that heading.
    mh: HashMap<String, BTreeSet<usize>>,
    /// Heading key -> docs indexed with it or a descendant.
    mh_exploded: HashMap<String, BTreeSet<usize>>,
}

fn add_tokens(p: &mut Postings, text: &str, doc: usize) {
    for t in tokens(text) {
        p.entry(t).or_default().insert(doc);
    }
}

impl CorpusIndex {
    /// Reads JSON lines of [`CorpusDoc`]. Blank lines are skipped.
    pub fn load(path: impl AsRef<Path>, thesaurus: Option<&Thesaurus>) -> Result<Self, RetrievalError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file), thesaurus)
    }

    pub fn read(reader: impl BufRead, thesaurus: Option<&Thesaurus>) -> Result<Self, RetrievalError> {
        let mut docs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: CorpusDoc = serde_json::from_str(&line)
                .map_err(|e| RetrievalError::Malformed { line: i + 1, message: e.to_string() })?;
            docs.push(doc);
        }
        Self::from_docs(docs, thesaurus)
    }

    pub fn from_docs(docs: Vec<CorpusDoc>, thesaurus: Option<&Thesaurus>) -> Result<Self, RetrievalError> {
        if docs.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let mut seen = HashSet::new();
        for d in &docs {
            if !seen.insert(d.pmid.as_str()) {
                return Err(RetrievalError::DuplicatePmid(d.pmid.clone()));
            }
        }
        let mut idx = CorpusIndex {
            docs: Vec::new(),
            ti: Postings::new(),
            ab: Postings::new(),
            pt: Postings::new(),
            all_extra: Postings::new(),
            mh: HashMap::new(),
            mh_exploded: HashMap::new(),
        };
        let mut missing = BTreeSet::new();
        for (i, d) in docs.iter().enumerate() {
            add_tokens(&mut idx.ti, &d.title, i);
            add_tokens(&mut idx.ab, &d.abstract_text, i);
            for pt in &d.publication_types {
                add_tokens(&mut idx.pt, pt, i);
            }
            for kw in &d.keywords {
                add_tokens(&mut idx.all_extra, kw, i);
            }
            for h in &d.mesh {
                add_tokens(&mut idx.all_extra, h, i);
                let key = heading_key(h);
                idx.mh.entry(key.clone()).or_default().insert(i);
                idx.mh_exploded.entry(key).or_default().insert(i);
                if let Some(t) = thesaurus {
                    if t.by_heading(h).is_none() {
                        missing.insert(h.clone());
                    }
                    for anc in t.ancestor_headings(h) {
                        idx.mh_exploded.entry(heading_key(anc)).or_default().insert(i);
                    }
                }
            }
        }
        if !missing.is_empty() {
            log::info!("{} corpus MeSH headings not in thesaurus, e.g. {:?}", missing.len(), missing.first());
        }
        idx.docs = docs;
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[CorpusDoc] {
        &self.docs
    }

    fn token_docs(&self, field: Field, token: &str, prefix: bool) -> BTreeSet<usize> {
        let lists: &[&Postings] = match field {
            Field::Ti => &[&self.ti],
            Field::Ab => &[&self.ab],
            Field::Tiab => &[&self.ti, &self.ab],
            Field::Pt => &[&self.pt],
            Field::All => &[&self.ti, &self.ab, &self.pt, &self.all_extra],
            Field::Mh => unreachable!("MeSH leaves are matched by heading"),
        };
        let mut out = BTreeSet::new();
        for p in lists {
            if prefix {
                for (_, docs) in p.range(token.to_string()..).take_while(|(k, _)| k.starts_with(token)) {
                    out.extend(docs);
                }
            } else if let Some(docs) = p.get(token) {
                out.extend(docs);
            }
        }
        out
    }

    fn clause_docs(&self, c: &Clause) -> BTreeSet<usize> {
        if c.field == Field::Mh {
            let map = if c.exploded { &self.mh_exploded } else { &self.mh };
            return map.get(&heading_key(&c.text)).cloned().unwrap_or_default();
        }
        let toks = tokens(&c.text);
        let Some((last, rest)) = toks.split_last() else { return BTreeSet::new() };
        let mut acc = self.token_docs(c.field, last, c.truncated);
        for t in rest {
            if acc.is_empty() {
                break;
            }
            let docs = self.token_docs(c.field, t, false);
            acc.retain(|d| docs.contains(d));
        }
        acc
    }

    fn eval(&self, q: &QueryNode) -> BTreeSet<usize> {
        match q {
            QueryNode::Leaf(c) => self.clause_docs(c),
            QueryNode::Op { op, children } => {
                let mut parts = children.iter().map(|c| self.eval(c));
                let first = parts.next().unwrap_or_default();
                match op {
                    Operator::And => parts.fold(first, |acc, s| acc.intersection(&s).copied().collect()),
                    Operator::Or => parts.fold(first, |mut acc, s| {
                        acc.extend(s);
                        acc
                    }),
                    Operator::Not => parts.fold(first, |acc, s| acc.difference(&s).copied().collect()),
                }
            }
        }
    }

    /// PMIDs matching `q`, restricted to documents dated on or before
    /// `date_limit` when given.
    pub fn execute(&self, q: &QueryNode, date_limit: Option<NaiveDate>) -> BTreeSet<String> {
        self.eval(q)
            .into_iter()
            .map(|i| &self.docs[i])
            .filter(|d| date_limit.is_none_or(|lim| d.date <= lim))
            .map(|d| d.pmid.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;
    use crate::thesaurus::ThesaurusEntry;

    fn doc(pmid: &str, title: &str, mesh: &[&str], date: &str) -> CorpusDoc {
        CorpusDoc {
            pmid: pmid.into(),
            title: title.into(),
            abstract_text: String::new(),
            mesh: mesh.iter().map(|s| s.to_string()).collect(),
            keywords: vec![],
            date: date.parse().unwrap(),
            publication_types: vec![],
        }
    }

    fn run(idx: &CorpusIndex, q: &str) -> Vec<String> {
        idx.execute(&parse_query(q).unwrap(), None).into_iter().collect()
    }

    #[test]
    fn free_text() {
        let idx = CorpusIndex::from_docs(
            vec![doc("1", "cell death", &[], "2019-01-01"), doc("2", "mortality", &[], "2019-01-01")],
            None,
        )
        .unwrap();
        assert_eq!(run(&idx, "death[tiab]"), ["1"]);
        assert_eq!(run(&idx, "mortal*"), ["2"]);
        assert_eq!(run(&idx, "death cell"), ["1"]);
        assert!(run(&idx, "cell mortality").is_empty());
        assert_eq!(run(&idx, "cell OR mortality"), ["1", "2"]);
        assert_eq!(run(&idx, "(cell OR mortality) NOT death"), ["2"]);
    }

    #[test]
    fn explosion_and_dates() {
        let t = Thesaurus::from_entries(vec![
            ThesaurusEntry { uid: "D1".into(), heading: "Head".into(), synonyms: vec![], tree_numbers: vec!["A01.456".into()] },
            ThesaurusEntry { uid: "D2".into(), heading: "Eye".into(), synonyms: vec![], tree_numbers: vec!["A01.456.505".into()] },
        ])
        .unwrap();
        let docs = vec![doc("1", "x", &["Eye"], "2018-05-01"), doc("2", "y", &["Head"], "2020-01-01")];
        let idx = CorpusIndex::from_docs(docs.clone(), Some(&t)).unwrap();
        assert_eq!(run(&idx, "Head[mh]"), ["1", "2"]);
        assert_eq!(run(&idx, "Head[mh:noexp]"), ["2"]);
        assert_eq!(run(&idx, "eye[mh]"), ["1"]);
        let limit = "2019-01-01".parse().unwrap();
        assert_eq!(idx.execute(&parse_query("Head[mh]").unwrap(), Some(limit)).len(), 1);

        let plain = CorpusIndex::from_docs(docs, None).unwrap();
        assert_eq!(run(&plain, "Head[mh]"), ["2"]);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(CorpusIndex::from_docs(vec![], None), Err(RetrievalError::EmptyCorpus)));
        let d = doc("1", "a", &[], "2019-01-01");
        assert!(matches!(CorpusIndex::from_docs(vec![d.clone(), d], None), Err(RetrievalError::DuplicatePmid(_))));
        let text = "{\"pmid\":\"1\",\"title\":\"x\",\"date\":\"2019-01-01\"}\nnot json\n";
        assert!(matches!(CorpusIndex::read(text.as_bytes(), None), Err(RetrievalError::Malformed { line: 2, .. })));
        let idx = CorpusIndex::read(&text.as_bytes()[..text.find('\n').unwrap()], None).unwrap();
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn all_field_and_pt() {
        let mut d = doc("1", "x", &["Pain"], "2019-01-01");
        d.keywords = vec!["opioid sparing".into()];
        d.publication_types = vec!["Randomized Controlled Trial".into()];
        let idx = CorpusIndex::from_docs(vec![d], None).unwrap();
        assert_eq!(run(&idx, "opioid[all]"), ["1"]);
        assert_eq!(run(&idx, "pain[all]"), ["1"]);
        assert!(run(&idx, "pain[tiab]").is_empty());
        assert_eq!(run(&idx, "randomized controlled trial[pt]"), ["1"]);
    }
}
