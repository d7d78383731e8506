//! Generators and reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use meshforge::query::{Clause, Field, Operator, QueryNode};
use meshforge::retrieval::CorpusDoc;
use meshforge::scored::{ScoredTerm, Scope, Source, SuggestionList};
use meshforge::thesaurus::{Thesaurus, ThesaurusEntry};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub const WORDS: &[&str] = &[
    "pain", "painful", "pains", "heart", "hearts", "eye", "sepsis", "septic", "death", "cell", "Cell", "newborn",
    "infant", "infants", "lidocaine", "covid-19", "o'brien", "of", "and",
];

/// A small tree: Head > Eye > Retina, Head > Ear, Heart, Pain > Pain Postoperative.
pub fn small_thesaurus() -> Thesaurus {
    let e = |uid: &str, heading: &str, tn: &[&str]| ThesaurusEntry {
        uid: uid.into(),
        heading: heading.into(),
        synonyms: vec![],
        tree_numbers: tn.iter().map(|s| s.to_string()).collect(),
    };
    Thesaurus::from_entries(vec![
        e("D1", "Head", &["A01"]),
        e("D2", "Eye", &["A01.456"]),
        e("D3", "Retina", &["A01.456.505"]),
        e("D4", "Ear", &["A01.200"]),
        e("D5", "Heart", &["A07"]),
        e("D6", "Pain", &["C23.888"]),
        e("D7", "Pain, Postoperative", &["C23.888.330", "C23.550"]),
        e("D8", "Postoperative Complications", &["C23.550"]),
    ])
    .unwrap()
}

pub const HEADINGS: &[&str] =
    &["Head", "Eye", "Retina", "Ear", "Heart", "Pain", "Pain, Postoperative", "Postoperative Complications"];

fn phrase(rng: &mut ChaCha8Rng, max_words: usize) -> String {
    let n = rng.gen_range(1..=max_words);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_clause(rng: &mut ChaCha8Rng) -> Clause {
    if rng.gen_bool(0.3) {
        let h = if rng.gen_bool(0.9) { *HEADINGS.choose(rng).unwrap() } else { "Unknown Heading" };
        let c = Clause::mesh(h);
        return if rng.gen_bool(0.3) { c.without_explosion() } else { c };
    }
    let field = *[Field::Tiab, Field::Tiab, Field::Ti, Field::Ab, Field::Pt, Field::All].choose(rng).unwrap();
    let mut text = phrase(rng, 2);
    let truncated = rng.gen_bool(0.3);
    if truncated {
        // cut the last word to a prefix
        let keep = text.len() - rng.gen_range(0..text.len().min(3));
        text.truncate(keep.max(1));
        text = text.trim_end_matches([' ', '-', '\'']).to_string();
        if text.is_empty() || text.ends_with(|c: char| !c.is_alphanumeric()) {
            text = "pa".into();
        }
    }
    let c = Clause::new(&text, field);
    if truncated {
        c.with_truncation()
    } else {
        c
    }
}

pub fn random_query(rng: &mut ChaCha8Rng, depth: u32) -> QueryNode {
    if depth == 0 || rng.gen_bool(0.3) {
        return QueryNode::leaf(random_clause(rng));
    }
    match rng.gen_range(0..3) {
        0 => {
            let n = rng.gen_range(2..=3);
            QueryNode::and((0..n).map(|_| random_query(rng, depth - 1)).collect()).unwrap()
        }
        1 => {
            let n = rng.gen_range(2..=3);
            QueryNode::or((0..n).map(|_| random_query(rng, depth - 1)).collect()).unwrap()
        }
        _ => QueryNode::not(random_query(rng, depth - 1), random_query(rng, depth - 1)),
    }
}

pub fn random_doc(rng: &mut ChaCha8Rng, pmid: usize) -> CorpusDoc {
    let sentence = |rng: &mut ChaCha8Rng, n: usize| {
        let k = rng.gen_range(0..=n);
        (0..k).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let n_mesh = rng.gen_range(0..=3);
    let mesh: Vec<String> = HEADINGS.choose_multiple(rng, n_mesh).map(|s| s.to_string()).collect();
    let pts = ["Journal Article", "Randomized Controlled Trial", "Review"];
    let n_pt = rng.gen_range(0..=2);
    CorpusDoc {
        pmid: pmid.to_string(),
        title: sentence(rng, 5),
        abstract_text: sentence(rng, 10),
        mesh,
        keywords: if rng.gen_bool(0.3) { vec![sentence(rng, 2)] } else { vec![] },
        date: NaiveDate::from_ymd_opt(rng.gen_range(2000..=2022), rng.gen_range(1..=12), rng.gen_range(1..=28)).unwrap(),
        publication_types: pts.choose_multiple(rng, n_pt).map(|s| s.to_string()).collect(),
    }
}

pub fn random_corpus(rng: &mut ChaCha8Rng, max_docs: usize) -> Vec<CorpusDoc> {
    let n = rng.gen_range(1..=max_docs);
    (0..n).map(|i| random_doc(rng, 1000 + i)).collect()
}

fn toks(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn key(h: &str) -> String {
    h.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// True when `ancestor` sits strictly above `heading` in some tree.
fn is_descendant(t: &Thesaurus, heading: &str, ancestor: &str) -> bool {
    let find = |h: &str| t.entries().iter().find(|e| key(&e.heading) == key(h));
    let (Some(d), Some(a)) = (find(heading), find(ancestor)) else { return false };
    d.tree_numbers
        .iter()
        .any(|dn| a.tree_numbers.iter().any(|an| dn.len() > an.len() && dn.starts_with(an.as_str()) && dn[an.len()..].starts_with('.')))
}

fn field_tokens(doc: &CorpusDoc, field: Field) -> Vec<String> {
    let mut out = Vec::new();
    if matches!(field, Field::Ti | Field::Tiab | Field::All) {
        out.extend(toks(&doc.title));
    }
    if matches!(field, Field::Ab | Field::Tiab | Field::All) {
        out.extend(toks(&doc.abstract_text));
    }
    if matches!(field, Field::Pt | Field::All) {
        for p in &doc.publication_types {
            out.extend(toks(p));
        }
    }
    if field == Field::All {
        for k in &doc.keywords {
            out.extend(toks(k));
        }
        for h in &doc.mesh {
            out.extend(toks(h));
        }
    }
    out
}

/// Reference predicate: does one document satisfy `q`?
pub fn doc_matches(q: &QueryNode, doc: &CorpusDoc, t: Option<&Thesaurus>) -> bool {
    match q {
        QueryNode::Leaf(c) if c.field == Field::Mh => doc.mesh.iter().any(|h| {
            key(h) == key(&c.text) || (c.exploded && t.is_some_and(|t| is_descendant(t, h, &c.text)))
        }),
        QueryNode::Leaf(c) => {
            let have = field_tokens(doc, c.field);
            let want = toks(&c.text);
            let Some((last, rest)) = want.split_last() else { return false };
            rest.iter().all(|w| have.contains(w))
                && have.iter().any(|h| if c.truncated { h.starts_with(last.as_str()) } else { h == last })
        }
        QueryNode::Op { op: Operator::And, children } => children.iter().all(|c| doc_matches(c, doc, t)),
        QueryNode::Op { op: Operator::Or, children } => children.iter().any(|c| doc_matches(c, doc, t)),
        QueryNode::Op { op: Operator::Not, children } => {
            doc_matches(&children[0], doc, t) && !children[1..].iter().any(|c| doc_matches(c, doc, t))
        }
    }
}

pub fn brute_force(
    q: &QueryNode,
    docs: &[CorpusDoc],
    t: Option<&Thesaurus>,
    date_limit: Option<NaiveDate>,
) -> std::collections::BTreeSet<String> {
    docs.iter()
        .filter(|d| date_limit.is_none_or(|lim| d.date <= lim))
        .filter(|d| doc_matches(q, d, t))
        .map(|d| d.pmid.clone())
        .collect()
}

/// A list over headings `H00..H{pool}` with scores drawn from a few levels so
/// ties are common.
pub fn random_list(rng: &mut ChaCha8Rng, scope: Scope, pool: usize, max_len: usize) -> SuggestionList {
    let n = rng.gen_range(0..=max_len.min(pool));
    let mut heads: Vec<usize> = (0..pool).collect();
    heads.shuffle(rng);
    let tied = rng.gen_bool(0.5);
    let items = heads[..n]
        .iter()
        .map(|&h| {
            let s = if tied { rng.gen_range(-4..=4) as f64 / 4.0 } else { rng.gen_range(-1.0..1.0) };
            ScoredTerm::new(format!("H{h:02}"), s, Source::Dense)
        })
        .collect();
    SuggestionList::from_items(scope, items)
}

pub fn nonempty_list(rng: &mut ChaCha8Rng, pool: usize, max_len: usize) -> SuggestionList {
    loop {
        let l = random_list(rng, Scope::Fragment, pool, max_len);
        if !l.is_empty() {
            return l;
        }
    }
}

/// Unrounded F-measure in the `(1+β)pr/(βp+r)` weighting, for oracles.
pub fn f_reference(p: f64, r: f64, beta: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        (1.0 + beta) * p * r / (beta * p + r)
    }
}
