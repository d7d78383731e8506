//! Set-based effectiveness, suggestion overlap, and significance testing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::text::collapse_whitespace;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 paired samples, got {0}")]
    TooFewSamples(usize),
    #[error("comparison count must be at least 1")]
    NoComparisons,
    #[error("qrels line {line}: {message}")]
    Qrels { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which F-measure weighting to use.
///
/// `Linear` is `(1+β)·p·r / (β·p + r)` and is the default. `Textbook` is van Rijsbergen's
/// `(1+β²)·p·r / (β²·p + r)`. Both agree at β = 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FFormula {
    #[default]
    Linear,
    Textbook,
}

/// F-measure with the default ([`FFormula::Linear`]) weighting. Zero when
/// both inputs are zero.
///
/// ```
/// use meshforge::eval::f_beta;
/// let r = |x: f64| (x * 1e4).round() / 1e4;
/// assert_eq!(r(f_beta(0.0109, 0.9194, 1.0)), 0.0215);
/// assert_eq!(r(f_beta(0.0109, 0.9194, 3.0)), 0.0421);
/// ```
pub fn f_beta(p: f64, r: f64, beta: f64) -> f64 {
    f_beta_with(p, r, beta, FFormula::Linear)
}

pub fn f_beta_with(p: f64, r: f64, beta: f64, formula: FFormula) -> f64 {
    let w = match formula {
        FFormula::Linear => beta,
        FFormula::Textbook => beta * beta,
    };
    let denom = w * p + r;
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 + w) * p * r / denom
}

/// `|a ∩ b| / |a ∪ b|`, with two empty sets counting as identical.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Heading comparison key: case-folded, whitespace collapsed.
pub fn heading_key(h: &str) -> String {
    collapse_whitespace(h).to_lowercase()
}

pub fn heading_set<S: AsRef<str>>(headings: impl IntoIterator<Item = S>) -> BTreeSet<String> {
    headings.into_iter().map(|h| heading_key(h.as_ref())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub topic: String,
    pub retrieved: usize,
    pub relevant: usize,
    pub tp: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f3: f64,
    pub jaccard: f64,
    pub suggested_count: usize,
    /// Set when the topic has no relevant documents; recall is then 0.
    #[serde(default)]
    pub no_relevant: bool,
}

impl EvalReport {
    pub fn is_well_formed(&self) -> bool {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        self.tp <= self.retrieved.min(self.relevant)
            && [self.precision, self.recall, self.f1, self.f3, self.jaccard].into_iter().all(unit)
    }
}

pub fn evaluate_topic<S: AsRef<str>, O: AsRef<str>>(
    topic: &str,
    retrieved: &BTreeSet<String>,
    qrels: &BTreeSet<String>,
    suggested: impl IntoIterator<Item = S>,
    original: impl IntoIterator<Item = O>,
    formula: FFormula,
) -> EvalReport {
    let tp = retrieved.intersection(qrels).count();
    let precision = if retrieved.is_empty() { 0.0 } else { tp as f64 / retrieved.len() as f64 };
    let recall = if qrels.is_empty() { 0.0 } else { tp as f64 / qrels.len() as f64 };
    let suggested = heading_set(suggested);
    let original = heading_set(original);
    EvalReport {
        topic: topic.to_string(),
        retrieved: retrieved.len(),
        relevant: qrels.len(),
        tp,
        precision,
        recall,
        f1: f_beta_with(precision, recall, 1.0, formula),
        f3: f_beta_with(precision, recall, 3.0, formula),
        jaccard: jaccard(&suggested, &original),
        suggested_count: suggested.len(),
        no_relevant: qrels.is_empty(),
    }
}

/// Mean of each column over topics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanReport {
    pub topics: usize,
    pub retrieved: f64,
    pub relevant: f64,
    pub tp: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f3: f64,
    pub jaccard: f64,
    pub suggested_count: f64,
}

pub fn macro_average(reports: &[EvalReport]) -> MeanReport {
    let n = reports.len();
    let mean = |f: &dyn Fn(&EvalReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            reports.iter().map(f).sum::<f64>() / n as f64
        }
    };
    MeanReport {
        topics: n,
        retrieved: mean(&|r| r.retrieved as f64),
        relevant: mean(&|r| r.relevant as f64),
        tp: mean(&|r| r.tp as f64),
        precision: mean(&|r| r.precision),
        recall: mean(&|r| r.recall),
        f1: mean(&|r| r.f1),
        f3: mean(&|r| r.f3),
        jaccard: mean(&|r| r.jaccard),
        suggested_count: mean(&|r| r.suggested_count as f64),
    }
}

pub const REPORT_HEADER: &str = "topic\tretrieved\trelevant\ttp\tP\tR\tF1\tF3\tjaccard\tnum_suggested";

/// Tab-separated report, one row per topic then an `all` row of means.
pub fn report_tsv(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
            r.topic, r.retrieved, r.relevant, r.tp, r.precision, r.recall, r.f1, r.f3, r.jaccard, r.suggested_count
        )
        .unwrap();
    }
    let m = macro_average(reports);
    writeln!(
        out,
        "all\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
        m.retrieved, m.relevant, m.tp, m.precision, m.recall, m.f1, m.f3, m.jaccard, m.suggested_count
    )
    .unwrap();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub p_two_tailed: f64,
    pub p_bonferroni: f64,
}

/// Two-tailed paired t-test with Bonferroni adjustment for `comparisons`
/// tests. Differences with zero variance give p = 1 when their mean is zero
/// and p = 0 otherwise.
pub fn paired_t_test(xs: &[f64], ys: &[f64], comparisons: usize) -> Result<TTest, EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(EvalError::TooFewSamples(n));
    }
    if comparisons == 0 {
        return Err(EvalError::NoComparisons);
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        }
    } else {
        let t = mean / (var / n as f64).sqrt();
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
        (t, (2.0 * dist.cdf(-t.abs())).min(1.0))
    };
    Ok(TTest { t, p_two_tailed: p, p_bonferroni: (p * comparisons as f64).min(1.0) })
}

/// Relevance judgements by topic.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    topics: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// TREC format, `topic iteration docid relevance`, whitespace separated.
    /// Relevance above zero counts as relevant.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut topics: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.is_empty() {
                continue;
            }
            let err = |message: &str| EvalError::Qrels { line: i + 1, message: message.to_string() };
            let [topic, _, doc, rel] = cols[..] else {
                return Err(err("expected 4 columns"));
            };
            let rel: i64 = rel.parse().map_err(|_| err("relevance is not an integer"))?;
            let set = topics.entry(topic.to_string()).or_default();
            if rel > 0 {
                set.insert(doc.to_string());
            }
        }
        Ok(Qrels { topics })
    }

    pub fn relevant(&self, topic: &str) -> Option<&BTreeSet<String>> {
        self.topics.get(topic)
    }

    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.topics.keys().map(String::as_str)
    }

    pub fn insert(&mut self, topic: impl Into<String>, docs: impl IntoIterator<Item = String>) {
        self.topics.entry(topic.into()).or_default().extend(docs);
    }
}
