//! End-to-end runs: configuration, record formats, and orchestration of
//! fragment → suggest → refine → defragment → evaluate.
//!
//! Record formats (all JSON lines):
//!
//! * queries: `{"topic": "CD009642", "query": "..."}`
//! * fragment dump: [`FragmentDump`]
//! * suggestion run: [`TopicRun`]
//! * rebuilt queries: [`RebuiltQuery`]

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{semantic_groups, EmbedError, VectorKind, VectorStore};
use crate::eval::{evaluate_topic, EvalError, EvalReport, FFormula, Qrels};
use crate::fragment::{defragment, fragment, DefragmentError, Fragment, FragmentSuggestions};
use crate::query::{parse_query, Clause, ParseError, QueryNode};
use crate::refine::{refine_lists, union_headings, Objective, RefineError, Strategy};
use crate::retrieval::{CorpusIndex, RetrievalError};
use crate::scored::{Scope, SuggestionList};
use crate::suggest::external::{ExternalSuggester, Transport};
use crate::suggest::ltr::{linear_rank, FeatureContext, LinearWeights, LtrError};
use crate::suggest::{
    atm_fragment_list, combsum_rescore, normalized_combsum, suggest_atomic, Bm25Suggester, DenseSuggester,
    SuggestError, Suggester, DEFAULT_TOP_K,
};
use crate::thesaurus::{Thesaurus, ThesaurusError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("no suggesters configured")]
    NoSuggesters,
    #[error("atm only produces fragment-level lists; representation {0} is not supported")]
    AtmRepresentation(Representation),
    #[error("strategy {0} needs the fragment representation, got {1}")]
    StrategyRepresentation(&'static str, Representation),
    #[error("{what} requires paths.{path}")]
    MissingPath { what: &'static str, path: &'static str },
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("threshold must be in (0, 1], got {0}")]
    Threshold(f64),
    #[error("top_k must be at least 1")]
    TopK,
    #[error("invalid refinement: {0}")]
    Refinement(#[from] RefineError),
    #[error("config file: {0}")]
    Toml(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("thesaurus: {0}")]
    Thesaurus(#[from] ThesaurusError),
    #[error("vectors: {0}")]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Suggest(#[from] SuggestError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error("ranking model: {0}")]
    Ltr(#[from] LtrError),
    #[error("corpus: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("topic {topic}: {source}")]
    Parse { topic: String, source: ParseError },
    #[error("topic {topic}: {source}")]
    Defragment { topic: String, source: DefragmentError },
    #[error("topic {topic}: run has {found} fragments, query has {expected}")]
    FragmentCount { topic: String, expected: usize, found: usize },
    #[error("{path} line {line}: {message}")]
    Record { path: String, line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// One list per free-text clause.
    Atomic,
    /// One list per fragment.
    #[default]
    Fragment,
    /// One list per group of similar clauses.
    Semantic,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Atomic => "atomic",
            Representation::Fragment => "fragment",
            Representation::Semantic => "semantic",
        })
    }
}

impl std::str::FromStr for Representation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "atomic" => Ok(Representation::Atomic),
            "fragment" => Ok(Representation::Fragment),
            "semantic" => Ok(Representation::Semantic),
            _ => Err(format!("unknown representation: {s}")),
        }
    }
}

/// How per-clause lists are combined into fragment or group lists.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClauseFusion {
    /// CombSUM over min-max normalized lists.
    #[default]
    Normalized,
    /// CombSUM over raw scores.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SuggesterSpec {
    Atm,
    Bm25,
    Dense,
    External {
        name: String,
        transport: Transport,
        #[serde(default = "yes")]
        thread_safe: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub thesaurus: Option<PathBuf>,
    pub vectors_mesh: Option<PathBuf>,
    pub vectors_word: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    /// Linear ranking model weights; when set, lists are re-ranked with it
    /// before refinement.
    pub ltr_weights: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.thesaurus,
            &mut self.vectors_mesh,
            &mut self.vectors_word,
            &mut self.corpus,
            &mut self.qrels,
            &mut self.ltr_weights,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn check_exist(&self) -> Result<(), ConfigError> {
        for p in [&self.thesaurus, &self.vectors_mesh, &self.vectors_word, &self.corpus, &self.qrels, &self.ltr_weights]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                return Err(ConfigError::FileNotFound(p.clone()));
            }
        }
        Ok(())
    }
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_threshold() -> f64 {
    0.7
}

fn default_strategy() -> Strategy {
    Strategy::Fo
}

/// Everything a run needs, read from one TOML file. Relative paths are
/// resolved against the file's directory.
///
/// ```toml
/// representation = "fragment"
/// top_k = 20
/// threshold = 0.7
///
/// [refinement]
/// kind = "cg_cut"
/// kappa = 0.35
///
/// [[suggesters]]
/// kind = "dense"
///
/// [paths]
/// thesaurus = "thesaurus.jsonl"
/// vectors_mesh = "mesh.vec"
/// vectors_word = "words.vec"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub suggesters: Vec<SuggesterSpec>,
    #[serde(default)]
    pub representation: Representation,
    #[serde(default = "default_strategy")]
    pub refinement: Strategy,
    #[serde(default)]
    pub clause_fusion: ClauseFusion,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Cosine threshold for semantic grouping.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    /// Leave fragments that had no MeSH terms without suggestions.
    #[serde(default)]
    pub skip_fragments_without_mesh: bool,
    #[serde(default)]
    pub date_limit: Option<NaiveDate>,
    #[serde(default)]
    pub f_formula: FFormula,
    /// Measure maximized when tuning κ.
    #[serde(default)]
    pub objective: Objective,
    #[serde(default)]
    pub paths: Paths,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            suggesters: Vec::new(),
            representation: Representation::default(),
            refinement: default_strategy(),
            clause_fusion: ClauseFusion::default(),
            top_k: DEFAULT_TOP_K,
            threshold: default_threshold(),
            skip_fragments_without_mesh: false,
            date_limit: None,
            f_formula: FFormula::default(),
            objective: Objective::default(),
            paths: Paths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        cfg.paths.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks option consistency and that every needed path is set; file
    /// existence is checked separately by [`PipelineConfig::check_files`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_options()?;
        self.validate_paths()
    }

    /// [`PipelineConfig::validate`] without the path checks, for configs
    /// whose resources are supplied in memory.
    pub fn validate_options(&self) -> Result<(), ConfigError> {
        if self.suggesters.is_empty() {
            return Err(ConfigError::NoSuggesters);
        }
        if self.top_k == 0 {
            return Err(ConfigError::TopK);
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(ConfigError::Threshold(self.threshold));
        }
        self.refinement.validate()?;
        if matches!(self.refinement, Strategy::Sa | Strategy::So | Strategy::Ln { .. })
            && self.representation != Representation::Fragment
        {
            return Err(ConfigError::StrategyRepresentation(self.refinement.name(), self.representation));
        }
        if self.suggesters.contains(&SuggesterSpec::Atm) && self.representation != Representation::Fragment {
            return Err(ConfigError::AtmRepresentation(self.representation));
        }
        Ok(())
    }

    fn validate_paths(&self) -> Result<(), ConfigError> {
        let missing = |what, path| ConfigError::MissingPath { what, path };
        for s in &self.suggesters {
            match s {
                SuggesterSpec::Atm if self.paths.thesaurus.is_none() => return Err(missing("atm", "thesaurus")),
                SuggesterSpec::Bm25 if self.paths.thesaurus.is_none() => return Err(missing("bm25", "thesaurus")),
                SuggesterSpec::Dense if self.paths.vectors_mesh.is_none() => return Err(missing("dense", "vectors_mesh")),
                SuggesterSpec::Dense if self.paths.vectors_word.is_none() => return Err(missing("dense", "vectors_word")),
                _ => {}
            }
        }
        if self.representation == Representation::Semantic && self.paths.vectors_word.is_none() {
            return Err(missing("semantic representation", "vectors_word"));
        }
        if self.paths.ltr_weights.is_some() && self.paths.thesaurus.is_none() {
            return Err(missing("ltr_weights", "thesaurus"));
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<(), ConfigError> {
        self.paths.check_exist()
    }
}

/// Loaded artifacts shared by every request.
#[derive(Debug, Clone, Default)]
pub struct Resources {
    pub thesaurus: Option<Arc<Thesaurus>>,
    pub mesh_vectors: Option<Arc<VectorStore>>,
    pub word_vectors: Option<Arc<VectorStore>>,
    pub ltr: Option<LinearWeights>,
}

impl Resources {
    pub fn load(paths: &Paths) -> Result<Self, PipelineError> {
        let thesaurus = paths.thesaurus.as_ref().map(Thesaurus::load).transpose()?.map(Arc::new);
        let mesh_vectors =
            paths.vectors_mesh.as_ref().map(|p| VectorStore::load(p, VectorKind::MeshTerm)).transpose()?.map(Arc::new);
        let word_vectors =
            paths.vectors_word.as_ref().map(|p| VectorStore::load(p, VectorKind::Word)).transpose()?.map(Arc::new);
        let ltr = paths.ltr_weights.as_ref().map(LinearWeights::load).transpose()?;
        Ok(Resources { thesaurus, mesh_vectors, word_vectors, ltr })
    }
}

enum Method {
    Atm(Arc<Thesaurus>),
    Ranker(Box<dyn Suggester>),
}

/// A configured, ready-to-run suggestion pipeline.
pub struct Pipeline {
    config: PipelineConfig,
    resources: Resources,
    methods: Vec<Method>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline").field("config", &self.config).finish_non_exhaustive()
    }
}

/// One query from a queries file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub topic: String,
    pub query: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentInfo {
    pub index: usize,
    pub original: String,
    pub stripped: Option<String>,
    pub original_mesh: Vec<String>,
    pub clauses: Vec<Clause>,
}

impl From<&Fragment> for FragmentInfo {
    fn from(f: &Fragment) -> Self {
        FragmentInfo {
            index: f.index,
            original: f.original.to_query_string(),
            stripped: f.stripped.as_ref().map(QueryNode::to_query_string),
            original_mesh: f.original_mesh.clone(),
            clauses: f.atomic_clauses.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentDump {
    pub topic: String,
    pub fragments: Vec<FragmentInfo>,
}

/// Suggestions for one fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentRun {
    pub index: usize,
    pub stripped: Option<String>,
    pub original_mesh: Vec<String>,
    /// Full rankings, one per scope of the configured representation.
    pub candidates: Vec<SuggestionList>,
    /// The same rankings after refinement.
    pub suggestions: Vec<SuggestionList>,
    /// Headings going into the rebuilt query, in order.
    pub selected: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicRun {
    pub topic: String,
    pub fragments: Vec<FragmentRun>,
}

impl TopicRun {
    pub fn selected(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for f in &self.fragments {
            for h in &f.selected {
                if !out.iter().any(|o| o.eq_ignore_ascii_case(h)) {
                    out.push(h.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebuiltQuery {
    pub topic: String,
    pub query: String,
    pub suggested: Vec<String>,
    pub original_mesh: Vec<String>,
}

pub fn parse_record(topic: &str, query: &str) -> Result<QueryNode, PipelineError> {
    parse_query(query).map_err(|source| PipelineError::Parse { topic: topic.to_string(), source })
}

pub fn fragment_dump(rec: &QueryRecord) -> Result<FragmentDump, PipelineError> {
    let q = parse_record(&rec.topic, &rec.query)?;
    Ok(FragmentDump { topic: rec.topic.clone(), fragments: fragment(&q).iter().map(FragmentInfo::from).collect() })
}

/// Rebuilds `query` with the given per-fragment headings (by fragment
/// index; missing indices get none).
pub fn rebuild(topic: &str, query: &QueryNode, selected: &[(usize, Vec<String>)]) -> Result<QueryNode, PipelineError> {
    let parts: Vec<FragmentSuggestions> = fragment(query)
        .iter()
        .map(|f| {
            let headings = selected.iter().filter(|(i, _)| *i == f.index).flat_map(|(_, h)| h.clone()).collect();
            FragmentSuggestions::new(f, headings)
        })
        .collect();
    defragment(&parts).map_err(|source| PipelineError::Defragment { topic: topic.to_string(), source })
}

/// The query with all MeSH terms removed and nothing added.
pub fn stripped_query(topic: &str, query: &QueryNode) -> Result<QueryNode, PipelineError> {
    rebuild(topic, query, &[])
}

/// Rebuilds a query from a suggestion run.
pub fn rebuild_from_run(rec: &QueryRecord, run: &TopicRun) -> Result<RebuiltQuery, PipelineError> {
    let q = parse_record(&rec.topic, &rec.query)?;
    let frags = fragment(&q);
    if frags.len() != run.fragments.len() {
        return Err(PipelineError::FragmentCount {
            topic: rec.topic.clone(),
            expected: frags.len(),
            found: run.fragments.len(),
        });
    }
    let selected: Vec<(usize, Vec<String>)> = run.fragments.iter().map(|f| (f.index, f.selected.clone())).collect();
    let rebuilt = rebuild(&rec.topic, &q, &selected)?;
    let mut original_mesh: Vec<String> = Vec::new();
    for f in &frags {
        for h in &f.original_mesh {
            if !original_mesh.contains(h) {
                original_mesh.push(h.clone());
            }
        }
    }
    Ok(RebuiltQuery { topic: rec.topic.clone(), query: rebuilt.to_query_string(), suggested: run.selected(), original_mesh })
}

/// Evaluates rebuilt queries against a corpus. Topics missing from either
/// side are skipped with a warning.
pub fn evaluate_rebuilt(
    rebuilt: &[RebuiltQuery],
    index: &CorpusIndex,
    qrels: &Qrels,
    date_limit: Option<NaiveDate>,
    formula: FFormula,
) -> Result<Vec<EvalReport>, PipelineError> {
    let topics: BTreeSet<&str> = rebuilt.iter().map(|r| r.topic.as_str()).collect();
    for t in qrels.topics().filter(|t| !topics.contains(t)) {
        log::warn!("qrels topic {t} has no query; skipped");
    }
    let mut out = Vec::new();
    for r in rebuilt {
        let Some(rel) = qrels.relevant(&r.topic) else {
            log::warn!("topic {} has no qrels; skipped", r.topic);
            continue;
        };
        let q = parse_record(&r.topic, &r.query)?;
        let retrieved = index.execute(&q, date_limit);
        out.push(evaluate_topic(&r.topic, &retrieved, rel, &r.suggested, &r.original_mesh, formula));
    }
    Ok(out)
}

impl Pipeline {
    /// Validates `config` and loads the files it names.
    pub fn from_config(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        config.check_files()?;
        let resources = Resources::load(&config.paths)?;
        Self::new(config, resources)
    }

    /// Builds a pipeline over already loaded resources. Paths in `config`
    /// are not consulted.
    pub fn new(config: PipelineConfig, resources: Resources) -> Result<Self, PipelineError> {
        config.validate_options()?;
        let missing = |what, path| ConfigError::MissingPath { what, path };
        let mut methods = Vec::new();
        for s in &config.suggesters {
            let m = match s {
                SuggesterSpec::Atm => Method::Atm(resources.thesaurus.clone().ok_or(missing("atm", "thesaurus"))?),
                SuggesterSpec::Bm25 => Method::Ranker(Box::new(Bm25Suggester {
                    thesaurus: resources.thesaurus.clone().ok_or(missing("bm25", "thesaurus"))?,
                })),
                SuggesterSpec::Dense => Method::Ranker(Box::new(DenseSuggester {
                    mesh: resources.mesh_vectors.clone().ok_or(missing("dense", "vectors_mesh"))?,
                    words: resources.word_vectors.clone().ok_or(missing("dense", "vectors_word"))?,
                })),
                SuggesterSpec::External { name, transport, thread_safe } => {
                    Method::Ranker(Box::new(ExternalSuggester::new(name.clone(), transport.clone(), *thread_safe)?))
                }
            };
            methods.push(m);
        }
        if config.representation == Representation::Semantic && resources.word_vectors.is_none() {
            return Err(missing("semantic representation", "vectors_word").into());
        }
        if resources.ltr.is_some() && resources.thesaurus.is_none() {
            return Err(missing("ltr_weights", "thesaurus").into());
        }
        Ok(Pipeline { config, resources, methods })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    fn thread_safe(&self) -> bool {
        self.methods.iter().all(|m| match m {
            Method::Atm(_) => true,
            Method::Ranker(s) => s.is_thread_safe(),
        })
    }

    fn combine_clauses(&self, lists: &[SuggestionList]) -> SuggestionList {
        match self.config.clause_fusion {
            ClauseFusion::Normalized => normalized_combsum(lists),
            ClauseFusion::Raw => combsum_rescore(lists),
        }
    }

    /// Per-clause lists of every ranking method, fused across methods.
    fn clause_lists(&self, f: &Fragment) -> Result<Vec<SuggestionList>, PipelineError> {
        let k = self.config.top_k;
        let per_method: Vec<Vec<SuggestionList>> = self
            .methods
            .iter()
            .filter_map(|m| match m {
                Method::Ranker(s) => Some(suggest_atomic(f, s.as_ref(), k)),
                Method::Atm(_) => None,
            })
            .collect::<Result<_, _>>()?;
        Ok(fuse_methods(per_method, f.atomic_clauses.len(), Scope::Clause))
    }

    /// Ranked lists for `f` in the configured representation.
    pub fn candidates(&self, f: &Fragment) -> Result<(Vec<SuggestionList>, Vec<SuggestionList>), PipelineError> {
        let has_ranker = self.methods.iter().any(|m| matches!(m, Method::Ranker(_)));
        let clause_lists = if has_ranker { self.clause_lists(f)? } else { Vec::new() };
        let lists = match self.config.representation {
            Representation::Atomic => clause_lists.clone(),
            Representation::Semantic => {
                let words = self.resources.word_vectors.as_deref().expect("checked in new");
                semantic_groups(&f.atomic_clauses, words, self.config.threshold)
                    .iter()
                    .enumerate()
                    .map(|(g, members)| {
                        let group: Vec<SuggestionList> = members.iter().map(|&i| clause_lists[i].clone()).collect();
                        let mut l = self.combine_clauses(&group);
                        l.scope = Scope::Group(g);
                        l
                    })
                    .collect()
            }
            Representation::Fragment => {
                let mut per_method = Vec::new();
                if has_ranker {
                    let mut l = self.combine_clauses(&clause_lists);
                    l.scope = Scope::Fragment;
                    per_method.push(l);
                }
                for m in &self.methods {
                    if let Method::Atm(t) = m {
                        per_method.push(atm_fragment_list(f, t));
                    }
                }
                let mut fused = if per_method.len() == 1 { per_method.pop().unwrap() } else { normalized_combsum(&per_method) };
                fused.scope = Scope::Fragment;
                vec![fused]
            }
        };
        let lists = match (&self.resources.ltr, &self.resources.thesaurus) {
            (Some(w), Some(t)) => lists
                .iter()
                .map(|l| linear_rank(w, &FeatureContext { list: l, clause_lists: &clause_lists, fragment: f, thesaurus: t }))
                .collect::<Result<_, _>>()?,
            _ => lists,
        };
        Ok((lists, clause_lists))
    }

    pub fn suggest_fragment(&self, f: &Fragment) -> Result<FragmentRun, PipelineError> {
        let mut run = FragmentRun {
            index: f.index,
            stripped: f.stripped.as_ref().map(QueryNode::to_query_string),
            original_mesh: f.original_mesh.clone(),
            candidates: Vec::new(),
            suggestions: Vec::new(),
            selected: Vec::new(),
            note: None,
        };
        if f.atomic_clauses.is_empty() {
            run.note = Some("no free-text clauses".into());
            return Ok(run);
        }
        if self.config.skip_fragments_without_mesh && f.original_mesh.is_empty() {
            run.note = Some("skipped: fragment had no MeSH terms".into());
            return Ok(run);
        }
        let (candidates, _) = self.candidates(f)?;
        run.candidates = candidates;
        match refine_lists(&run.candidates, f, &self.config.refinement) {
            Ok(cut) => {
                run.selected = union_headings(&cut);
                run.suggestions = cut;
            }
            Err(RefineError::MissingOriginalMesh) => {
                log::warn!("fragment {}: strategy so without original MeSH; no suggestions", f.index);
                run.note = Some("strategy so: fragment had no MeSH terms".into());
                run.suggestions = run.candidates.iter().map(|l| SuggestionList::empty(l.scope)).collect();
            }
            Err(e) => return Err(e.into()),
        }
        Ok(run)
    }

    pub fn suggest_query(&self, topic: &str, q: &QueryNode) -> Result<TopicRun, PipelineError> {
        let frags = fragment(q);
        let fragments = if self.thread_safe() {
            frags.par_iter().map(|f| self.suggest_fragment(f)).collect::<Result<_, _>>()?
        } else {
            frags.iter().map(|f| self.suggest_fragment(f)).collect::<Result<_, _>>()?
        };
        Ok(TopicRun { topic: topic.to_string(), fragments })
    }

    pub fn suggest_record(&self, rec: &QueryRecord) -> Result<TopicRun, PipelineError> {
        let q = parse_record(&rec.topic, &rec.query)?;
        self.suggest_query(&rec.topic, &q)
    }

    pub fn suggest_all(&self, records: &[QueryRecord]) -> Result<Vec<TopicRun>, PipelineError> {
        if self.thread_safe() {
            records.par_iter().map(|r| self.suggest_record(r)).collect()
        } else {
            records.iter().map(|r| self.suggest_record(r)).collect()
        }
    }
}

/// Fuses same-position lists across methods. A single method's lists pass
/// through unchanged.
fn fuse_methods(mut per_method: Vec<Vec<SuggestionList>>, n: usize, scope: fn(usize) -> Scope) -> Vec<SuggestionList> {
    if per_method.len() == 1 {
        return per_method.pop().unwrap();
    }
    (0..n)
        .map(|i| {
            let same: Vec<SuggestionList> = per_method.iter().map(|m| m[i].clone()).collect();
            let mut l = normalized_combsum(&same);
            l.scope = scope(i);
            l
        })
        .collect()
}

/// Reads JSON lines, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, PipelineError> {
    let path = path.as_ref();
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Record {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
