use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use meshforge::eval::{paired_t_test, report_tsv, FFormula, Qrels};
use meshforge::fragment::fragment;
use meshforge::pipeline::{
    evaluate_rebuilt, fragment_dump, parse_record, read_jsonl, rebuild_from_run, write_jsonl, Pipeline,
    PipelineConfig, QueryRecord, RebuiltQuery, Representation, SuggesterSpec, TopicRun,
};
use meshforge::refine::{fit_linear, tune_kappa, Objective, Strategy};
use meshforge::retrieval::CorpusIndex;
use meshforge::thesaurus::{convert_mesh_ascii, Thesaurus};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "meshforge", version, about = "MeSH term suggestion for Boolean queries")]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by all commands. Flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// Pipeline config (TOML).
    #[arg(long, global = true, env = "MESHFORGE_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub thesaurus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vectors_mesh: Option<PathBuf>,
    #[arg(long, global = true)]
    pub vectors_word: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub qrels: Option<PathBuf>,
    /// Linear ranking model weights, one per line.
    #[arg(long, global = true)]
    pub ltr_weights: Option<PathBuf>,
    /// Suggestion method; repeat to fuse several (atm, bm25, dense).
    #[arg(long = "suggester", global = true)]
    pub suggesters: Vec<String>,
    /// atomic, fragment or semantic.
    #[arg(long, global = true)]
    pub representation: Option<Representation>,
    /// fo, sa, so, cg_cut[:kappa] or ln:a,b.
    #[arg(long, global = true)]
    pub strategy: Option<String>,
    /// κ for the cumulative-gain cut-off; implies --strategy cg_cut.
    #[arg(long, global = true)]
    pub kappa: Option<f64>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Cosine threshold for semantic grouping.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Only documents published on or before this day are retrieved.
    #[arg(long, global = true)]
    pub date_limit: Option<NaiveDate>,
    /// Leave fragments that had no MeSH terms without suggestions.
    #[arg(long, global = true)]
    pub skip_fragments_without_mesh: bool,
    /// Use (1+β²)pr/(β²p+r) instead of the default F-measure weighting.
    #[arg(long, global = true)]
    pub textbook_f: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse one query and print its tree as JSON.
    Parse { query: String },
    /// Split queries into fragments.
    Fragment {
        queries: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Suggest MeSH terms for every fragment.
    Suggest {
        queries: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Rebuild queries from a suggestion run.
    Defragment {
        run: PathBuf,
        queries: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run rebuilt queries against the corpus and score them.
    Evaluate {
        rebuilt: PathBuf,
        /// Queries whose MeSH terms are the reference for overlap; defaults to
        /// the terms recorded in the rebuilt file.
        #[arg(long)]
        originals: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Pick κ on a suggestion run, against the fragments' original MeSH terms.
    TuneKappa {
        run: PathBuf,
        #[arg(long)]
        objective: Option<Objective>,
    },
    /// Fit MeSH count against free-text clause count over query fragments.
    FitLinear { queries: PathBuf },
    /// Convert the NLM descriptor ASCII file to a JSONL thesaurus.
    ConvertMesh {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Paired t-test between two evaluation reports.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Report column: P, R, F1, F3 or jaccard.
        #[arg(long, default_value = "F1")]
        measure: String,
        #[arg(long, default_value_t = 1)]
        comparisons: usize,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn parse_suggester(s: &str) -> Result<SuggesterSpec, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "atm" => Ok(SuggesterSpec::Atm),
        "bm25" => Ok(SuggesterSpec::Bm25),
        "dense" => Ok(SuggesterSpec::Dense),
        _ => Err(CliError::new("usage", format!("unknown suggester {s:?}; external suggesters go in the config file"))),
    }
}

/// Config file (if any) with flag overrides applied. Not validated.
pub fn build_config(opts: &GlobalOpts) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &opts.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let paths = &mut cfg.paths;
    for (flag, slot) in [
        (&opts.thesaurus, &mut paths.thesaurus),
        (&opts.vectors_mesh, &mut paths.vectors_mesh),
        (&opts.vectors_word, &mut paths.vectors_word),
        (&opts.corpus, &mut paths.corpus),
        (&opts.qrels, &mut paths.qrels),
        (&opts.ltr_weights, &mut paths.ltr_weights),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    if !opts.suggesters.is_empty() {
        cfg.suggesters = opts.suggesters.iter().map(|s| parse_suggester(s)).collect::<Result<_, _>>()?;
    }
    if let Some(r) = opts.representation {
        cfg.representation = r;
    }
    cfg.refinement = strategy_override(cfg.refinement, opts.strategy.as_deref(), opts.kappa)?;
    if let Some(k) = opts.top_k {
        cfg.top_k = k;
    }
    if let Some(t) = opts.threshold {
        cfg.threshold = t;
    }
    if opts.date_limit.is_some() {
        cfg.date_limit = opts.date_limit;
    }
    if opts.skip_fragments_without_mesh {
        cfg.skip_fragments_without_mesh = true;
    }
    if opts.textbook_f {
        cfg.f_formula = FFormula::Textbook;
    }
    Ok(cfg)
}

/// Applies `--strategy` / `--kappa` style overrides to a configured strategy.
pub fn strategy_override(current: Strategy, strategy: Option<&str>, kappa: Option<f64>) -> Result<Strategy, CliError> {
    let bad = |e: meshforge::refine::RefineError| CliError::new("invalid_config", e.to_string());
    let base = match strategy {
        Some(s) if s.eq_ignore_ascii_case("cg_cut") || s.eq_ignore_ascii_case("cut") => match (kappa, current) {
            (Some(k), _) => Strategy::CgCut { kappa: k },
            (None, Strategy::CgCut { kappa }) => Strategy::CgCut { kappa },
            (None, _) => return Err(CliError::new("usage", "--strategy cg_cut needs --kappa")),
        },
        Some(s) => s.parse().map_err(bad)?,
        None => current,
    };
    let s = match (base, kappa) {
        (_, None) => base,
        (Strategy::CgCut { .. }, Some(k)) => Strategy::CgCut { kappa: k },
        (_, Some(_)) if strategy.is_some() => {
            return Err(CliError::new("usage", "--kappa only applies to the cg_cut strategy"));
        }
        (_, Some(k)) => Strategy::CgCut { kappa: k },
    };
    s.validate().map_err(bad)?;
    Ok(s)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_at(p, e))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn io_at(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("io", format!("{}: {e}", path.display()))
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf, CliError> {
    p.as_ref().ok_or_else(|| CliError::new("invalid_config", format!("--{flag} (or paths.{}) is required", flag.replace('-', "_"))))
}

fn load_index(cfg: &PipelineConfig) -> Result<CorpusIndex, CliError> {
    let corpus = require(&cfg.paths.corpus, "corpus")?;
    let thesaurus = cfg.paths.thesaurus.as_ref().map(Thesaurus::load).transpose().map_err(|e| CliError::new("invalid_input", format!("thesaurus: {e}")))?;
    CorpusIndex::load(corpus, thesaurus.as_ref()).map_err(|e| CliError::new("invalid_input", format!("corpus: {e}")))
}

fn load_qrels(cfg: &PipelineConfig) -> Result<Qrels, CliError> {
    let path = require(&cfg.paths.qrels, "qrels")?;
    Qrels::load(path).map_err(|e| CliError::new("invalid_input", format!("qrels: {e}")))
}

#[derive(Serialize)]
struct TuneOutput {
    method: String,
    kappa: f64,
    objective: &'static str,
}

#[derive(Serialize)]
struct FitOutput {
    a: f64,
    b: f64,
    n: usize,
}

fn method_name(cfg: &PipelineConfig) -> String {
    let names: Vec<String> = cfg
        .suggesters
        .iter()
        .map(|s| match s {
            SuggesterSpec::Atm => "atm".to_string(),
            SuggesterSpec::Bm25 => "bm25".to_string(),
            SuggesterSpec::Dense => "dense".to_string(),
            SuggesterSpec::External { name, .. } => name.clone(),
        })
        .collect();
    format!("{}-{}", names.join("+"), cfg.representation)
}

/// Reads an evaluation report TSV into topic -> column -> value.
fn read_report(path: &Path) -> Result<BTreeMap<String, BTreeMap<String, f64>>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_at(path, e))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split('\t').collect();
    let mut out = BTreeMap::new();
    for line in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.first() == Some(&"all") || cols.len() != header.len() {
            continue;
        }
        let row = header[1..].iter().zip(&cols[1..]).filter_map(|(h, v)| Some((h.to_string(), v.parse().ok()?))).collect();
        out.insert(cols[0].to_string(), row);
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(&cli.opts)?;
    match cli.command {
        Command::Parse { query } => {
            let q = parse_record("query", &query)?;
            println!("{}", serde_json::to_string_pretty(&q).expect("tree serializes"));
        }
        Command::Fragment { queries, output } => {
            let records: Vec<QueryRecord> = read_jsonl(&queries)?;
            let dumps = records.iter().map(fragment_dump).collect::<Result<Vec<_>, _>>()?;
            let mut w = open_output(&output)?;
            write_jsonl(&mut w, &dumps)?;
            w.flush()?;
        }
        Command::Suggest { queries, output } => {
            let records: Vec<QueryRecord> = read_jsonl(&queries)?;
            let pipeline = Pipeline::from_config(cfg)?;
            let runs = pipeline.suggest_all(&records)?;
            let mut w = open_output(&output)?;
            write_jsonl(&mut w, &runs)?;
            w.flush()?;
        }
        Command::Defragment { run, queries, output } => {
            let runs: Vec<TopicRun> = read_jsonl(&run)?;
            let records: Vec<QueryRecord> = read_jsonl(&queries)?;
            let by_topic: BTreeMap<&str, &QueryRecord> = records.iter().map(|r| (r.topic.as_str(), r)).collect();
            let mut rebuilt = Vec::new();
            for r in &runs {
                let Some(rec) = by_topic.get(r.topic.as_str()) else {
                    log::warn!("run topic {} not in queries file; skipped", r.topic);
                    continue;
                };
                rebuilt.push(rebuild_from_run(rec, r)?);
            }
            let mut w = open_output(&output)?;
            write_jsonl(&mut w, &rebuilt)?;
            w.flush()?;
        }
        Command::Evaluate { rebuilt, originals, output } => {
            let mut rebuilt: Vec<RebuiltQuery> = read_jsonl(&rebuilt)?;
            if let Some(path) = originals {
                let records: Vec<QueryRecord> = read_jsonl(&path)?;
                let mesh: BTreeMap<String, Vec<String>> = records
                    .iter()
                    .map(|r| {
                        let q = parse_record(&r.topic, &r.query)?;
                        let heads = fragment(&q).into_iter().flat_map(|f| f.original_mesh).collect::<BTreeSet<_>>();
                        Ok((r.topic.clone(), heads.into_iter().collect()))
                    })
                    .collect::<Result<_, CliError>>()?;
                for r in &mut rebuilt {
                    if let Some(m) = mesh.get(&r.topic) {
                        r.original_mesh = m.clone();
                    }
                }
            }
            let index = load_index(&cfg)?;
            let qrels = load_qrels(&cfg)?;
            let reports = evaluate_rebuilt(&rebuilt, &index, &qrels, cfg.date_limit, cfg.f_formula)?;
            let mut w = open_output(&output)?;
            w.write_all(report_tsv(&reports).as_bytes())?;
            w.flush()?;
        }
        Command::TuneKappa { run, objective } => {
            let runs: Vec<TopicRun> = read_jsonl(&run)?;
            let objective = objective.unwrap_or(cfg.objective);
            let training: Vec<_> = runs
                .iter()
                .flat_map(|r| &r.fragments)
                .filter(|f| !f.original_mesh.is_empty())
                .flat_map(|f| {
                    let gold: BTreeSet<String> = f.original_mesh.iter().cloned().collect();
                    f.candidates.iter().map(move |l| (l.clone(), gold.clone()))
                })
                .collect();
            let kappa = tune_kappa(&training, objective).map_err(|e| CliError::new("invalid_input", e.to_string()))?;
            let out = TuneOutput { method: method_name(&cfg), kappa, objective: objective.as_str() };
            println!("{}", serde_json::to_string(&out).expect("serializes"));
        }
        Command::FitLinear { queries } => {
            let records: Vec<QueryRecord> = read_jsonl(&queries)?;
            let mut points = Vec::new();
            for r in &records {
                let q = parse_record(&r.topic, &r.query)?;
                for f in fragment(&q) {
                    if !f.original_mesh.is_empty() && !f.atomic_clauses.is_empty() {
                        points.push((f.atomic_clauses.len() as f64, f.original_mesh.len() as f64));
                    }
                }
            }
            let m = fit_linear(&points).map_err(|e| CliError::new("invalid_input", e.to_string()))?;
            println!("{}", serde_json::to_string(&FitOutput { a: m.a, b: m.b, n: points.len() }).expect("serializes"));
        }
        Command::ConvertMesh { input, output } => {
            let reader = BufReader::new(File::open(&input).map_err(|e| io_at(&input, e))?);
            let entries = convert_mesh_ascii(reader)?;
            let mut w = open_output(&output)?;
            write_jsonl(&mut w, &entries)?;
            w.flush()?;
        }
        Command::Compare { a, b, measure, comparisons } => {
            let (ra, rb) = (read_report(&a)?, read_report(&b)?);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (topic, row) in &ra {
                let (Some(x), Some(y)) = (row.get(&measure), rb.get(topic).and_then(|r| r.get(&measure))) else {
                    continue;
                };
                xs.push(*x);
                ys.push(*y);
            }
            let t = paired_t_test(&xs, &ys, comparisons).map_err(|e| CliError::new("invalid_input", e.to_string()))?;
            println!("{}", serde_json::to_string(&t).expect("serializes"));
        }
        Command::Serve { host, port } => {
            let state = crate::service::AppState::load(cfg)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::service::serve(state, &host, port))?;
        }
    }
    Ok(())
}
