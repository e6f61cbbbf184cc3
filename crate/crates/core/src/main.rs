use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use kroma::embed::{embed_graph, EmbeddingCache, TextEmbedder};
use kroma::ontology::{ConceptId, UnionGraph};
use kroma::pipeline::{
    build_client, call_reduction, candidate_pairs, evaluate, generate_test_set, prepare_graph, run_pipeline,
    stream_batch, write_atomic, Alignment, Inputs, MatchConfig, Metrics, Phase, PipelineError, ProviderKind,
};
use kroma::refine::{DeltaBatch, GraphDocument, RefinementState, ReplayOracle};
use kroma::service::App;

#[derive(Debug, Parser)]
#[command(name = "kroma", version, about = "Ontology matching with LLM oracles and bisimulation refinement")]
struct Cli {
    /// TOML configuration; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for sampling and oracle requests.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Oracle response cache file.
    #[arg(long, global = true, env = "KROMA_CACHE")]
    cache: Option<PathBuf>,
    /// Repeat for more detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args, Default)]
struct InputArgs {
    /// Source ontology (triples or JSON).
    #[arg(long)]
    source: Option<PathBuf>,
    /// Target ontology (triples or JSON).
    #[arg(long)]
    target: Option<PathBuf>,
    /// Knowledge graph triples; may be repeated.
    #[arg(long)]
    kg: Vec<PathBuf>,
    /// Gold alignment TSV.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Restrict candidates to a test set's pairs.
    #[arg(long)]
    testset: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
struct TuningArgs {
    /// Weight of embedding similarity against the oracle score.
    #[arg(long)]
    gamma: Option<f64>,
    /// Acceptance threshold for the blended score.
    #[arg(long)]
    threshold: Option<f64>,
    /// Weight of text against structural embeddings.
    #[arg(long)]
    blend_weight: Option<f64>,
    /// Candidate targets per source concept.
    #[arg(long)]
    k: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Skip the oracle below `threshold - margin`; 1 disables the prefilter.
    #[arg(long)]
    prefilter_margin: Option<f64>,
    /// http, gold, always-yes or always-no.
    #[arg(long, value_parser = parse_provider)]
    provider: Option<ProviderKind>,
    /// Probability of flipping a gold answer.
    #[arg(long)]
    noise: Option<f64>,
    /// Chat-completions endpoint for the HTTP provider.
    #[arg(long, env = "KROMA_LLM_ENDPOINT")]
    endpoint: Option<String>,
    /// Model name sent to the provider and recorded with answers.
    #[arg(long)]
    model_id: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse both ontologies and print the union graph's concepts.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Enrich concepts with ground sets from the knowledge graph.
    Retrieve {
        #[command(flatten)]
        input: InputArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Write blended concept embeddings as JSON lines.
    Embed {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print the top-k candidate pairs as TSV.
    Candidates {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the whole pipeline and write every artifact to the output dir.
    Match {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Recompute the classes of a persisted graph from its recorded
    /// decisions and constraints.
    Refine {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Apply a delta batch to a persisted graph.
    Stream {
        #[arg(long)]
        graph: Option<PathBuf>,
        /// JSON `{concepts, edges}` batch.
        #[arg(long)]
        batch: PathBuf,
        #[arg(long)]
        kg: Vec<PathBuf>,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[command(flatten)]
        tuning: TuningArgs,
        /// Defaults to rewriting the input graph.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Sample an evaluation set of sources with candidate targets.
    Testset {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        tuning: TuningArgs,
        /// Leave out gold pairs and candidates sharing a normalized label.
        #[arg(long)]
        exclude_shared_label: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Score a predicted alignment against a gold alignment.
    Eval {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Oracle calls a pairwise baseline would make.
        #[arg(long)]
        baseline_calls: Option<u64>,
        #[arg(long)]
        calls: Option<u64>,
    },
    /// Serve the review API over a persisted graph.
    Serve {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        bind: Option<String>,
        /// Bearer token required on every request.
        #[arg(long, env = "KROMA_API_TOKEN")]
        token: Option<String>,
        /// Run metrics to show next to the live counters.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

fn parse_provider(s: &str) -> Result<ProviderKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown provider `{s}` (http, gold, always-yes, always-no)"))
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl std::fmt::Display) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Failure {
            code: 1,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let mut message = format!("{} phase failed: {}", e.phase, e.message);
        if !e.artifacts.is_empty() {
            message.push_str("\npartial artifacts:");
            for a in &e.artifacts {
                message.push_str(&format!("\n  {}", a.display()));
            }
        }
        Failure {
            code: if e.phase == Phase::Config { 2 } else { 1 },
            message,
        }
    }
}

type Outcome = Result<(), Failure>;

impl Cli {
    fn config(&self) -> Result<MatchConfig, Failure> {
        let mut cfg = match &self.config {
            Some(p) => MatchConfig::load(p).map_err(Failure::usage)?,
            None => MatchConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.oracle.seed = s;
        }
        if let Some(c) = &self.cache {
            cfg.cache = Some(c.clone());
        }
        Ok(cfg)
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut MatchConfig) {
        if self.source.is_some() {
            cfg.source = self.source.clone();
        }
        if self.target.is_some() {
            cfg.target = self.target.clone();
        }
        if !self.kg.is_empty() {
            cfg.kg = self.kg.clone();
        }
        if self.gold.is_some() {
            cfg.gold = self.gold.clone();
        }
        if self.testset.is_some() {
            cfg.testset = self.testset.clone();
        }
    }
}

impl TuningArgs {
    fn apply(&self, cfg: &mut MatchConfig) {
        macro_rules! set {
            ($($field:ident => $dst:expr),*) => {$(
                if let Some(v) = self.$field.clone() {
                    $dst = v;
                }
            )*};
        }
        set!(gamma => cfg.gamma, threshold => cfg.threshold, blend_weight => cfg.blend_weight, k => cfg.k,
             dim => cfg.dim, prefilter_margin => cfg.prefilter_margin, provider => cfg.provider,
             noise => cfg.noise, model_id => cfg.oracle.model_id);
        if self.endpoint.is_some() {
            cfg.oracle.endpoint = self.endpoint.clone();
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => write_atomic(p, text).map_err(|e| Failure::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn validated(cfg: &MatchConfig) -> Result<(), Failure> {
    cfg.validate().map_err(Failure::usage)
}

fn graph_of(cfg: &MatchConfig, enrich: bool) -> Result<(Inputs, UnionGraph), Failure> {
    validated(cfg)?;
    let mut inputs = Inputs::load(cfg)?;
    if !enrich {
        inputs.kg = None;
    }
    let g = prepare_graph(&inputs, cfg)?;
    Ok((inputs, g))
}

#[derive(Serialize)]
struct GraphSummary<'a> {
    concepts: Vec<&'a kroma::ontology::Concept>,
    edges: Vec<(&'a ConceptId, &'a ConceptId, &'a str)>,
    ranks: BTreeMap<&'a ConceptId, u32>,
}

fn summarize(g: &UnionGraph) -> GraphSummary<'_> {
    let mut concepts: Vec<_> = g.concepts().collect();
    concepts.sort_by(|a, b| a.id.cmp(&b.id));
    GraphSummary {
        concepts,
        edges: g.edges().map(|(c, p, r)| (g.id(c), g.id(p), r)).collect(),
        ranks: (0..g.len() as u32).map(|v| (g.id(v), g.rank(v))).collect(),
    }
}

fn read_document(path: &Path) -> Result<GraphDocument, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    GraphDocument::from_json(&text).map_err(|e| Failure::io(path, e))
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    path.ok_or_else(|| Failure::usage(format!("no {what} given (flag or config)")))
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = cli.config()?;
    match cli.cmd {
        Command::Ingest { input, out } => {
            input.apply(&mut cfg);
            let (_, g) = graph_of(&cfg, false)?;
            emit(out.as_deref(), &pretty(&summarize(&g)))
        }
        Command::Retrieve { input, out } => {
            input.apply(&mut cfg);
            let (_, g) = graph_of(&cfg, true)?;
            emit(out.as_deref(), &pretty(&summarize(&g)))
        }
        Command::Embed { input, tuning, out } => {
            input.apply(&mut cfg);
            tuning.apply(&mut cfg);
            let (_, g) = graph_of(&cfg, true)?;
            let embedder = cfg.embedder();
            let vectors = embed_graph(&g, &embedder, &cfg.similarity()).map_err(|e| PipelineError::new(Phase::Embedding, e))?;
            EmbeddingCache::save(&out, &embedder.id(), &cfg.similarity().fingerprint(), cfg.dim, &vectors)
                .map_err(|e| Failure::io(&out, e))
        }
        Command::Candidates { input, tuning, out } => {
            input.apply(&mut cfg);
            tuning.apply(&mut cfg);
            let (inputs, g) = graph_of(&cfg, true)?;
            let vectors = embed_graph(&g, &cfg.embedder(), &cfg.similarity()).map_err(|e| PipelineError::new(Phase::Embedding, e))?;
            let list = candidate_pairs(&g, &vectors, cfg.k, inputs.testset.as_ref())?;
            let mut text = String::new();
            for p in &list.pairs {
                text.push_str(&format!("{}\t{}\t{:.6}\n", p.source.iri(), p.target.iri(), p.score));
            }
            emit(out.as_deref(), &text)
        }
        Command::Match { input, tuning, out } => {
            input.apply(&mut cfg);
            tuning.apply(&mut cfg);
            if out.is_some() {
                cfg.out_dir = out;
            }
            let result = run_pipeline(&cfg)?;
            log::info!(
                "{} classes, {} pending reviews, {} oracle calls ({} prefiltered)",
                result.concept_graph.classes.len(),
                result.queue.pending_len(),
                result.metrics.llm_calls_made,
                result.prefiltered
            );
            emit(None, &pretty(&result.metrics))
        }
        Command::Refine { graph, out } => {
            let path = require(graph.or(cfg.graph.clone()), "graph")?;
            let doc = read_document(&path)?;
            let replay = ReplayOracle::new(doc.decision_triples());
            let current = RefinementState::from_document(&doc, &replay).map_err(|e| Failure::io(&path, e))?;
            let refined = RefinementState::offline(current.graph().clone(), &replay, current.constraints().clone());
            let mut next = refined.to_document();
            next.version = doc.version + 1;
            emit(Some(out.as_deref().unwrap_or(&path)), &next.to_json())
        }
        Command::Stream {
            graph,
            batch,
            kg,
            gold,
            tuning,
            out,
        } => {
            tuning.apply(&mut cfg);
            if !kg.is_empty() {
                cfg.kg = kg;
            }
            if gold.is_some() {
                cfg.gold = gold;
            }
            let path = require(graph.or(cfg.graph.clone()), "graph")?;
            let doc = read_document(&path)?;
            let batch: DeltaBatch = serde_json::from_str(&std::fs::read_to_string(&batch).map_err(|e| Failure::io(&batch, e))?)
                .map_err(|e| Failure::io(&batch, e))?;
            let store = if cfg.kg.is_empty() {
                None
            } else {
                let mut store = kroma::retrieval::TripleStore::new();
                for p in &cfg.kg {
                    let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
                    store.extend_from_text(&text).map_err(|e| Failure::io(p, e))?;
                }
                Some(store)
            };
            let gold = match &cfg.gold {
                Some(p) => Some(
                    Alignment::from_tsv(&std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?)
                        .map_err(|e| Failure::io(p, e))?,
                ),
                None => None,
            };
            let client = build_client(&cfg, gold.as_ref())?;
            let (state, report) = stream_batch(&doc, &batch, store.as_ref(), &client, &cfg)?;
            emit(Some(out.as_deref().unwrap_or(&path)), &state.to_document().to_json())?;
            emit(None, &pretty(&report))
        }
        Command::Testset {
            input,
            tuning,
            exclude_shared_label,
            out,
        } => {
            input.apply(&mut cfg);
            tuning.apply(&mut cfg);
            let (inputs, g) = graph_of(&cfg, true)?;
            let gold = inputs.gold.as_ref().ok_or_else(|| Failure::usage("testset needs --gold"))?;
            let vectors = embed_graph(&g, &cfg.embedder(), &cfg.similarity()).map_err(|e| PipelineError::new(Phase::Embedding, e))?;
            let seed = cli.seed.unwrap_or(cfg.oracle.seed);
            let ts = generate_test_set(gold, &g, &vectors, seed, exclude_shared_label)
                .map_err(|e| PipelineError::new(Phase::Candidates, e))?;
            emit(out.as_deref(), &pretty(&ts))
        }
        Command::Eval {
            predicted,
            gold,
            baseline_calls,
            calls,
        } => {
            let load = |p: &Path| -> Result<Alignment, Failure> {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
                Alignment::from_tsv(&text).map_err(|e| Failure::io(p, e))
            };
            let scores = evaluate(&load(&predicted)?, &load(&gold)?);
            let (made, baseline) = (calls.unwrap_or(0), baseline_calls.unwrap_or(0));
            let reduction_pct = match (calls, baseline_calls) {
                (Some(m), Some(b)) => Some(call_reduction(b, m).map_err(Failure::usage)?),
                (None, None) => None,
                _ => return Err(Failure::usage("--calls and --baseline-calls go together")),
            };
            let metrics = Metrics {
                scores: Some(scores),
                llm_calls_made: made,
                llm_calls_baseline: baseline,
                reduction_pct,
            };
            emit(None, &pretty(&metrics))
        }
        Command::Serve {
            graph,
            bind,
            token,
            metrics,
        } => {
            let path = require(graph.or(cfg.graph.clone()), "graph")?;
            let mut app = App::load(&path)
                .map_err(Failure::usage)?
                .with_token(token.or(cfg.api_token.clone()))
                .with_prompt(cfg.prompt());
            if let Some(m) = &metrics {
                app = app.with_metrics_file(m);
            }
            let bind = bind.unwrap_or(cfg.bind.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::usage(format!("runtime: {e}")))?;
            rt.block_on(kroma::service::serve(Arc::new(app), &bind))
                .map_err(|e| Failure::usage(format!("{bind}: {e}")))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("kroma: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
