//! End-to-end matching: load, retrieve, embed, pick candidates, ask the
//! oracle, refine and extract the alignment.

pub mod metrics;
pub mod testset;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{call_reduction, evaluate, Alignment, Metrics, MetricsError, Scores};
pub use testset::{generate_test_set, TestEntry, TestSet, TestSetError};

use crate::embed::{
    embed_graph, pairwise_scores, top_k_per_source, CandidateList, EmbeddingCache, EmbeddingVector, HashedBagEmbedder,
    ScoredPair, SimilarityConfig, TextEmbedder,
};
use crate::ontology::{parse_ontology, Concept, ConceptId, Format, Ontology, Role, UnionGraph};
use crate::oracle::{
    build_prompt, judge_pair, rescale_cosine, Combine, ConceptContext, Decision, FixedProvider, GoldProvider, HttpProvider,
    LlmClient, LlmProvider, OracleConfig, OracleError, PromptConfig, ResponseCache,
};
use crate::refine::{
    ordered, ConceptGraph, Constraints, DeltaBatch, DeltaReport, GraphDocument, NothingSimilar, RefinementState,
    SimilarityOracle, ValidationQueue,
};
use crate::retrieval::{enrich_ground_sets, RetrievalConfig, TripleStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Offline,
    Online,
    Serve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    /// Chat-completions endpoint from `endpoint` or `KROMA_LLM_ENDPOINT`.
    #[default]
    Http,
    /// Answers from the gold alignment, optionally flipped with `noise`.
    Gold,
    AlwaysYes,
    AlwaysNo,
}

/// Flat configuration; every key can also be given on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub kg: Vec<PathBuf>,
    pub gold: Option<PathBuf>,
    /// Restricts candidates to the pairs of a test set file.
    pub testset: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Response cache file; defaults to `$KROMA_CACHE_DIR/responses.jsonl`.
    pub cache: Option<PathBuf>,
    /// Persisted graph document for `stream`, `refine` and `serve`.
    pub graph: Option<PathBuf>,
    pub gamma: f64,
    pub threshold: f64,
    pub blend_weight: f64,
    pub k: usize,
    pub dim: usize,
    /// Pairs whose rescaled cosine is below `threshold - prefilter_margin`
    /// are not sent to the oracle.
    pub prefilter_margin: f64,
    pub context_weight: f64,
    pub neighbor_cap: usize,
    pub context_budget: usize,
    pub mode: Mode,
    pub provider: ProviderKind,
    pub noise: f64,
    pub bind: String,
    pub api_token: Option<String>,
    #[serde(flatten)]
    pub oracle: OracleConfig,
}

impl Default for MatchConfig {
    fn default() -> Self {
        let sim = SimilarityConfig::default();
        MatchConfig {
            source: None,
            target: None,
            kg: Vec::new(),
            gold: None,
            testset: None,
            out_dir: None,
            cache: None,
            graph: None,
            gamma: sim.gamma,
            threshold: sim.threshold,
            blend_weight: sim.blend_weight,
            k: sim.k,
            dim: sim.dim,
            prefilter_margin: 0.1,
            context_weight: 0.5,
            neighbor_cap: RetrievalConfig::default().neighbor_cap,
            context_budget: PromptConfig::default().context_budget,
            mode: Mode::Offline,
            provider: ProviderKind::Http,
            noise: 0.0,
            bind: "127.0.0.1:8080".into(),
            api_token: None,
            oracle: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("{0}")]
    Invalid(String),
}

impl MatchConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn similarity(&self) -> SimilarityConfig {
        SimilarityConfig {
            blend_weight: self.blend_weight,
            gamma: self.gamma,
            threshold: self.threshold,
            k: self.k,
            dim: self.dim,
        }
    }

    pub fn combine(&self) -> Combine {
        Combine {
            gamma: self.gamma,
            threshold: self.threshold,
            confidence_threshold: self.oracle.confidence_threshold,
        }
    }

    pub fn retrieval(&self) -> RetrievalConfig {
        RetrievalConfig {
            neighbor_cap: self.neighbor_cap,
            ..RetrievalConfig::default()
        }
    }

    pub fn prompt(&self) -> PromptConfig {
        PromptConfig {
            context_budget: self.context_budget,
            ..PromptConfig::default()
        }
    }

    pub fn embedder(&self) -> HashedBagEmbedder {
        HashedBagEmbedder {
            dim: self.dim,
            context_weight: self.context_weight,
        }
    }

    /// Parameter ranges, plus existence of every referenced input file.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.similarity().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.prefilter_margin) {
            return Err(ConfigError::Invalid(format!("prefilter_margin {} not in [0,1]", self.prefilter_margin)));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(ConfigError::Invalid(format!("noise {} not in [0,1]", self.noise)));
        }
        if !(0.0..=10.0).contains(&self.oracle.confidence_threshold) {
            return Err(ConfigError::Invalid(format!(
                "confidence_threshold {} not in [0,10]",
                self.oracle.confidence_threshold
            )));
        }
        let inputs = self.source.iter().chain(&self.target).chain(&self.kg).chain(&self.gold).chain(&self.testset);
        for p in inputs {
            if !p.is_file() {
                return Err(ConfigError::Invalid(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Config,
    Init,
    Retrieval,
    Embedding,
    Candidates,
    Oracle,
    Refinement,
    Online,
    Alignment,
    Persist,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Phase::Config => "config",
            Phase::Init => "init",
            Phase::Retrieval => "retrieval",
            Phase::Embedding => "embedding",
            Phase::Candidates => "candidates",
            Phase::Oracle => "oracle",
            Phase::Refinement => "refinement",
            Phase::Online => "online",
            Phase::Alignment => "alignment",
            Phase::Persist => "persist",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
#[error("{phase} phase failed: {message}")]
pub struct PipelineError {
    pub phase: Phase,
    pub message: String,
    /// Artifacts written before the failure.
    pub artifacts: Vec<PathBuf>,
}

impl PipelineError {
    pub fn new(phase: Phase, message: impl fmt::Display) -> Self {
        PipelineError {
            phase,
            message: message.to_string(),
            artifacts: Vec::new(),
        }
    }
}

/// Writes artifacts into an optional directory and remembers what it wrote.
#[derive(Debug, Default)]
pub struct ArtifactSink {
    dir: Option<PathBuf>,
    written: Vec<PathBuf>,
}

impl ArtifactSink {
    pub fn new(dir: Option<&Path>) -> Self {
        ArtifactSink {
            dir: dir.map(Path::to_path_buf),
            written: Vec::new(),
        }
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), PipelineError> {
        let Some(path) = self.path(name) else { return Ok(()) };
        write_atomic(&path, contents).map_err(|e| self.fail(Phase::Persist, format!("{}: {e}", path.display())))?;
        self.written.push(path);
        Ok(())
    }

    fn fail(&self, phase: Phase, message: impl fmt::Display) -> PipelineError {
        PipelineError {
            phase,
            message: message.to_string(),
            artifacts: self.written.clone(),
        }
    }
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// The provider selected by the config. `gold` is required for the gold
/// provider.
pub fn build_provider(cfg: &MatchConfig, gold: Option<&Alignment>) -> Result<Box<dyn LlmProvider>, PipelineError> {
    Ok(match cfg.provider {
        ProviderKind::Http => {
            let timeout = Duration::from_secs(cfg.oracle.timeout_secs);
            let key = std::env::var("KROMA_LLM_KEY").ok();
            let p = match &cfg.oracle.endpoint {
                Some(url) => HttpProvider::new(url.clone(), key, timeout),
                None => HttpProvider::from_env(timeout),
            };
            Box::new(p.map_err(|e| PipelineError::new(Phase::Config, e))?)
        }
        ProviderKind::Gold => {
            let gold = gold.ok_or_else(|| PipelineError::new(Phase::Config, "the gold provider needs a gold alignment"))?;
            Box::new(GoldProvider::new(gold.pairs.iter().cloned(), cfg.noise, cfg.oracle.seed))
        }
        ProviderKind::AlwaysYes => Box::new(FixedProvider::always_yes(9)),
        ProviderKind::AlwaysNo => Box::new(FixedProvider::always_no(9)),
    })
}

/// Response cache from the config, `KROMA_CACHE_DIR`, or in memory.
pub fn open_cache(cfg: &MatchConfig) -> Result<ResponseCache, PipelineError> {
    let path = cfg
        .cache
        .clone()
        .or_else(|| std::env::var_os("KROMA_CACHE_DIR").map(|d| PathBuf::from(d).join("responses.jsonl")));
    match path {
        Some(p) => ResponseCache::open(&p).map_err(|e| PipelineError::new(Phase::Config, format!("{}: {e}", p.display()))),
        None => Ok(ResponseCache::in_memory()),
    }
}

pub fn build_client(cfg: &MatchConfig, gold: Option<&Alignment>) -> Result<LlmClient, PipelineError> {
    Ok(LlmClient::new(build_provider(cfg, gold)?, cfg.oracle.clone(), open_cache(cfg)?))
}

/// Refinement oracle backed by the LLM client. Only candidate pairs are
/// ever compared; candidates below the prefilter are dissimilar without a
/// query. The first client error is kept and every later pair is answered
/// dissimilar, so the caller can abort after refinement returns.
pub struct PipelineOracle<'a> {
    graph: &'a UnionGraph,
    client: &'a LlmClient,
    sims: HashMap<(ConceptId, ConceptId), f64>,
    partners: HashMap<ConceptId, Vec<ConceptId>>,
    combine: Combine,
    prefilter: f64,
    prompt: PromptConfig,
    error: Mutex<Option<OracleError>>,
    queried: AtomicU64,
    prefiltered: AtomicU64,
}

impl<'a> PipelineOracle<'a> {
    /// `pairs` carry rescaled similarity scores in [0, 1].
    pub fn new(
        graph: &'a UnionGraph,
        client: &'a LlmClient,
        pairs: impl IntoIterator<Item = (ConceptId, ConceptId, f64)>,
        cfg: &MatchConfig,
    ) -> Self {
        let mut sims = HashMap::new();
        let mut partners: HashMap<ConceptId, Vec<ConceptId>> = HashMap::new();
        for (a, b, s) in pairs {
            let key = ordered(a, b);
            if sims.insert(key.clone(), s).is_none() {
                partners.entry(key.0.clone()).or_default().push(key.1.clone());
                partners.entry(key.1).or_default().push(key.0);
            }
        }
        PipelineOracle {
            graph,
            client,
            sims,
            partners,
            combine: cfg.combine(),
            prefilter: cfg.threshold - cfg.prefilter_margin,
            prompt: cfg.prompt(),
            error: Mutex::new(None),
            queried: AtomicU64::new(0),
            prefiltered: AtomicU64::new(0),
        }
    }

    pub fn take_error(&self) -> Option<OracleError> {
        self.error.lock().expect("oracle error lock").take()
    }

    /// Pairs sent to the LLM (cache hits included).
    pub fn queried(&self) -> u64 {
        self.queried.load(Ordering::Relaxed)
    }

    pub fn prefiltered(&self) -> u64 {
        self.prefiltered.load(Ordering::Relaxed)
    }

    /// The prompt that would be sent for a pair.
    pub fn prompt_for(&self, a: &ConceptId, b: &ConceptId) -> Option<String> {
        let (x, y) = (self.graph.index_of(a)?, self.graph.index_of(b)?);
        let q = build_prompt(
            &ConceptContext::from_graph(self.graph, x),
            &ConceptContext::from_graph(self.graph, y),
            &self.prompt,
        )
        .ok()?;
        Some(q.render())
    }

    fn ask(&self, a: &ConceptId, b: &ConceptId, sim: f64) -> Result<Decision, OracleError> {
        let (x, y) = (self.graph.index_of(a), self.graph.index_of(b));
        let (Some(x), Some(y)) = (x, y) else {
            return Ok(Decision::dissimilar().with_note("unknown concept"));
        };
        let q = build_prompt(
            &ConceptContext::from_graph(self.graph, x),
            &ConceptContext::from_graph(self.graph, y),
            &self.prompt,
        )?;
        self.queried.fetch_add(1, Ordering::Relaxed);
        judge_pair(self.client, &q, (a, b), sim, self.combine)
    }
}

impl SimilarityOracle for PipelineOracle<'_> {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision {
        let key = ordered(a.clone(), b.clone());
        let Some(&sim) = self.sims.get(&key) else {
            return Decision::dissimilar().with_note("not a candidate pair");
        };
        if sim + 1e-12 < self.prefilter {
            self.prefiltered.fetch_add(1, Ordering::Relaxed);
            let mut d = Decision::dissimilar().with_note("below the similarity prefilter");
            d.sim_score = sim;
            d.f_score = self.combine.gamma * sim;
            d.confidence = 0.0;
            return d;
        }
        if self.error.lock().expect("oracle error lock").is_some() {
            return Decision::dissimilar().with_note("skipped after an oracle failure");
        }
        match self.ask(&key.0, &key.1, sim) {
            Ok(d) => d,
            Err(e) => {
                log::error!("oracle failed on {} / {}: {e}", key.0, key.1);
                self.error.lock().expect("oracle error lock").get_or_insert(e);
                Decision::dissimilar().with_note("oracle failure")
            }
        }
    }

    fn partners(&self, c: &ConceptId) -> Option<Vec<ConceptId>> {
        Some(self.partners.get(c).cloned().unwrap_or_default())
    }
}

/// Everything a run needs, already loaded.
pub struct Inputs {
    pub source: Ontology,
    pub target: Ontology,
    pub kg: Option<TripleStore>,
    pub gold: Option<Alignment>,
    pub testset: Option<TestSet>,
}

impl Inputs {
    pub fn new(source: Ontology, target: Ontology) -> Self {
        Inputs {
            source,
            target,
            kg: None,
            gold: None,
            testset: None,
        }
    }

    /// Reads the files named by the config.
    pub fn load(cfg: &MatchConfig) -> Result<Self, PipelineError> {
        let read = |p: &Path, phase: Phase| {
            std::fs::read_to_string(p).map_err(|e| PipelineError::new(phase, format!("{}: {e}", p.display())))
        };
        let onto = |p: &Option<PathBuf>, role: Role| -> Result<Ontology, PipelineError> {
            let p = p
                .as_ref()
                .ok_or_else(|| PipelineError::new(Phase::Init, format!("no {} ontology given", role.prefix())))?;
            parse_ontology(&read(p, Phase::Init)?, Format::from_path(p), role)
                .map_err(|e| PipelineError::new(Phase::Init, format!("{}: {e}", p.display())))
        };
        let source = onto(&cfg.source, Role::Source)?;
        let target = onto(&cfg.target, Role::Target)?;
        let kg = if cfg.kg.is_empty() {
            None
        } else {
            let mut store = TripleStore::new();
            for p in &cfg.kg {
                store
                    .extend_from_text(&read(p, Phase::Retrieval)?)
                    .map_err(|e| PipelineError::new(Phase::Retrieval, format!("{}: {e}", p.display())))?;
            }
            Some(store)
        };
        let gold = match &cfg.gold {
            Some(p) => Some(Alignment::from_tsv(&read(p, Phase::Init)?).map_err(|e| PipelineError::new(Phase::Init, e))?),
            None => None,
        };
        let testset = match &cfg.testset {
            Some(p) => Some(
                serde_json::from_str(&read(p, Phase::Candidates)?)
                    .map_err(|e| PipelineError::new(Phase::Candidates, format!("{}: {e}", p.display())))?,
            ),
            None => None,
        };
        Ok(Inputs {
            source,
            target,
            kg,
            gold,
            testset,
        })
    }
}

pub struct PipelineOutput {
    pub state: RefinementState,
    pub concept_graph: ConceptGraph,
    pub alignment: Alignment,
    pub metrics: Metrics,
    pub queue: ValidationQueue,
    pub candidates: CandidateList,
    /// Candidate pairs with rescaled similarity scores.
    pub sims: Vec<(ConceptId, ConceptId, f64)>,
    /// Pairs sent to the LLM, and candidate pairs dropped by the prefilter.
    pub queried: u64,
    pub prefiltered: u64,
    pub artifacts: Vec<PathBuf>,
}

/// Retrieval-enriched union graph.
pub fn prepare_graph(inputs: &Inputs, cfg: &MatchConfig) -> Result<UnionGraph, PipelineError> {
    let mut g = UnionGraph::new(&inputs.source, &inputs.target).map_err(|e| PipelineError::new(Phase::Init, e))?;
    if let Some(kg) = &inputs.kg {
        enrich_ground_sets(&mut g, kg, &cfg.retrieval());
    }
    Ok(g)
}

/// Candidate pairs with cosine scores: the test set's pairs if given, else
/// the top `k` targets of every source.
pub fn candidate_pairs(
    g: &UnionGraph,
    embeddings: &BTreeMap<ConceptId, EmbeddingVector>,
    k: usize,
    testset: Option<&TestSet>,
) -> Result<CandidateList, PipelineError> {
    let fail = |e: crate::embed::EmbedError| PipelineError::new(Phase::Candidates, e);
    match testset {
        Some(ts) => {
            let mut pairs = Vec::with_capacity(ts.pair_count());
            for (s, t) in ts.pairs() {
                let scored = pairwise_scores(std::slice::from_ref(s), std::slice::from_ref(t), embeddings).map_err(fail)?;
                pairs.extend(scored);
            }
            pairs.sort_by(|a: &ScoredPair, b: &ScoredPair| {
                b.score.total_cmp(&a.score).then_with(|| (&a.source, &a.target).cmp(&(&b.source, &b.target)))
            });
            pairs.dedup_by(|a, b| a.source == b.source && a.target == b.target);
            Ok(CandidateList { k: CANDIDATES_FROM_TESTSET, pairs })
        }
        None => {
            let sources: Vec<ConceptId> = g.nodes_with_role(Role::Source).map(|v| g.id(v).clone()).collect();
            let targets: Vec<ConceptId> = g.nodes_with_role(Role::Target).map(|v| g.id(v).clone()).collect();
            let scores = pairwise_scores(&sources, &targets, embeddings).map_err(fail)?;
            Ok(top_k_per_source(&scores, k))
        }
    }
}

const CANDIDATES_FROM_TESTSET: usize = testset::CANDIDATES;

fn candidates_tsv(c: &CandidateList) -> String {
    let mut out = String::new();
    for p in &c.pairs {
        out.push_str(&format!("{}\t{}\t{:.6}\n", p.source.iri(), p.target.iri(), p.score));
    }
    out
}

/// Runs every phase on loaded inputs. Artifacts go to `cfg.out_dir` when
/// set.
pub fn run_on(inputs: &Inputs, client: &LlmClient, cfg: &MatchConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.similarity().validate().map_err(|e| PipelineError::new(Phase::Config, e))?;
    let mut sink = ArtifactSink::new(cfg.out_dir.as_deref());
    let calls_before = client.calls_made();

    log::info!("init + retrieval");
    let g = prepare_graph(inputs, cfg)?;
    let mut concepts: Vec<&Concept> = g.concepts().collect();
    concepts.sort_by(|a, b| a.id.cmp(&b.id));
    sink.write("concepts.json", &json(&concepts))?;

    log::info!("embedding {} concepts", g.len());
    let embedder = cfg.embedder();
    let embeddings = embed_graph(&g, &embedder, &cfg.similarity()).map_err(|e| sink.fail(Phase::Embedding, e))?;
    if let Some(path) = sink.path("embeddings.jsonl") {
        EmbeddingCache::save(&path, &embedder.id(), &cfg.similarity().fingerprint(), cfg.dim, &embeddings)
            .map_err(|e| sink.fail(Phase::Persist, e))?;
        sink.written.push(path);
    }

    let candidates = candidate_pairs(&g, &embeddings, cfg.k, inputs.testset.as_ref()).map_err(|mut e| {
        e.artifacts = sink.written.clone();
        e
    })?;
    sink.write("candidates.tsv", &candidates_tsv(&candidates))?;
    log::info!("{} candidate pairs", candidates.pairs.len());

    let sims: Vec<(ConceptId, ConceptId, f64)> = candidates
        .pairs
        .iter()
        .map(|p| (p.source.clone(), p.target.clone(), rescale_cosine(p.score)))
        .collect();
    let oracle = PipelineOracle::new(&g, client, sims.iter().cloned(), cfg);
    let state = RefinementState::offline(g.clone(), &oracle, Constraints::default());
    if let Some(e) = oracle.take_error() {
        return Err(sink.fail(Phase::Oracle, e));
    }
    let doc = state.to_document();
    sink.write("graph.json", &json(&doc))?;
    sink.write("queue.json", &json(&state.queue().items()))?;

    let alignment = Alignment::from_partition(&state.partition());
    sink.write("alignment.tsv", &alignment.to_tsv())?;

    let made = client.calls_made() - calls_before;
    let baseline = candidates.pairs.len() as u64;
    let metrics = Metrics {
        scores: inputs.gold.as_ref().map(|gold| evaluate(&alignment, gold)),
        llm_calls_made: made,
        llm_calls_baseline: baseline,
        reduction_pct: call_reduction(baseline, made).ok(),
    };
    sink.write("metrics.json", &json(&metrics))?;

    Ok(PipelineOutput {
        concept_graph: state.concept_graph(),
        queue: state.queue().clone(),
        state,
        alignment,
        metrics,
        candidates,
        queried: oracle.queried(),
        prefiltered: oracle.prefiltered(),
        sims,
        artifacts: sink.written,
    })
}

/// Loads inputs, builds the client and runs the pipeline.
pub fn run_pipeline(cfg: &MatchConfig) -> Result<PipelineOutput, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::new(Phase::Config, e))?;
    let inputs = Inputs::load(cfg)?;
    let client = build_client(cfg, inputs.gold.as_ref())?;
    run_on(&inputs, &client, cfg)
}

/// Applies a delta batch to a persisted state. New concepts are enriched
/// from the knowledge graph, embedded and compared with their top `k`
/// counterparts; pairs decided earlier keep their decisions.
pub fn stream_batch(
    doc: &GraphDocument,
    batch: &DeltaBatch,
    kg: Option<&TripleStore>,
    client: &LlmClient,
    cfg: &MatchConfig,
) -> Result<(RefinementState, DeltaReport), PipelineError> {
    let replay = crate::refine::ReplayOracle::new(doc.decision_triples());
    let mut state = RefinementState::from_document(doc, &replay).map_err(|e| PipelineError::new(Phase::Online, e))?;

    // dry run to get the post-batch graph for retrieval and embeddings
    let mut preview = state.clone();
    let report = preview
        .apply_delta(batch, &NothingSimilar)
        .map_err(|e| PipelineError::new(Phase::Online, e))?;
    let mut g = preview.graph().clone();
    if let Some(kg) = kg {
        enrich_ground_sets(&mut g, kg, &cfg.retrieval());
    }
    let embeddings = embed_graph(&g, &cfg.embedder(), &cfg.similarity()).map_err(|e| PipelineError::new(Phase::Embedding, e))?;

    let mut pairs: Vec<(ConceptId, ConceptId, f64)> = doc
        .decisions
        .iter()
        .map(|d| (d.a.clone(), d.b.clone(), d.decision.sim_score))
        .collect();
    for id in &report.new_concepts {
        let other = match id.role() {
            Role::Source => Role::Target,
            Role::Target => Role::Source,
        };
        let peers: Vec<ConceptId> = g.nodes_with_role(other).map(|v| g.id(v).clone()).collect();
        let scores = pairwise_scores(std::slice::from_ref(id), &peers, &embeddings)
            .map_err(|e| PipelineError::new(Phase::Candidates, e))?;
        for p in top_k_per_source(&scores, cfg.k).pairs {
            pairs.push((p.source, p.target, rescale_cosine(p.score)));
        }
    }

    let mut enriched = batch.clone();
    enriched.concepts = report
        .new_concepts
        .iter()
        .filter_map(|id| g.concept_by_id(id).cloned())
        .collect();
    let oracle = PipelineOracle::new(&g, client, pairs, cfg);
    let report = state
        .apply_delta(&enriched, &oracle)
        .map_err(|e| PipelineError::new(Phase::Online, e))?;
    if let Some(e) = oracle.take_error() {
        return Err(PipelineError::new(Phase::Oracle, e));
    }
    Ok((state, report))
}
