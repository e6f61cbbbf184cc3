//! Concept embeddings, pairwise cosine scores, top-k candidates and string
//! similarity functions.
//!
//! Both default embedders are deterministic feature-hashing schemes, so the
//! same graph always yields the same vectors.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Concept, ConceptId, UnionGraph};
use crate::util::{fnv1a, fnv1a_parts, normalize_tokens};

pub const DEFAULT_DIM: usize = 128;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("no embedding for {0}")]
    Missing(ConceptId),
    #[error("embedding provider failed for {concept}: {message}")]
    Provider { concept: ConceptId, message: String },
    #[error("invalid similarity config: {0}")]
    InvalidConfig(String),
    #[error("embedding cache: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            return self.clone();
        }
        EmbeddingVector(self.0.iter().map(|x| x / n).collect())
    }

    fn add_feature(&mut self, feature: &str, weight: f64) {
        let h = fnv1a(feature.as_bytes());
        let slot = (h % self.0.len() as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        self.0[slot] += sign * weight;
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `blend_weight·g + (1 − blend_weight)·t`, L2-normalized.
pub fn blend(g: &EmbeddingVector, t: &EmbeddingVector, blend_weight: f64) -> Result<EmbeddingVector, EmbedError> {
    if g.dim() != t.dim() {
        return Err(EmbedError::DimensionMismatch {
            left: g.dim(),
            right: t.dim(),
        });
    }
    let v = g.0.iter().zip(&t.0).map(|(a, b)| blend_weight * a + (1.0 - blend_weight) * b).collect();
    Ok(EmbeddingVector(v).normalized())
}

/// Source of text embeddings. Implementations must be deterministic.
pub trait TextEmbedder: Send + Sync {
    /// Identifies the provider in the embedding cache header.
    fn id(&self) -> String;
    fn embed(&self, c: &Concept) -> Result<EmbeddingVector, EmbedError>;
}

/// Signed feature hashing over normalized tokens of the labels, the
/// definition and the ground-set entries.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    pub dim: usize,
    /// Weight of definition and ground-set tokens relative to label tokens.
    pub context_weight: f64,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        HashedBagEmbedder {
            dim: DEFAULT_DIM,
            context_weight: 0.5,
        }
    }
}

impl TextEmbedder for HashedBagEmbedder {
    fn id(&self) -> String {
        format!("hashed-bag/d{}/w{}", self.dim, self.context_weight)
    }

    fn embed(&self, c: &Concept) -> Result<EmbeddingVector, EmbedError> {
        let mut v = EmbeddingVector::zeros(self.dim);
        for label in &c.labels {
            for tok in normalize_tokens(label) {
                v.add_feature(&tok, 1.0);
            }
        }
        let context = c.definition.iter().chain(c.ground_set.iter());
        for text in context {
            for tok in normalize_tokens(text) {
                v.add_feature(&tok, self.context_weight);
            }
        }
        Ok(v.normalized())
    }
}

pub fn text_embed(c: &Concept) -> EmbeddingVector {
    HashedBagEmbedder::default().embed(c).expect("hashed-bag embedding is infallible")
}

/// Structural embeddings for every node of `g`, indexed like the graph.
///
/// Features: rank, in-degree (child edges), out-degree (parent edges), the
/// multiset of incident relation labels with direction, and two rounds of
/// Weisfeiler-Leman relabeling over the same incidence.
pub fn graph_embeddings(g: &UnionGraph, dim: usize) -> Vec<EmbeddingVector> {
    let n = g.len();
    let mut up: Vec<Vec<(u32, &str)>> = vec![Vec::new(); n];
    let mut down: Vec<Vec<(u32, &str)>> = vec![Vec::new(); n];
    for (c, p, r) in g.edges() {
        up[c as usize].push((p, r));
        down[p as usize].push((c, r));
    }
    let base: Vec<Vec<String>> = (0..n)
        .map(|v| {
            let mut f = vec![
                format!("rank:{}", g.rank(v as u32)),
                format!("in:{}", down[v].len()),
                format!("out:{}", up[v].len()),
            ];
            let mut rels: Vec<String> = up[v]
                .iter()
                .map(|(_, r)| format!("up:{r}"))
                .chain(down[v].iter().map(|(_, r)| format!("down:{r}")))
                .collect();
            rels.sort();
            f.extend(rels);
            f
        })
        .collect();
    let mut labels: Vec<u64> = base.iter().map(|f| fnv1a_parts(f)).collect();
    let mut wl_features: Vec<Vec<String>> = vec![Vec::new(); n];
    for round in 1..=2 {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let mut parts: Vec<String> = up[v]
                    .iter()
                    .map(|(w, r)| format!("u{r}:{:016x}", labels[*w as usize]))
                    .chain(down[v].iter().map(|(w, r)| format!("d{r}:{:016x}", labels[*w as usize])))
                    .collect();
                parts.sort();
                parts.insert(0, format!("{:016x}", labels[v]));
                fnv1a_parts(&parts)
            })
            .collect();
        for v in 0..n {
            wl_features[v].push(format!("wl{round}:{:016x}", next[v]));
        }
        labels = next;
    }
    (0..n)
        .map(|v| {
            let mut e = EmbeddingVector::zeros(dim);
            for f in base[v].iter().chain(&wl_features[v]) {
                e.add_feature(f, 1.0);
            }
            e.normalized()
        })
        .collect()
}

pub fn graph_embed(c: &ConceptId, g: &UnionGraph, dim: usize) -> Option<EmbeddingVector> {
    let v = g.index_of(c)?;
    Some(graph_embeddings(g, dim).swap_remove(v as usize))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub source: ConceptId,
    pub target: ConceptId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub k: usize,
    pub pairs: Vec<ScoredPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub blend_weight: f64,
    pub gamma: f64,
    pub threshold: f64,
    pub k: usize,
    pub dim: usize,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            blend_weight: 0.5,
            gamma: 0.5,
            threshold: 0.85,
            k: 25,
            dim: DEFAULT_DIM,
        }
    }
}

impl SimilarityConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.blend_weight) {
            return Err(EmbedError::InvalidConfig(format!("blend_weight {} not in [0,1]", self.blend_weight)));
        }
        if !unit(self.gamma) {
            return Err(EmbedError::InvalidConfig(format!("gamma {} not in [0,1]", self.gamma)));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(EmbedError::InvalidConfig(format!("threshold {} not in (0,1]", self.threshold)));
        }
        if self.k == 0 {
            return Err(EmbedError::InvalidConfig("k must be positive".into()));
        }
        if self.dim == 0 {
            return Err(EmbedError::InvalidConfig("dim must be positive".into()));
        }
        Ok(())
    }

    /// Stable fingerprint used to version embedding caches.
    pub fn fingerprint(&self) -> String {
        format!("{:016x}", fnv1a_parts(&[format!("{}", self.blend_weight), format!("{}", self.dim)]))
    }
}

/// Blended embeddings for every node of `g`, keyed by concept id.
pub fn embed_graph(
    g: &UnionGraph,
    text: &dyn TextEmbedder,
    cfg: &SimilarityConfig,
) -> Result<BTreeMap<ConceptId, EmbeddingVector>, EmbedError> {
    let structural = graph_embeddings(g, cfg.dim);
    let mut out = BTreeMap::new();
    for (v, ge) in structural.into_iter().enumerate() {
        let c = g.concept(v as u32);
        let te = text.embed(c)?;
        out.insert(c.id.clone(), blend(&ge, &te, cfg.blend_weight)?);
    }
    Ok(out)
}

/// Cosine score for every source × target pair, in (source, target) order.
pub fn pairwise_scores(
    sources: &[ConceptId],
    targets: &[ConceptId],
    embeddings: &BTreeMap<ConceptId, EmbeddingVector>,
) -> Result<Vec<ScoredPair>, EmbedError> {
    let get = |id: &ConceptId| embeddings.get(id).ok_or_else(|| EmbedError::Missing(id.clone()));
    let mut out = Vec::with_capacity(sources.len() * targets.len());
    for s in sources {
        let zs = get(s)?;
        for t in targets {
            out.push(ScoredPair {
                source: s.clone(),
                target: t.clone(),
                score: cosine(zs, get(t)?)?,
            });
        }
    }
    Ok(out)
}

fn rank_order(a: &ScoredPair, b: &ScoredPair) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| a.target.cmp(&b.target))
}

/// The `k` highest-scored pairs; ties broken by (source, target).
pub fn top_k(scores: &[ScoredPair], k: usize) -> CandidateList {
    let mut pairs = scores.to_vec();
    pairs.sort_by(rank_order);
    pairs.truncate(k);
    CandidateList { k, pairs }
}

/// Union of the `k` best targets of every source, sorted like [`top_k`].
pub fn top_k_per_source(scores: &[ScoredPair], k: usize) -> CandidateList {
    let mut by_source: BTreeMap<&ConceptId, Vec<&ScoredPair>> = BTreeMap::new();
    for p in scores {
        by_source.entry(&p.source).or_default().push(p);
    }
    let mut pairs = Vec::new();
    for (_, mut list) in by_source {
        list.sort_by(|a, b| rank_order(a, b));
        pairs.extend(list.into_iter().take(k).cloned());
    }
    pairs.sort_by(rank_order);
    CandidateList { k, pairs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StringSimKind {
    LevenshteinNorm,
    TokenJaccard,
}

pub fn string_sim(a: &str, b: &str, kind: StringSimKind) -> f64 {
    match kind {
        StringSimKind::LevenshteinNorm => strsim::normalized_levenshtein(a, b),
        StringSimKind::TokenJaccard => {
            let sa: std::collections::BTreeSet<String> = normalize_tokens(a).into_iter().collect();
            let sb: std::collections::BTreeSet<String> = normalize_tokens(b).into_iter().collect();
            if sa.is_empty() && sb.is_empty() {
                return 1.0;
            }
            sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    provider: String,
    config_hash: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    id: ConceptId,
    vector: Vec<f64>,
}

/// Line-JSON embedding cache. The first line is a header; a header that does
/// not match the current provider and config invalidates the whole file.
pub struct EmbeddingCache;

impl EmbeddingCache {
    pub fn load(path: &Path, provider: &str, config_hash: &str, dim: usize) -> Result<HashMap<ConceptId, EmbeddingVector>, EmbedError> {
        let mut out = HashMap::new();
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e.into()),
        };
        let mut lines = BufReader::new(file).lines();
        let Some(first) = lines.next() else { return Ok(out) };
        let header: CacheHeader = match serde_json::from_str(&first?) {
            Ok(h) => h,
            Err(_) => return Ok(out),
        };
        if header.provider != provider || header.config_hash != config_hash || header.dim != dim {
            return Ok(out);
        }
        for line in lines {
            let line = line?;
            if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                if entry.vector.len() == dim {
                    out.insert(entry.id, EmbeddingVector(entry.vector));
                }
            }
        }
        Ok(out)
    }

    pub fn save(
        path: &Path,
        provider: &str,
        config_hash: &str,
        dim: usize,
        vectors: &BTreeMap<ConceptId, EmbeddingVector>,
    ) -> Result<(), EmbedError> {
        let mut buf = Vec::new();
        let header = CacheHeader {
            provider: provider.to_string(),
            config_hash: config_hash.to_string(),
            dim,
        };
        writeln!(buf, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for (id, v) in vectors {
            let line = CacheLine {
                id: id.clone(),
                vector: v.0.clone(),
            };
            writeln!(buf, "{}", serde_json::to_string(&line).expect("entry serializes"))?;
        }
        fs::write(path, buf)?;
        Ok(())
    }
}
