use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::queue::{ItemContext, ItemStatus, QueueReason, Resolution, ValidationItem, ValidationQueue};
use super::{ordered, ConceptGraph, Partition, RefineError, SimilarityOracle};
use crate::ontology::{ConceptId, UnionGraph};
use crate::oracle::{Decision, DecisionKind, Verdict};

/// Pairs fixed by reviewers. Negative pairs are never put in one class;
/// positive pairs count as similar without asking the oracle.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraints {
    pub negative_pairs: BTreeSet<(ConceptId, ConceptId)>,
    pub positive_pairs: BTreeSet<(ConceptId, ConceptId)>,
}

impl Constraints {
    pub fn add_negative(&mut self, a: ConceptId, b: ConceptId) {
        let p = ordered(a, b);
        self.positive_pairs.remove(&p);
        self.negative_pairs.insert(p);
    }

    pub fn add_positive(&mut self, a: ConceptId, b: ConceptId) {
        let p = ordered(a, b);
        self.negative_pairs.remove(&p);
        self.positive_pairs.insert(p);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolveReport {
    pub item: ValidationItem,
    /// For pair items: whether the two concepts now share a class.
    pub merged: bool,
    /// Id of the follow-up item when an approved pair could not be merged.
    pub requeued: Option<u64>,
    pub version: u64,
}

/// The union graph together with its current partition, reviewer
/// constraints, memoized oracle decisions and validation queue. All mutation
/// goes through `&mut self`, so there is exactly one writer.
#[derive(Debug, Clone)]
pub struct RefinementState {
    pub(crate) graph: UnionGraph,
    pub(crate) class_of: Vec<u32>,
    pub(crate) members: Vec<Vec<u32>>,
    node_key: Vec<u64>,
    buckets: HashMap<(u32, u64), Vec<u32>>,
    neg: HashMap<u32, Vec<u32>>,
    pos: HashMap<u32, Vec<u32>>,
    pub(crate) constraints: Constraints,
    pub(crate) memo: HashMap<(u32, u32), Decision>,
    denied: HashSet<(u32, u32)>,
    pub(crate) queue: ValidationQueue,
    pub(crate) version: u64,
    judged: u64,
}

fn key(a: u32, b: u32) -> (u32, u32) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl RefinementState {
    /// Every concept in its own class; nothing judged yet.
    pub fn singletons(graph: UnionGraph, constraints: Constraints) -> Self {
        let n = graph.len();
        let mut s = RefinementState {
            graph,
            class_of: (0..n as u32).collect(),
            members: (0..n as u32).map(|v| vec![v]).collect(),
            node_key: vec![0; n],
            buckets: HashMap::new(),
            neg: HashMap::new(),
            pos: HashMap::new(),
            constraints,
            memo: HashMap::new(),
            denied: HashSet::new(),
            queue: ValidationQueue::default(),
            version: 0,
            judged: 0,
        };
        s.index_constraints();
        s
    }

    /// Offline refinement from scratch.
    pub fn offline(graph: UnionGraph, oracle: &dyn SimilarityOracle, constraints: Constraints) -> Self {
        let mut s = Self::singletons(graph, constraints);
        s.rebuild(oracle);
        s
    }

    pub(crate) fn from_parts(
        graph: UnionGraph,
        groups: Vec<Vec<u32>>,
        constraints: Constraints,
        memo: HashMap<(u32, u32), Decision>,
        queue: ValidationQueue,
        version: u64,
        oracle: &dyn SimilarityOracle,
    ) -> Self {
        let mut s = Self::singletons(graph, constraints);
        s.members = groups;
        for (c, ms) in s.members.iter().enumerate() {
            for &m in ms {
                s.class_of[m as usize] = c as u32;
            }
        }
        s.memo = memo;
        s.queue = queue;
        s.version = version;
        s.index_keys(oracle);
        s
    }

    pub fn graph(&self) -> &UnionGraph {
        &self.graph
    }

    pub fn queue(&self) -> &ValidationQueue {
        &self.queue
    }

    pub fn constraints(&self) -> &Constraints {
        &self.constraints
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Oracle invocations made by this state (memo hits and constraint
    /// short-cuts excluded).
    pub fn judged(&self) -> u64 {
        self.judged
    }

    pub fn class_count(&self) -> usize {
        self.members.iter().filter(|m| !m.is_empty()).count()
    }

    pub fn partition(&self) -> Partition {
        Partition::from_groups(&self.graph, self.members.iter().filter(|m| !m.is_empty()).cloned())
    }

    pub fn concept_graph(&self) -> ConceptGraph {
        super::quotient(&self.graph, &self.partition())
    }

    pub fn same_class(&self, a: &ConceptId, b: &ConceptId) -> bool {
        match (self.graph.index_of(a), self.graph.index_of(b)) {
            (Some(x), Some(y)) => self.class_of[x as usize] == self.class_of[y as usize],
            _ => false,
        }
    }

    /// Memoized decisions in canonical order.
    pub fn decisions(&self) -> Vec<(ConceptId, ConceptId, Decision)> {
        let mut out: Vec<(ConceptId, ConceptId, Decision)> = self
            .memo
            .iter()
            .map(|(&(a, b), d)| {
                let (x, y) = ordered(self.graph.id(a).clone(), self.graph.id(b).clone());
                (x, y, d.clone())
            })
            .collect();
        out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        out
    }

    pub fn decision(&self, a: &ConceptId, b: &ConceptId) -> Option<&Decision> {
        let (x, y) = (self.graph.index_of(a)?, self.graph.index_of(b)?);
        self.memo.get(&key(x, y))
    }

    fn index_constraints(&mut self) {
        self.neg.clear();
        self.pos.clear();
        for (pairs, map) in [
            (&self.constraints.negative_pairs, &mut self.neg),
            (&self.constraints.positive_pairs, &mut self.pos),
        ] {
            for (a, b) in pairs {
                if let (Some(x), Some(y)) = (self.graph.index_of(a), self.graph.index_of(b)) {
                    map.entry(x).or_default().push(y);
                    map.entry(y).or_default().push(x);
                }
            }
        }
    }

    fn index_keys(&mut self, oracle: &dyn SimilarityOracle) {
        self.buckets.clear();
        self.node_key = (0..self.graph.len() as u32).map(|v| oracle.block_key(self.graph.id(v))).collect();
        for v in 0..self.graph.len() as u32 {
            let k = (self.graph.rank(v), self.node_key[v as usize]);
            self.buckets.entry(k).or_default().push(v);
        }
    }

    pub(crate) fn register_node(&mut self, v: u32, oracle: &dyn SimilarityOracle) {
        debug_assert_eq!(v as usize, self.class_of.len());
        self.class_of.push(self.members.len() as u32);
        self.members.push(vec![v]);
        let k = oracle.block_key(self.graph.id(v));
        self.node_key.push(k);
        self.buckets.entry((self.graph.rank(v), k)).or_default().push(v);
    }

    /// Resets to singletons and recomputes the partition, reusing memoized
    /// decisions.
    pub(crate) fn rebuild(&mut self, oracle: &dyn SimilarityOracle) {
        let n = self.graph.len();
        self.class_of = (0..n as u32).collect();
        self.members = (0..n as u32).map(|v| vec![v]).collect();
        self.index_keys(oracle);
        self.index_constraints();

        let max_rank = self.graph.max_rank().unwrap_or(0) as usize;
        let mut by_rank: Vec<Vec<u32>> = vec![Vec::new(); if n == 0 { 0 } else { max_rank + 1 }];
        for v in 0..n as u32 {
            by_rank[self.graph.rank(v) as usize].push(v);
        }
        for bucket in &mut by_rank {
            bucket.sort_by(|a, b| self.graph.id(*a).cmp(self.graph.id(*b)));
        }
        for bucket in &by_rank {
            // group by the classes of the children (already final for this
            // pass) and by block key; only concepts within a group are compared
            let mut order: Vec<Vec<u32>> = Vec::new();
            let mut index: HashMap<(Vec<u32>, u64), usize> = HashMap::new();
            for &v in bucket {
                let sig = self.class_set(self.graph.children(v));
                let k = (sig, self.node_key[v as usize]);
                let slot = *index.entry(k).or_insert_with(|| {
                    order.push(Vec::new());
                    order.len() - 1
                });
                order[slot].push(v);
            }
            for group in &order {
                self.close_group(group, oracle);
            }
        }
        let seeds: Vec<u32> = (0..self.members.len() as u32).filter(|&c| self.members[c as usize].len() > 1).collect();
        self.stabilize(seeds);
        self.flag_conflicting_triangles();
    }

    fn class_set(&self, nodes: &[u32]) -> Vec<u32> {
        let mut s: Vec<u32> = nodes.iter().map(|&v| self.class_of[v as usize]).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Parent classes, a separator, then child classes.
    fn signature(&self, v: u32) -> Vec<u32> {
        let mut sig = self.class_set(self.graph.parents(v));
        sig.push(u32::MAX);
        sig.extend(self.class_set(self.graph.children(v)));
        sig
    }

    /// Similarity closure inside one group of same-rank concepts.
    fn close_group(&mut self, group: &[u32], oracle: &dyn SimilarityOracle) {
        if group.len() < 2 {
            return;
        }
        let in_group: HashSet<u32> = group.iter().copied().collect();
        let mut heads: Vec<u32> = Vec::new();
        for &x in group {
            match oracle.partners(self.graph.id(x)) {
                Some(partners) => {
                    for p in partners {
                        let Some(y) = self.graph.index_of(&p) else { continue };
                        if y == x || !in_group.contains(&y) || self.class_of[x as usize] == self.class_of[y as usize] {
                            continue;
                        }
                        if self.decide(x, y, oracle) == DecisionKind::Similar {
                            self.union(self.class_of[x as usize], self.class_of[y as usize]);
                        }
                    }
                }
                None => {
                    let mut seen = HashSet::new();
                    for &h in &heads {
                        let ch = self.class_of[h as usize];
                        if ch == self.class_of[x as usize] || !seen.insert(ch) {
                            continue;
                        }
                        let rep = self.members[ch as usize][0];
                        if self.decide(x, rep, oracle) == DecisionKind::Similar {
                            self.union(self.class_of[x as usize], ch);
                        }
                    }
                    heads.push(x);
                }
            }
            if let Some(ps) = self.pos.get(&x).cloned() {
                for y in ps {
                    if in_group.contains(&y) {
                        self.union(self.class_of[x as usize], self.class_of[y as usize]);
                    }
                }
            }
        }
    }

    /// Looks up or asks for the decision on a pair, recording queue items.
    pub(crate) fn decide(&mut self, x: u32, y: u32, oracle: &dyn SimilarityOracle) -> DecisionKind {
        let k = key(x, y);
        if self.neg.get(&x).is_some_and(|v| v.contains(&y)) {
            return DecisionKind::Dissimilar;
        }
        if self.pos.get(&x).is_some_and(|v| v.contains(&y)) {
            return DecisionKind::Similar;
        }
        if let Some(d) = self.memo.get(&k) {
            return d.kind;
        }
        let (a, b) = ordered(self.graph.id(x).clone(), self.graph.id(y).clone());
        let d = oracle.judge(&a, &b);
        self.judged += 1;
        let ctx = ItemContext {
            decision: Some(d.clone()),
            ..Default::default()
        };
        if d.kind == DecisionKind::Uncertain {
            self.queue.push((a.clone(), b.clone()), QueueReason::LowConfidenceOracle, d.confidence, ctx.clone());
        }
        if d.disagreement {
            self.queue.push((a.clone(), b.clone()), QueueReason::SimLlmDisagreement, d.confidence, ctx);
        }
        if d.kind == DecisionKind::Dissimilar && d.answer.as_ref().is_some_and(|ans| ans.verdict == Verdict::No) {
            self.denied.insert(k);
        }
        let kind = d.kind;
        self.memo.insert(k, d);
        kind
    }

    /// Merges two classes unless a negative constraint spans them. Returns
    /// the surviving class and the members that moved.
    pub(crate) fn union(&mut self, cx: u32, cy: u32) -> Option<(u32, Vec<u32>)> {
        if cx == cy {
            return None;
        }
        let (lx, ly) = (self.members[cx as usize].len(), self.members[cy as usize].len());
        let (small, big) = if lx < ly || (lx == ly && cx > cy) { (cx, cy) } else { (cy, cx) };
        for &m in &self.members[small as usize] {
            if let Some(ns) = self.neg.get(&m) {
                if ns.iter().any(|&n| self.class_of[n as usize] == big) {
                    return None;
                }
            }
        }
        let moved = std::mem::take(&mut self.members[small as usize]);
        for &m in &moved {
            self.class_of[m as usize] = big;
        }
        self.members[big as usize].extend_from_slice(&moved);
        Some((big, moved))
    }

    /// Splits classes whose members disagree on parent or child classes
    /// until none do.
    pub(crate) fn stabilize(&mut self, seeds: impl IntoIterator<Item = u32>) {
        let mut work: VecDeque<u32> = VecDeque::new();
        let mut queued: HashSet<u32> = HashSet::new();
        for c in seeds {
            if self.members[c as usize].len() > 1 && queued.insert(c) {
                work.push_back(c);
            }
        }
        while let Some(c) = work.pop_front() {
            queued.remove(&c);
            let ms = &self.members[c as usize];
            if ms.len() < 2 {
                continue;
            }
            let sigs: Vec<Vec<u32>> = ms.iter().map(|&m| self.signature(m)).collect();
            if sigs.iter().all(|s| *s == sigs[0]) {
                continue;
            }
            let mut order: Vec<Vec<u32>> = Vec::new();
            let mut index: HashMap<&Vec<u32>, usize> = HashMap::new();
            for (i, sig) in sigs.iter().enumerate() {
                let slot = *index.entry(sig).or_insert_with(|| {
                    order.push(Vec::new());
                    order.len() - 1
                });
                order[slot].push(ms[i]);
            }
            let keep = (0..order.len()).max_by_key(|&i| (order[i].len(), std::cmp::Reverse(i))).unwrap();
            let mut groups = order;
            self.members[c as usize] = std::mem::take(&mut groups[keep]);
            for group in groups.into_iter().filter(|g| !g.is_empty()) {
                let nc = self.members.len() as u32;
                for &m in &group {
                    self.class_of[m as usize] = nc;
                }
                self.members.push(group);
                for &m in &self.members[nc as usize] {
                    for &w in self.graph.parents(m).iter().chain(self.graph.children(m)) {
                        let cw = self.class_of[w as usize];
                        if self.members[cw as usize].len() > 1 && queued.insert(cw) {
                            work.push_back(cw);
                        }
                    }
                }
            }
        }
    }

    /// Merges the class of `x` with every same-rank class judged similar.
    /// Returns the neighbors of members that changed class.
    fn coarsen_at(&mut self, x: u32, oracle: &dyn SimilarityOracle, touched: &mut Vec<u32>) -> Vec<u32> {
        let rank = self.graph.rank(x);
        let mut candidates: Vec<u32> = Vec::new();
        match oracle.partners(self.graph.id(x)) {
            Some(ps) => {
                for p in ps {
                    if let Some(y) = self.graph.index_of(&p) {
                        if y != x && self.graph.rank(y) == rank {
                            candidates.push(y);
                        }
                    }
                }
            }
            None => {
                let mut seen = HashSet::new();
                let bucket = self.buckets.get(&(rank, self.node_key[x as usize])).cloned().unwrap_or_default();
                for y in bucket {
                    let cy = self.class_of[y as usize];
                    if cy != self.class_of[x as usize] && seen.insert(cy) {
                        candidates.push(self.members[cy as usize][0]);
                    }
                }
            }
        }
        if let Some(ps) = self.pos.get(&x) {
            candidates.extend(ps.iter().copied().filter(|&y| self.graph.rank(y) == rank));
        }
        let mut ripple = Vec::new();
        for y in candidates {
            if self.class_of[x as usize] == self.class_of[y as usize] {
                continue;
            }
            if self.decide(x, y, oracle) != DecisionKind::Similar {
                continue;
            }
            if let Some((big, moved)) = self.union(self.class_of[x as usize], self.class_of[y as usize]) {
                touched.push(big);
                for m in moved {
                    ripple.extend(self.graph.parents(m).iter().chain(self.graph.children(m)).copied());
                }
            }
        }
        ripple
    }

    /// Local repair after `start` nodes changed: merge similar classes around
    /// them (propagating through neighbors of merged classes), then split
    /// until stable.
    pub(crate) fn repair(&mut self, start: impl IntoIterator<Item = u32>, oracle: &dyn SimilarityOracle) {
        let mut work: VecDeque<u32> = VecDeque::new();
        let mut queued: HashSet<u32> = HashSet::new();
        let mut touched: Vec<u32> = Vec::new();
        for v in start {
            touched.push(self.class_of[v as usize]);
            if queued.insert(v) {
                work.push_back(v);
            }
        }
        while let Some(x) = work.pop_front() {
            queued.remove(&x);
            for w in self.coarsen_at(x, oracle, &mut touched) {
                if queued.insert(w) {
                    work.push_back(w);
                }
            }
        }
        let seeds: Vec<u32> = touched.into_iter().map(|c| c as usize).filter(|&c| !self.members[c].is_empty()).map(|c| c as u32).collect();
        self.stabilize(seeds);
        self.flag_conflicting_triangles();
    }

    /// Pairs the oracle confidently denied that ended up in one class through
    /// transitivity.
    fn flag_conflicting_triangles(&mut self) {
        let mut found: Vec<(u32, u32)> = self
            .denied
            .iter()
            .copied()
            .filter(|&(a, b)| self.class_of[a as usize] == self.class_of[b as usize])
            .collect();
        found.sort_unstable();
        for (a, b) in found {
            let d = self.memo.get(&(a, b)).cloned();
            let confidence = d.as_ref().map_or(0.0, |d| d.confidence);
            let pair = ordered(self.graph.id(a).clone(), self.graph.id(b).clone());
            self.queue.push(
                pair,
                QueueReason::SimLlmDisagreement,
                confidence,
                ItemContext {
                    decision: d,
                    relation: None,
                    note: Some("denied by the oracle but joined through other similar pairs".into()),
                },
            );
        }
    }

    /// Removes `c` and `c2` from their shared class and re-merges each
    /// fragment only if the oracle, asked again, finds it similar to every
    /// remaining member and has the same parent and
    /// child classes. Splits propagate to neighboring classes. Returns the
    /// number of fragments that stayed out.
    pub fn collapse(&mut self, c: &ConceptId, c2: &ConceptId, oracle: &dyn SimilarityOracle) -> Result<usize, RefineError> {
        let x = self.graph.index_of(c).ok_or_else(|| RefineError::UnknownConcept(c.to_string()))?;
        let y = self.graph.index_of(c2).ok_or_else(|| RefineError::UnknownConcept(c2.to_string()))?;
        let class = self.class_of[x as usize];
        if self.class_of[y as usize] != class || x == y {
            return Ok(0);
        }
        let rest: Vec<u32> = self.members[class as usize].iter().copied().filter(|&m| m != x && m != y).collect();
        self.members[class as usize] = rest.clone();
        let mut split_off = Vec::new();
        for f in [x, y] {
            let nc = self.members.len() as u32;
            self.class_of[f as usize] = nc;
            self.members.push(vec![f]);
            split_off.push((f, nc));
        }
        if rest.is_empty() {
            // the class was exactly the pair: the merge check is between them
            let (fx, cx) = split_off[0];
            let (fy, cy) = split_off[1];
            let ok = self.rejudge(fx, fy, oracle) == DecisionKind::Similar && self.signature(fx) == self.signature(fy);
            if ok {
                self.union(cx, cy);
                return Ok(0);
            }
            self.members[class as usize].clear();
            self.stabilize_neighbors(&[fx, fy]);
            return Ok(2);
        }
        let mut out = 0;
        let mut stayed_out = Vec::new();
        for (f, fc) in split_off {
            let similar = rest.iter().all(|&m| self.rejudge(f, m, oracle) == DecisionKind::Similar);
            if similar && self.signature(f) == self.signature(rest[0]) {
                self.union(fc, self.class_of[rest[0] as usize]);
            } else {
                out += 1;
                stayed_out.push(f);
            }
        }
        if out > 0 {
            self.stabilize_neighbors(&stayed_out);
        }
        Ok(out)
    }

    /// Like `decide`, but replaces any memoized decision with a fresh one.
    fn rejudge(&mut self, x: u32, y: u32, oracle: &dyn SimilarityOracle) -> DecisionKind {
        self.memo.remove(&key(x, y));
        self.denied.remove(&key(x, y));
        self.decide(x, y, oracle)
    }

    fn stabilize_neighbors(&mut self, moved: &[u32]) {
        let seeds: Vec<u32> = moved
            .iter()
            .flat_map(|&m| self.graph.parents(m).iter().chain(self.graph.children(m)).copied().collect::<Vec<_>>())
            .map(|w| self.class_of[w as usize])
            .collect();
        self.stabilize(seeds);
    }

    /// Applies a reviewer decision to a pending item.
    pub fn resolve(&mut self, id: u64, resolution: Resolution, oracle: &dyn SimilarityOracle) -> Result<ResolveReport, RefineError> {
        let item = self.queue.pending_item(id)?.clone();
        let (a, b) = item.pair.clone();
        let (x, y) = match (self.graph.index_of(&a), self.graph.index_of(&b)) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(RefineError::UnknownConcept(format!("{a} / {b}"))),
        };
        let status = match resolution {
            Resolution::Approve => ItemStatus::Approved,
            Resolution::Reject => ItemStatus::Rejected,
        };
        self.queue.get_mut(id).expect("item exists").status = status;
        let mut requeued = None;
        let deferred_edge = item.reason == QueueReason::RankConflict && item.context.relation.is_some();
        match (deferred_edge, resolution) {
            (true, Resolution::Approve) => {
                let relation = item.context.relation.clone().unwrap_or_default();
                if self.graph.reaches_upward(y, x) {
                    return Err(RefineError::Cycle(vec![a.to_string(), b.to_string()]));
                }
                self.graph.push_edge(x, y, relation);
                self.graph.recompute_ranks();
                self.rebuild(oracle);
            }
            (true, Resolution::Reject) => {}
            (false, Resolution::Approve) => {
                self.constraints.add_positive(a.clone(), b.clone());
                self.index_constraints();
                if self.graph.rank(x) == self.graph.rank(y) {
                    self.repair([x, y], oracle);
                }
                if self.class_of[x as usize] != self.class_of[y as usize] {
                    requeued = Some(self.queue.push(
                        (a.clone(), b.clone()),
                        QueueReason::RankConflict,
                        item.confidence,
                        ItemContext {
                            decision: item.context.decision.clone(),
                            relation: None,
                            note: Some("approved, but the two concepts differ in rank or in parent/child classes".into()),
                        },
                    ));
                }
            }
            (false, Resolution::Reject) => {
                self.constraints.add_negative(a.clone(), b.clone());
                self.index_constraints();
                if self.class_of[x as usize] == self.class_of[y as usize] {
                    self.rebuild(oracle);
                }
            }
        }
        self.version += 1;
        Ok(ResolveReport {
            item: self.queue.get(id).expect("item exists").clone(),
            merged: self.class_of[x as usize] == self.class_of[y as usize],
            requeued,
            version: self.version,
        })
    }
}
