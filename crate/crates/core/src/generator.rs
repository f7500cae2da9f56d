//! Connectivity examples with an exact lookahead and branch count.
//!
//! Each attempt lays down a gold path of length `L` from the start, adds
//! `B - 1` distractor branches out of the start that are at least as long,
//! then grows the graph one node at a time with preferential attachment.
//! A new node is rolled back when it would change the start-to-goal
//! lookahead. Attempts that fail the final validation are discarded.
//!
//! When `B = 1` the start has a single child and lookahead is 1 by
//! definition, so `L` is used as the gold-path depth instead.

use std::collections::{BTreeMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::{distance, Hops, Sweeper};
use crate::error::{Error, Result};
use crate::graph::{Adjacency, DirectedGraph, NodeId};
use crate::parallel::{map_ordered, Execution};

pub const DEFAULT_RETRY_BUDGET: usize = 10_000;
pub const DEFAULT_PER_CELL: usize = 10;

/// Edge cap used when none is given: room for roughly three times the base
/// structure, with a floor so tiny cells still admit distinct shapes.
pub fn default_max_edges(lookahead: u32, branches: u32) -> usize {
    (4 * lookahead as usize * branches as usize).max(32)
}

/// Parameters for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub lookahead: u32,
    pub branches: u32,
    pub max_edges: usize,
    pub seed: u64,
    pub per_cell: usize,
    /// Additive weight in preferential-attachment selection.
    pub alpha: f64,
    pub retry_budget: usize,
}

impl GenerationSpec {
    pub fn new(lookahead: u32, branches: u32) -> Self {
        Self {
            lookahead,
            branches,
            max_edges: default_max_edges(lookahead, branches),
            seed: 0,
            per_cell: DEFAULT_PER_CELL,
            alpha: 1.0,
            retry_budget: DEFAULT_RETRY_BUDGET,
        }
    }

    pub fn with_max_edges(mut self, m: usize) -> Self {
        self.max_edges = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookahead < 1 || self.branches < 1 {
            return Err(Error::domain("lookahead and branches must be at least 1"));
        }
        if self.max_edges < self.lookahead as usize * self.branches as usize {
            return Err(Error::domain(format!(
                "max_edges {} is below B*L = {}",
                self.max_edges,
                self.lookahead * self.branches
            )));
        }
        if self.per_cell < 1 {
            return Err(Error::domain("per_cell must be at least 1"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::domain("alpha must be positive"));
        }
        Ok(())
    }

    /// Lookahead the emitted example must have.
    pub fn target_lookahead(&self) -> u32 {
        if self.branches == 1 {
            1
        } else {
            self.lookahead
        }
    }
}

/// A symbolic connectivity problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedExample {
    pub id: String,
    pub graph: DirectedGraph,
    pub start: NodeId,
    pub goal: NodeId,
    pub gold_next: NodeId,
    pub lookahead: u32,
    pub branches: u32,
    /// Gold path length for single-branch examples.
    pub depth: Option<u32>,
    pub seed: u64,
}

/// One JSONL line of a symbolic dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub edges: Vec<[NodeId; 2]>,
    pub start: NodeId,
    pub goal: NodeId,
    pub gold_next: NodeId,
    pub lookahead: u32,
    pub branches: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    pub seed: u64,
}

impl GeneratedExample {
    pub fn to_record(&self) -> ExampleRecord {
        ExampleRecord {
            id: self.id.clone(),
            edges: self.graph.edges().map(|(u, v)| [u, v]).collect(),
            start: self.start,
            goal: self.goal,
            gold_next: self.gold_next,
            lookahead: self.lookahead,
            branches: self.branches,
            depth: self.depth,
            seed: self.seed,
        }
    }

    pub fn from_record(r: ExampleRecord) -> Result<Self> {
        let graph = DirectedGraph::from_edge_list(r.edges.iter().map(|e| (e[0], e[1])));
        for v in [r.start, r.goal, r.gold_next] {
            graph.check_node(v)?;
        }
        Ok(Self {
            id: r.id,
            graph,
            start: r.start,
            goal: r.goal,
            gold_next: r.gold_next,
            lookahead: r.lookahead,
            branches: r.branches,
            depth: r.depth,
            seed: r.seed,
        })
    }

    /// Length of the gold path: the depth for single-branch examples, the
    /// lookahead otherwise.
    pub fn path_length(&self) -> u32 {
        self.depth.unwrap_or(self.lookahead)
    }

    pub fn edge_set(&self) -> std::collections::HashSet<(NodeId, NodeId)> {
        self.graph.edges().collect()
    }
}

/// Mutable adjacency used while an example is being grown.
#[derive(Debug, Clone)]
struct WorkGraph {
    out: Vec<Vec<NodeId>>,
    inc: Vec<Vec<NodeId>>,
    edges: usize,
}

impl Adjacency for WorkGraph {
    fn node_count(&self) -> usize {
        self.out.len()
    }

    fn successors(&self, v: NodeId) -> &[NodeId] {
        &self.out[v as usize]
    }
}

impl WorkGraph {
    fn new(n: usize) -> Self {
        Self {
            out: vec![Vec::new(); n],
            inc: vec![Vec::new(); n],
            edges: 0,
        }
    }

    fn add(&mut self, u: NodeId, v: NodeId) {
        self.out[u as usize].push(v);
        self.inc[v as usize].push(u);
        self.edges += 1;
    }

    fn remove(&mut self, u: NodeId, v: NodeId) {
        if let Some(i) = self.out[u as usize].iter().position(|&x| x == v) {
            self.out[u as usize].remove(i);
            let j = self.inc[v as usize].iter().position(|&x| x == u).unwrap();
            self.inc[v as usize].remove(j);
            self.edges -= 1;
        }
    }

    fn detach(&mut self, v: NodeId) {
        for c in std::mem::take(&mut self.out[v as usize]) {
            self.inc[c as usize].retain(|&x| x != v);
            self.edges -= 1;
        }
        for p in std::mem::take(&mut self.inc[v as usize]) {
            self.out[p as usize].retain(|&x| x != v);
            self.edges -= 1;
        }
    }

    /// Marks everything reachable from `roots` along out-edges (or in-edges
    /// when `backward`).
    fn mark_reachable(&self, roots: &[NodeId], backward: bool, mark: &mut [bool]) {
        let mut queue: VecDeque<NodeId> = VecDeque::new();
        for &r in roots {
            if !mark[r as usize] {
                mark[r as usize] = true;
                queue.push_back(r);
            }
        }
        while let Some(v) = queue.pop_front() {
            let next = if backward {
                &self.inc[v as usize]
            } else {
                &self.out[v as usize]
            };
            for &c in next {
                if !mark[c as usize] {
                    mark[c as usize] = true;
                    queue.push_back(c);
                }
            }
        }
    }

    fn reachable(&self, roots: &[NodeId], backward: bool) -> Vec<bool> {
        let mut mark = vec![false; self.node_count()];
        self.mark_reachable(roots, backward, &mut mark);
        mark
    }
}

/// Samples node degrees with P(d) proportional to 1/(d+1) on 0..n.
struct DegreeSampler(WeightedIndex<f64>);

impl DegreeSampler {
    fn new(n: usize) -> Self {
        let weights = (0..n.max(1)).map(|d| 1.0 / (d as f64 + 1.0));
        Self(WeightedIndex::new(weights).expect("weights are positive"))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.0.sample(rng)
    }
}

/// Picks up to `k` distinct entries of `candidates` without replacement,
/// each weighted by `alpha + degree(candidate)`.
fn preferential_pick<R: Rng + ?Sized>(
    rng: &mut R,
    candidates: &[NodeId],
    degree: impl Fn(NodeId) -> usize,
    alpha: f64,
    k: usize,
) -> Vec<NodeId> {
    let k = k.min(candidates.len());
    if k == 0 {
        return Vec::new();
    }
    let picked = rand::seq::index::sample_weighted(
        rng,
        candidates.len(),
        |i| alpha + degree(candidates[i]) as f64,
        k,
    )
    .expect("weights are positive and finite");
    let mut out: Vec<NodeId> = picked.into_iter().map(|i| candidates[i]).collect();
    out.sort_unstable();
    out
}

/// Generates one example satisfying `spec`, retrying up to the spec's budget.
pub fn generate_example<R: Rng + ?Sized>(spec: &GenerationSpec, rng: &mut R) -> Result<GeneratedExample> {
    spec.validate()?;
    for _ in 0..spec.retry_budget {
        if let Some(ex) = attempt(spec, rng) {
            return Ok(ex);
        }
    }
    Err(Error::GenerationFailed {
        lookahead: spec.lookahead,
        branches: spec.branches,
        attempts: spec.retry_budget,
    })
}

fn attempt<R: Rng + ?Sized>(spec: &GenerationSpec, rng: &mut R) -> Option<GeneratedExample> {
    let l = spec.lookahead as usize;
    let b = spec.branches as usize;
    let m = spec.max_edges;
    let target = Hops::Finite(spec.target_lookahead());

    let n = (1 + b * l + rng.random_range(0..=m / 3)).max(2);
    let mut g = WorkGraph::new(n);
    let start: NodeId = 0;
    let goal = l as NodeId;
    for i in 0..l {
        g.add(i as NodeId, i as NodeId + 1);
    }

    // Distractor branches out of the start, each of length L plus a little.
    let mut k = l + 1;
    for j in 1..b {
        let later = (b - 1 - j) * l;
        let spare_nodes = n - k - l - later;
        let spare_edges = m - (g.edges + l + later);
        let extra = rng.random_range(0..=spare_nodes.min(spare_edges).min(2));
        let len = l + extra;
        g.add(start, k as NodeId);
        for i in 1..len {
            g.add((k + i - 1) as NodeId, (k + i) as NodeId);
        }
        k += len;
    }

    // Preferential attachment over the remaining nodes.
    let degrees = DegreeSampler::new(n);
    let mut from_start = g.reachable(&[start], false);
    let mut to_goal = g.reachable(&[goal], true);
    let mut sweeper = Sweeper::new(n);
    for v in k..n {
        if g.edges >= m {
            break;
        }
        let v = v as NodeId;
        let placed: Vec<NodeId> = (0..v).collect();
        let budget = m - g.edges;

        let want_out = degrees.sample(rng).min(budget);
        let children = preferential_pick(rng, &placed, |c| g.inc[c as usize].len(), spec.alpha, want_out);
        let reaches_goal = children.iter().any(|&c| to_goal[c as usize]);

        // Parents may not descend from a child (cycle), may not be the start
        // (its out-degree is fixed), and may not open a second start-goal
        // path through the new node.
        let below = g.reachable(&children, false);
        let parents_ok: Vec<NodeId> = placed
            .iter()
            .copied()
            .filter(|&p| p != start && !below[p as usize] && !(reaches_goal && from_start[p as usize]))
            .collect();
        let want_in = degrees.sample(rng).min(budget - children.len());
        let parents = preferential_pick(rng, &parents_ok, |p| g.out[p as usize].len(), spec.alpha, want_in);

        for &c in &children {
            g.add(v, c);
        }
        for &p in &parents {
            g.add(p, v);
        }

        let reached = parents.iter().any(|&p| from_start[p as usize]);
        if reached && sweeper.lookahead(&g, start, goal).ok()? != target {
            g.detach(v);
            continue;
        }
        if reached {
            g.mark_reachable(&[v], false, &mut from_start);
        }
        if reaches_goal {
            g.mark_reachable(&[v], true, &mut to_goal);
        }
    }

    if g.edges > m && !remove_excess_edges(&mut g, start, goal, target, m, rng) {
        return None;
    }

    finalize(spec, g, start, goal, rng)
}

/// Deletes random edges off the gold path (never out of the start) until at
/// most `m` remain, undoing any deletion that changes the lookahead.
fn remove_excess_edges<R: Rng + ?Sized>(
    g: &mut WorkGraph,
    start: NodeId,
    goal: NodeId,
    target: Hops,
    m: usize,
    rng: &mut R,
) -> bool {
    let gold: Vec<(NodeId, NodeId)> = (0..goal).map(|i| (i, i + 1)).collect();
    let mut candidates: Vec<(NodeId, NodeId)> = (0..g.node_count() as NodeId)
        .flat_map(|u| g.out[u as usize].iter().map(move |&v| (u, v)))
        .filter(|&(u, v)| u != start && !gold.contains(&(u, v)))
        .collect();
    candidates.shuffle(rng);
    let mut sweeper = Sweeper::new(g.node_count());
    for (u, v) in candidates {
        if g.edges <= m {
            break;
        }
        g.remove(u, v);
        if sweeper.lookahead(g, start, goal).ok() != Some(target) {
            g.add(u, v);
        }
    }
    g.edges <= m
}

/// Drops isolated nodes, shuffles ids, and runs the full validation.
fn finalize<R: Rng + ?Sized>(
    spec: &GenerationSpec,
    g: WorkGraph,
    start: NodeId,
    goal: NodeId,
    rng: &mut R,
) -> Option<GeneratedExample> {
    let n = g.node_count();
    let mut compact = vec![u32::MAX; n];
    let mut next = 0u32;
    for v in 0..n {
        if !g.out[v].is_empty() || !g.inc[v].is_empty() {
            compact[v] = next;
            next += 1;
        }
    }
    let edges: Vec<(NodeId, NodeId)> = (0..n)
        .flat_map(|u| g.out[u].iter().map(move |&v| (u as NodeId, v)))
        .map(|(u, v)| (compact[u as usize], compact[v as usize]))
        .collect();
    let dense = DirectedGraph::with_nodes(next as usize, edges);
    let (shuffled, perm) = shuffle_node_ids(&dense, rng);
    let start = perm[compact[start as usize] as usize];
    let goal = perm[compact[goal as usize] as usize];

    let mut sorted: Vec<(NodeId, NodeId)> = shuffled.edges().collect();
    sorted.sort_unstable();
    let graph = DirectedGraph::with_nodes(shuffled.node_count(), sorted);

    let gold_next = validate_structure(&graph, start, goal, spec.branches, spec.lookahead, spec.target_lookahead())?;
    if graph.edge_count() > spec.max_edges {
        return None;
    }
    Some(GeneratedExample {
        id: String::new(),
        graph,
        start,
        goal,
        gold_next,
        lookahead: spec.target_lookahead(),
        branches: spec.branches,
        depth: (spec.branches == 1).then_some(spec.lookahead),
        seed: spec.seed,
    })
}

/// Checks every structural contract of an emitted example and returns the
/// gold next node: acyclic without self-loops, start out-degree `branches`,
/// exactly one simple start-goal path of length `path_length`, the expected
/// lookahead, and exactly one start child leading to the goal.
pub fn validate_structure(
    g: &DirectedGraph,
    start: NodeId,
    goal: NodeId,
    branches: u32,
    path_length: u32,
    lookahead: u32,
) -> Option<NodeId> {
    if g.has_self_loops() || topological_order(g).is_err() {
        return None;
    }
    if g.out_degree(start).ok()? != branches as usize {
        return None;
    }
    if count_simple_paths_capped(g, start, goal, 2).ok()? != 1 {
        return None;
    }
    if distance(g, start, goal).ok()? != Hops::Finite(path_length) {
        return None;
    }
    if crate::complexity::lookahead(g, start, goal).ok()? != Hops::Finite(lookahead) {
        return None;
    }
    let mut leading = g
        .successors(start)
        .iter()
        .copied()
        .filter(|&c| distance(g, c, goal).map(|h| h.is_reachable()).unwrap_or(false));
    let gold = leading.next()?;
    leading.next().is_none().then_some(gold)
}

/// A single path `0 -> 1 -> ... -> depth`, plus `extra_nodes` dead-end
/// distractors hanging off interior path nodes.
pub fn generate_chain<R: Rng + ?Sized>(depth: u32, extra_nodes: u32, rng: &mut R) -> Result<GeneratedExample> {
    if depth < 1 {
        return Err(Error::domain("chain depth must be at least 1"));
    }
    let mut edges: Vec<(NodeId, NodeId)> = (0..depth).map(|i| (i, i + 1)).collect();
    for x in 0..extra_nodes {
        let anchor = rng.random_range(1..=depth);
        edges.push((anchor, depth + 1 + x));
    }
    let graph = DirectedGraph::from_edge_list(edges);
    Ok(GeneratedExample {
        id: String::new(),
        graph,
        start: 0,
        goal: depth,
        gold_next: 1,
        lookahead: 1,
        branches: 1,
        depth: Some(depth),
        seed: 0,
    })
}

/// How strictly [`could_be_isomorphic`] compares degree sequences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeCheck {
    /// Sorted total (in + out) degrees.
    #[default]
    Total,
    /// Sorted (in, out) degree pairs; rejects more pairs as non-isomorphic.
    InOut,
}

/// Cheap necessary conditions for isomorphism. `false` is definitive;
/// `true` only means the graphs were not told apart.
pub fn could_be_isomorphic(a: &DirectedGraph, b: &DirectedGraph) -> bool {
    could_be_isomorphic_with(a, b, DegreeCheck::Total)
}

pub fn could_be_isomorphic_with(a: &DirectedGraph, b: &DirectedGraph, check: DegreeCheck) -> bool {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    degree_signature(a, check) == degree_signature(b, check)
}

fn degree_signature(g: &DirectedGraph, check: DegreeCheck) -> Vec<(usize, usize)> {
    let mut indeg = vec![0usize; g.node_count()];
    for (_, v) in g.edges() {
        indeg[v as usize] += 1;
    }
    let mut sig: Vec<(usize, usize)> = (0..g.node_count())
        .map(|v| {
            let out = g.successors(v as NodeId).len();
            match check {
                DegreeCheck::Total => (indeg[v] + out, 0),
                DegreeCheck::InOut => (indeg[v], out),
            }
        })
        .collect();
    sig.sort_unstable();
    sig
}

/// Relabels nodes by a uniformly random permutation. Returns the relabeled
/// graph and `perm`, where `perm[old] = new`.
pub fn shuffle_node_ids<R: Rng + ?Sized>(g: &DirectedGraph, rng: &mut R) -> (DirectedGraph, Vec<NodeId>) {
    let mut perm: Vec<NodeId> = (0..g.node_count() as NodeId).collect();
    perm.shuffle(rng);
    let relabeled = DirectedGraph::with_nodes(
        g.node_count(),
        g.edges().map(|(u, v)| (perm[u as usize], perm[v as usize])),
    );
    (relabeled, perm)
}

/// Kahn topological order, or [`Error::Cycle`].
pub fn topological_order<A: Adjacency>(g: &A) -> Result<Vec<NodeId>> {
    let n = g.node_count();
    let mut indeg = vec![0usize; n];
    for u in 0..n as NodeId {
        for &v in g.successors(u) {
            indeg[v as usize] += 1;
        }
    }
    let mut queue: VecDeque<NodeId> = (0..n as NodeId).filter(|&v| indeg[v as usize] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in g.successors(u) {
            indeg[v as usize] -= 1;
            if indeg[v as usize] == 0 {
                queue.push_back(v);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err(Error::Cycle)
    }
}

/// Number of simple `s -> t` paths, saturating at `cap`. Requires a DAG.
pub fn count_simple_paths_capped<A: Adjacency>(g: &A, s: NodeId, t: NodeId, cap: u64) -> Result<u64> {
    if cap < 2 {
        return Err(Error::domain("cap must be at least 2"));
    }
    g.check_node(s)?;
    g.check_node(t)?;
    let order = topological_order(g)?;
    let mut count = vec![0u64; g.node_count()];
    count[s as usize] = 1;
    for u in order {
        let c = count[u as usize];
        if c == 0 {
            continue;
        }
        for &v in g.successors(u) {
            count[v as usize] = (count[v as usize] + c).min(cap);
        }
    }
    Ok(count[t as usize].min(cap))
}

/// Identifies one dataset cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellKey {
    Grid { lookahead: u32, branches: u32 },
    Chain { depth: u32 },
}

impl CellKey {
    /// File name used when the cell is persisted.
    pub fn file_name(&self) -> String {
        match self {
            CellKey::Grid { lookahead, branches } => format!("deeprd_L{lookahead}_B{branches}.jsonl"),
            CellKey::Chain { depth } => format!("deeprd_chain_D{depth}.jsonl"),
        }
    }

    fn id_prefix(&self) -> String {
        match self {
            CellKey::Grid { lookahead, branches } => format!("L{lookahead}_B{branches}"),
            CellKey::Chain { depth } => format!("chain_D{depth}"),
        }
    }

    fn salt(&self) -> u64 {
        match *self {
            CellKey::Grid { lookahead, branches } => ((lookahead as u64) << 32) | branches as u64,
            CellKey::Chain { depth } => (1u64 << 63) | depth as u64,
        }
    }
}

/// Which cells to generate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetGrid {
    /// (lookahead, branches) pairs.
    pub cells: Vec<(u32, u32)>,
    pub chain_depths: Vec<u32>,
    /// Per-cell edge cap override; defaults to [`default_max_edges`].
    pub max_edges: Option<usize>,
    pub alpha: Option<f64>,
    /// Dangling distractors added to each chain example.
    pub chain_extra_nodes: u32,
}

impl DatasetGrid {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.chain_depths.is_empty()
    }

    pub fn keys(&self) -> Vec<CellKey> {
        let mut keys: Vec<CellKey> = self
            .cells
            .iter()
            .map(|&(lookahead, branches)| CellKey::Grid { lookahead, branches })
            .chain(self.chain_depths.iter().map(|&depth| CellKey::Chain { depth }))
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }
}

/// Examples grouped by cell, in cell order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub cells: BTreeMap<CellKey, Vec<GeneratedExample>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn examples(&self) -> impl Iterator<Item = &GeneratedExample> {
        self.cells.values().flatten()
    }
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `per_cell` examples for every cell. Grid cells are mutually
/// non-isomorphic under [`could_be_isomorphic`]; chains of one depth are all
/// the same shape, so they differ only in their shuffled labels. Cells are
/// independent and may run in parallel; output depends only on `seed`.
pub fn generate_dataset(grid: &DatasetGrid, per_cell: usize, seed: u64, exec: Execution) -> Result<Dataset> {
    if grid.is_empty() {
        return Err(Error::domain("dataset grid is empty"));
    }
    if per_cell < 1 {
        return Err(Error::domain("per_cell must be at least 1"));
    }
    let keys = grid.keys();
    let results = map_ordered(exec, &keys, |&key| generate_cell(grid, key, per_cell, seed));
    let mut cells = BTreeMap::new();
    for (key, r) in keys.into_iter().zip(results) {
        cells.insert(key, r?);
    }
    Ok(Dataset { cells })
}

fn generate_cell(grid: &DatasetGrid, key: CellKey, per_cell: usize, seed: u64) -> Result<Vec<GeneratedExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, key.salt()));
    let prefix = key.id_prefix();
    let mut out: Vec<GeneratedExample> = Vec::with_capacity(per_cell);
    match key {
        CellKey::Chain { depth } => {
            for i in 0..per_cell {
                let ex_seed = rng.next_u64();
                let mut ex_rng = ChaCha8Rng::seed_from_u64(ex_seed);
                let chain = generate_chain(depth, grid.chain_extra_nodes, &mut ex_rng)?;
                let (graph, perm) = shuffle_node_ids(&chain.graph, &mut ex_rng);
                let mut sorted: Vec<_> = graph.edges().collect();
                sorted.sort_unstable();
                out.push(GeneratedExample {
                    id: format!("{prefix}_{i:03}"),
                    graph: DirectedGraph::with_nodes(graph.node_count(), sorted),
                    start: perm[chain.start as usize],
                    goal: perm[chain.goal as usize],
                    gold_next: perm[chain.gold_next as usize],
                    seed: ex_seed,
                    ..chain
                });
            }
        }
        CellKey::Grid { lookahead, branches } => {
            let mut spec = GenerationSpec::new(lookahead, branches);
            if let Some(m) = grid.max_edges {
                spec.max_edges = m;
            }
            if let Some(a) = grid.alpha {
                spec.alpha = a;
            }
            spec.per_cell = per_cell;
            let mut rejected = 0usize;
            while out.len() < per_cell {
                let ex_seed = rng.next_u64();
                let spec = spec.clone().with_seed(ex_seed);
                let mut ex_rng = ChaCha8Rng::seed_from_u64(ex_seed);
                let mut ex = generate_example(&spec, &mut ex_rng)?;
                if out.iter().any(|o| could_be_isomorphic(&o.graph, &ex.graph)) {
                    rejected += 1;
                    if rejected >= spec.retry_budget {
                        return Err(Error::GenerationFailed {
                            lookahead,
                            branches,
                            attempts: rejected,
                        });
                    }
                    continue;
                }
                ex.id = format!("{prefix}_{:03}", out.len());
                out.push(ex);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::lookahead;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn spec_validation() {
        assert!(GenerationSpec::new(0, 2).validate().is_err());
        assert!(GenerationSpec::new(4, 2).with_max_edges(7).validate().is_err());
        assert!(GenerationSpec::new(4, 2).validate().is_ok());
    }

    #[test]
    fn small_two_branch_example() {
        let spec = GenerationSpec::new(2, 2).with_max_edges(40).with_seed(1);
        let ex = generate_example(&spec, &mut rng(1)).unwrap();
        assert_eq!(ex.graph.out_degree(ex.start).unwrap(), 2);
        assert_eq!(lookahead(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(2));
        assert_eq!(distance(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(2));
        assert_eq!(count_simple_paths_capped(&ex.graph, ex.start, ex.goal, 8).unwrap(), 1);
        assert!(ex.graph.edge_count() <= 40);
    }

    #[test]
    fn smallest_instance() {
        let spec = GenerationSpec::new(1, 1).with_max_edges(1);
        let ex = generate_example(&spec, &mut rng(2)).unwrap();
        assert_eq!(ex.graph.edge_count(), 1);
        assert!(ex.graph.has_edge(ex.start, ex.goal));
        assert_eq!(ex.gold_next, ex.goal);
    }

    #[test]
    fn fifty_examples_recompute() {
        let spec = GenerationSpec::new(8, 4);
        let mut r = rng(3);
        for _ in 0..50 {
            let ex = generate_example(&spec, &mut r).unwrap();
            assert_eq!(lookahead(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(8));
            assert_eq!(distance(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(8));
            assert_eq!(ex.graph.out_degree(ex.start).unwrap(), 4);
            assert!(topological_order(&ex.graph).is_ok());
        }
    }

    #[test]
    fn single_branch_uses_depth() {
        let spec = GenerationSpec::new(6, 1);
        let ex = generate_example(&spec, &mut rng(4)).unwrap();
        assert_eq!(ex.lookahead, 1);
        assert_eq!(ex.depth, Some(6));
        assert_eq!(lookahead(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(1));
        assert_eq!(distance(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(6));
    }

    #[test]
    fn same_seed_same_example() {
        let spec = GenerationSpec::new(5, 3);
        let a = generate_example(&spec, &mut rng(9)).unwrap();
        let b = generate_example(&spec, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhausted_budget_fails_loudly() {
        let mut spec = GenerationSpec::new(3, 2);
        spec.retry_budget = 0;
        assert!(matches!(
            generate_example(&spec, &mut rng(0)),
            Err(Error::GenerationFailed { attempts: 0, .. })
        ));
    }

    #[test]
    fn chains() {
        let c = generate_chain(2, 0, &mut rng(0)).unwrap();
        assert_eq!(c.graph.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!((c.start, c.goal, c.gold_next), (0, 2, 1));
        let c = generate_chain(1536, 0, &mut rng(0)).unwrap();
        assert_eq!(c.graph.edge_count(), 1536);
        assert_eq!(lookahead(&c.graph, 0, 1536).unwrap(), Hops::Finite(1));
        let c = generate_chain(7, 5, &mut rng(1)).unwrap();
        assert_eq!(distance(&c.graph, c.start, c.goal).unwrap(), Hops::Finite(7));
        assert_eq!(c.graph.out_degree(c.start).unwrap(), 1);
        assert!(generate_chain(0, 0, &mut rng(0)).is_err());
    }

    #[test]
    fn isomorphism_screen() {
        let a = DirectedGraph::from_edge_list([(0, 1), (0, 2)]);
        let b = DirectedGraph::from_edge_list([(0, 1), (1, 2)]);
        assert!(could_be_isomorphic(&a, &a));
        assert!(could_be_isomorphic(&a, &b));
        assert!(!could_be_isomorphic_with(&a, &b, DegreeCheck::InOut));
        let c = DirectedGraph::from_edge_list([(0, 1), (1, 2), (2, 3)]);
        assert!(!could_be_isomorphic(&a, &c));
    }

    #[test]
    fn shuffle_round_trip() {
        let g = DirectedGraph::from_edge_list([(0, 1), (0, 2), (2, 3), (3, 1)]);
        let (h, perm) = shuffle_node_ids(&g, &mut rng(5));
        let mut inv = vec![0; perm.len()];
        for (old, &new) in perm.iter().enumerate() {
            inv[new as usize] = old as NodeId;
        }
        let mut back: Vec<_> = h.edges().map(|(u, v)| (inv[u as usize], inv[v as usize])).collect();
        back.sort();
        let mut orig: Vec<_> = g.edges().collect();
        orig.sort();
        assert_eq!(back, orig);
        assert!(could_be_isomorphic_with(&g, &h, DegreeCheck::InOut));
    }

    #[test]
    fn simple_path_counts() {
        let chain = DirectedGraph::from_edge_list([(0, 1), (1, 2)]);
        assert_eq!(count_simple_paths_capped(&chain, 0, 2, 2).unwrap(), 1);
        let diamond = DirectedGraph::from_edge_list([(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(count_simple_paths_capped(&diamond, 0, 3, 5).unwrap(), 2);
        assert_eq!(count_simple_paths_capped(&diamond, 0, 3, 2).unwrap(), 2);
        let cyc = DirectedGraph::from_edge_list([(0, 1), (1, 0)]);
        assert!(matches!(count_simple_paths_capped(&cyc, 0, 1, 2), Err(Error::Cycle)));
        assert!(count_simple_paths_capped(&chain, 0, 2, 1).is_err());
    }

    #[test]
    fn excess_removal_keeps_lookahead() {
        // Gold path 0..3, one branch 0->4->5->6->7, plus removable tail edges.
        let mut g = WorkGraph::new(10);
        for (u, v) in [(0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9)] {
            g.add(u, v);
        }
        let target = Hops::Finite(3);
        assert_eq!(crate::complexity::lookahead(&g, 0, 3).unwrap(), target);
        assert!(remove_excess_edges(&mut g, 0, 3, target, 7, &mut rng(0)));
        assert!(g.edges <= 7);
        assert_eq!(crate::complexity::lookahead(&g, 0, 3).unwrap(), target);
        // Cannot go below the structure that pins the lookahead.
        assert!(!remove_excess_edges(&mut g, 0, 3, target, 3, &mut rng(0)));
    }

    #[test]
    fn dataset_cells_are_distinct_and_deterministic() {
        let grid = DatasetGrid {
            cells: vec![(2, 2)],
            chain_depths: vec![3],
            ..Default::default()
        };
        let a = generate_dataset(&grid, 10, 11, Execution::Parallel).unwrap();
        let b = generate_dataset(&grid, 10, 11, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let cell = &a.cells[&CellKey::Grid { lookahead: 2, branches: 2 }];
        assert_eq!(cell.len(), 10);
        for i in 0..cell.len() {
            for j in 0..i {
                assert!(!could_be_isomorphic(&cell[i].graph, &cell[j].graph));
            }
        }
        assert_eq!(a.cells[&CellKey::Chain { depth: 3 }].len(), 10);
        assert!(generate_dataset(&DatasetGrid::default(), 10, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn record_round_trip() {
        let spec = GenerationSpec::new(3, 2);
        let ex = generate_example(&spec, &mut rng(8)).unwrap();
        let json = serde_json::to_string(&ex.to_record()).unwrap();
        let back = GeneratedExample::from_record(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back.edge_set(), ex.edge_set());
        assert_eq!(back.gold_next, ex.gold_next);
    }
}
