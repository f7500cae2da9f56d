//! Search-complexity metrics: BFS distance, lookahead, and their
//! distributions over sampled sources.
//!
//! Lookahead counts BFS layers from a start node until either the goal enters
//! the frontier or every frontier node is reachable through one common child
//! of the start. Each frontier node carries the set of start-children it can
//! be reached through, stored as a fixed-width bitmask over those children so
//! the early-stop test is a word-wise AND across the frontier.
//!
//! Nodes reached only after the early stop inherit the stop layer. A target
//! that is not reachable at all is [`Hops::Unreachable`] even if the early
//! stop fired, so lookahead and distance always agree on reachability.

use std::cmp::Ordering;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, DirectedGraph, NodeId};
use crate::parallel::{fold_merge, Execution};

/// A hop count, or the absence of any path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hops {
    Finite(u32),
    Unreachable,
}

/// Lookahead values share the representation of hop counts.
pub type LookaheadValue = Hops;

impl Hops {
    pub fn finite(self) -> Option<u32> {
        match self {
            Hops::Finite(v) => Some(v),
            Hops::Unreachable => None,
        }
    }

    pub fn is_reachable(self) -> bool {
        matches!(self, Hops::Finite(_))
    }
}

impl Ord for Hops {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Hops::Finite(a), Hops::Finite(b)) => a.cmp(b),
            (Hops::Finite(_), Hops::Unreachable) => Ordering::Less,
            (Hops::Unreachable, Hops::Finite(_)) => Ordering::Greater,
            (Hops::Unreachable, Hops::Unreachable) => Ordering::Equal,
        }
    }
}

impl PartialOrd for Hops {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Hops {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hops::Finite(v) => write!(f, "{v}"),
            Hops::Unreachable => f.write_str("unreachable"),
        }
    }
}

/// Shortest directed path length from `s` to `t` by plain layered BFS.
pub fn distance<A: Adjacency>(g: &A, s: NodeId, t: NodeId) -> Result<Hops> {
    g.check_node(s)?;
    g.check_node(t)?;
    if s == t {
        return Ok(Hops::Finite(0));
    }
    let mut visited = vec![false; g.node_count()];
    visited[s as usize] = true;
    let mut frontier: Vec<NodeId> = Vec::new();
    for &c in g.successors(s) {
        if !visited[c as usize] {
            visited[c as usize] = true;
            frontier.push(c);
        }
    }
    let mut d = 1;
    let mut next = Vec::new();
    while !frontier.is_empty() {
        if frontier.contains(&t) {
            return Ok(Hops::Finite(d));
        }
        next.clear();
        for &v in &frontier {
            for &c in g.successors(v) {
                if !visited[c as usize] {
                    visited[c as usize] = true;
                    next.push(c);
                }
            }
        }
        std::mem::swap(&mut frontier, &mut next);
        d += 1;
    }
    Ok(Hops::Unreachable)
}

/// One BFS layer plus, while the search has not stopped, the origin mask of
/// each node (row `i` belongs to `nodes[i]`).
#[derive(Debug, Default)]
struct Frontier {
    nodes: Vec<NodeId>,
    bits: Vec<u64>,
    words: usize,
}

impl Frontier {
    fn reset(&mut self, words: usize) {
        self.nodes.clear();
        self.bits.clear();
        self.words = words;
    }

    fn push(&mut self, v: NodeId) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(v);
        self.bits.resize(self.bits.len() + self.words, 0);
        slot
    }

    fn row(&self, slot: usize) -> &[u64] {
        &self.bits[slot * self.words..(slot + 1) * self.words]
    }

    fn or_row(&mut self, slot: usize, src: &[u64]) {
        let w = self.words;
        for (dst, s) in self.bits[slot * w..(slot + 1) * w].iter_mut().zip(src) {
            *dst |= s;
        }
    }

    /// Whether some start-child is an origin of every node in the layer.
    fn has_common_origin(&self) -> bool {
        if self.nodes.is_empty() || self.words == 0 {
            return false;
        }
        let w = self.words;
        let mut acc: Vec<u64> = self.row(0).to_vec();
        for slot in 1..self.nodes.len() {
            let mut any = 0u64;
            for (a, b) in acc.iter_mut().zip(&self.bits[slot * w..(slot + 1) * w]) {
                *a &= b;
                any |= *a;
            }
            if any == 0 {
                return false;
            }
        }
        acc.iter().any(|&x| x != 0)
    }
}

/// What a source sweep did.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOutcome {
    /// Layer at which the common-origin early stop fired, if it did.
    pub stop_layer: Option<u32>,
    /// Number of nodes reached (excluding the source).
    pub reached: usize,
    /// True when a layer cap cut the sweep short.
    pub capped: bool,
}

/// Reusable scratch space for BFS sweeps over one graph. Each worker owns
/// one; nothing is reallocated between sources.
#[derive(Debug)]
pub struct Sweeper {
    epoch: u32,
    visited: Vec<u32>,
    level: Vec<u32>,
    slot: Vec<u32>,
    cur: Frontier,
    next: Frontier,
}

impl Sweeper {
    pub fn new(node_count: usize) -> Self {
        Self {
            epoch: 0,
            visited: vec![0; node_count],
            level: vec![0; node_count],
            slot: vec![0; node_count],
            cur: Frontier::default(),
            next: Frontier::default(),
        }
    }

    fn ensure(&mut self, n: usize) {
        if self.visited.len() < n {
            self.visited.resize(n, 0);
            self.level.resize(n, 0);
            self.slot.resize(n, 0);
        }
    }

    fn begin(&mut self, n: usize) -> u32 {
        self.ensure(n);
        if self.epoch == u32::MAX {
            self.visited.iter_mut().for_each(|x| *x = 0);
            self.epoch = 0;
        }
        self.epoch += 1;
        self.epoch
    }

    #[inline]
    fn seen(&self, v: NodeId, epoch: u32) -> bool {
        self.visited[v as usize] == epoch
    }

    /// Seeds the first layer with the children of `s`, each tagged with its
    /// own origin bit. Returns the epoch.
    fn seed_children<A: Adjacency>(&mut self, g: &A, s: NodeId) -> u32 {
        let epoch = self.begin(g.node_count());
        self.visited[s as usize] = epoch;
        self.level[s as usize] = 0;
        let children = g.successors(s);
        let words = children.len().div_ceil(64).max(1);
        self.cur.reset(words);
        for &c in children {
            if self.seen(c, epoch) {
                continue;
            }
            self.visited[c as usize] = epoch;
            self.level[c as usize] = 1;
            let slot = self.cur.push(c);
            let bit = slot;
            self.cur.bits[slot * words + bit / 64] |= 1u64 << (bit % 64);
        }
        epoch
    }

    /// Builds the next layer from the current one. Origin masks are only
    /// propagated while `track` is set.
    fn expand<A: Adjacency>(&mut self, g: &A, epoch: u32, layer: u32, track: bool) {
        let words = if track { self.cur.words } else { 0 };
        self.next.reset(words);
        for i in 0..self.cur.nodes.len() {
            let v = self.cur.nodes[i];
            for &c in g.successors(v) {
                let ci = c as usize;
                if self.visited[ci] != epoch {
                    self.visited[ci] = epoch;
                    self.level[ci] = layer + 1;
                    let slot = self.next.push(c);
                    self.slot[ci] = slot as u32;
                    if track {
                        let src = &self.cur.bits[i * words..(i + 1) * words];
                        self.next.or_row(slot, src);
                    }
                } else if track && self.level[ci] == layer + 1 {
                    let slot = self.slot[ci] as usize;
                    let src = &self.cur.bits[i * words..(i + 1) * words];
                    self.next.or_row(slot, src);
                }
            }
        }
        std::mem::swap(&mut self.cur, &mut self.next);
    }

    /// Lookahead from `s` to `t` following the layer-by-layer definition,
    /// returning as soon as the answer is known.
    pub fn lookahead<A: Adjacency>(&mut self, g: &A, s: NodeId, t: NodeId) -> Result<Hops> {
        g.check_node(s)?;
        g.check_node(t)?;
        if s == t {
            return Ok(Hops::Finite(0));
        }
        let epoch = self.seed_children(g, s);
        let mut layer = 1u32;
        while !self.cur.nodes.is_empty() {
            if self.seen(t, epoch) && self.level[t as usize] == layer {
                return Ok(Hops::Finite(layer));
            }
            if self.cur.has_common_origin() {
                return Ok(if self.reaches_from_frontier(g, t, epoch, layer) {
                    Hops::Finite(layer)
                } else {
                    Hops::Unreachable
                });
            }
            self.expand(g, epoch, layer, true);
            layer += 1;
        }
        Ok(Hops::Unreachable)
    }

    /// Continues the BFS without origin tracking to see whether `t` is still
    /// reachable from the current layer.
    fn reaches_from_frontier<A: Adjacency>(
        &mut self,
        g: &A,
        t: NodeId,
        epoch: u32,
        mut layer: u32,
    ) -> bool {
        while !self.cur.nodes.is_empty() {
            self.expand(g, epoch, layer, false);
            layer += 1;
            if self.seen(t, epoch) {
                return true;
            }
        }
        false
    }

    /// Full sweep from `s`: calls `visit(v, distance, lookahead)` once for
    /// every node reachable from `s` other than `s` itself. `layer_cap`
    /// bounds the number of BFS layers explored.
    pub fn sweep<A, F>(
        &mut self,
        g: &A,
        s: NodeId,
        layer_cap: Option<u32>,
        mut visit: F,
    ) -> Result<SweepOutcome>
    where
        A: Adjacency,
        F: FnMut(NodeId, u32, u32),
    {
        g.check_node(s)?;
        let epoch = self.seed_children(g, s);
        let mut out = SweepOutcome::default();
        let mut layer = 1u32;
        while !self.cur.nodes.is_empty() {
            if out.stop_layer.is_none() && self.cur.has_common_origin() {
                out.stop_layer = Some(layer);
            }
            let value = out.stop_layer.unwrap_or(layer);
            for &v in &self.cur.nodes {
                visit(v, layer, value);
            }
            out.reached += self.cur.nodes.len();
            if layer_cap.is_some_and(|cap| layer >= cap) {
                out.capped = self
                    .cur
                    .nodes
                    .iter()
                    .any(|&v| g.successors(v).iter().any(|&c| !self.seen(c, epoch)));
                break;
            }
            self.expand(g, epoch, layer, out.stop_layer.is_none());
            layer += 1;
        }
        Ok(out)
    }
}

/// Lookahead from `s` to `t`.
pub fn lookahead<A: Adjacency>(g: &A, s: NodeId, t: NodeId) -> Result<Hops> {
    Sweeper::new(g.node_count()).lookahead(g, s, t)
}

/// Lookahead from `s` to every node, indexed by node id. The source maps to
/// 0; nodes not reachable from `s` map to [`Hops::Unreachable`].
pub fn lookaheads_from_source<A: Adjacency>(g: &A, s: NodeId) -> Result<Vec<Hops>> {
    let mut out = vec![Hops::Unreachable; g.node_count()];
    let mut sweeper = Sweeper::new(g.node_count());
    sweeper.sweep(g, s, None, |v, _, l| out[v as usize] = Hops::Finite(l))?;
    out[s as usize] = Hops::Finite(0);
    Ok(out)
}

/// Counts of finite hop values plus the unreachable remainder.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub unreachable_count: u64,
    pub sampled_sources: u64,
    pub total_sources: u64,
}

/// Sidecar written next to a histogram CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramMetadata {
    pub sampled_sources: u64,
    pub total_sources: u64,
    pub unreachable_count: u64,
    pub seed: Option<u64>,
}

impl HopHistogram {
    pub fn new(total_sources: u64) -> Self {
        Self {
            total_sources,
            ..Self::default()
        }
    }

    pub fn add(&mut self, value: u64) {
        self.add_n(value, 1);
    }

    pub fn add_n(&mut self, value: u64, n: u64) {
        if n > 0 {
            *self.counts.entry(value).or_insert(0) += n;
        }
    }

    /// Adds counts from `other`. Associative and commutative.
    pub fn merge(&mut self, other: &HopHistogram) {
        for (&v, &c) in &other.counts {
            self.add_n(v, c);
        }
        self.unreachable_count += other.unreachable_count;
        self.sampled_sources += other.sampled_sources;
        self.total_sources = self.total_sources.max(other.total_sources);
    }

    pub fn finite_mass(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.finite_mass() == 0
    }

    pub fn mean(&self) -> Option<f64> {
        let mass = self.finite_mass();
        (mass > 0).then(|| {
            let sum: f64 = self.counts.iter().map(|(&v, &c)| v as f64 * c as f64).sum();
            sum / mass as f64
        })
    }

    pub fn metadata(&self, seed: Option<u64>) -> HistogramMetadata {
        HistogramMetadata {
            sampled_sources: self.sampled_sources,
            total_sources: self.total_sources,
            unreachable_count: self.unreachable_count,
            seed,
        }
    }

    /// Writes `value,count` rows in increasing value order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "value,count")?;
        for (v, c) in &self.counts {
            writeln!(w, "{v},{c}")?;
        }
        Ok(())
    }
}

/// Shortest-path length histogram over `sources` (all nodes when `None`),
/// one plain BFS per source. Unreachable ordered pairs are counted apart.
pub fn pairwise_distance_distribution(
    g: &DirectedGraph,
    sources: Option<&[NodeId]>,
    exec: Execution,
) -> Result<HopHistogram> {
    let all: Vec<NodeId>;
    let sources = match sources {
        Some(s) => s,
        None => {
            all = (0..g.node_count() as NodeId).collect();
            &all
        }
    };
    for &s in sources {
        g.check_node(s)?;
    }
    let n = g.node_count();
    let total = n as u64;
    let (hist, _) = fold_merge(
        exec,
        sources,
        || (HopHistogram::new(total), BfsScratch::new(n)),
        |(mut h, mut scratch), &s| {
            let reached = scratch.layers(g, s, |d| h.add(d as u64));
            h.unreachable_count += (n - 1 - reached) as u64;
            h.sampled_sources += 1;
            (h, scratch)
        },
        |(mut a, sa), (b, _)| {
            a.merge(&b);
            (a, sa)
        },
    );
    Ok(hist)
}

struct BfsScratch {
    visited: Vec<bool>,
    frontier: Vec<NodeId>,
    next: Vec<NodeId>,
    touched: Vec<NodeId>,
}

impl BfsScratch {
    fn new(n: usize) -> Self {
        Self {
            visited: vec![false; n],
            frontier: Vec::new(),
            next: Vec::new(),
            touched: Vec::new(),
        }
    }

    /// Layered BFS from `s`; calls `each(d)` per reached node other than `s`.
    fn layers(&mut self, g: &DirectedGraph, s: NodeId, mut each: impl FnMut(u32)) -> usize {
        self.visited[s as usize] = true;
        self.touched.push(s);
        self.frontier.clear();
        for &c in g.successors(s) {
            if !self.visited[c as usize] {
                self.visited[c as usize] = true;
                self.touched.push(c);
                self.frontier.push(c);
            }
        }
        let mut d = 1;
        let mut reached = 0;
        while !self.frontier.is_empty() {
            for _ in &self.frontier {
                each(d);
            }
            reached += self.frontier.len();
            self.next.clear();
            for &v in &self.frontier {
                for &c in g.successors(v) {
                    if !self.visited[c as usize] {
                        self.visited[c as usize] = true;
                        self.touched.push(c);
                        self.next.push(c);
                    }
                }
            }
            std::mem::swap(&mut self.frontier, &mut self.next);
            d += 1;
        }
        for &v in &self.touched {
            self.visited[v as usize] = false;
        }
        self.touched.clear();
        reached
    }
}

/// Histograms produced by one pass of lookahead sweeps.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SweepHistograms {
    pub lookahead: HopHistogram,
    pub distance: HopHistogram,
    /// Sources whose sweep hit the layer cap.
    pub capped_sources: u64,
}

impl SweepHistograms {
    fn new(total: u64) -> Self {
        Self {
            lookahead: HopHistogram::new(total),
            distance: HopHistogram::new(total),
            capped_sources: 0,
        }
    }

    fn merge(&mut self, other: &SweepHistograms) {
        self.lookahead.merge(&other.lookahead);
        self.distance.merge(&other.distance);
        self.capped_sources += other.capped_sources;
    }
}

/// Lookahead and distance histograms from each source in `sources` to every
/// other node. Sources are partitioned across workers; partial histograms
/// merge by addition.
pub fn sweep_distributions<A: Adjacency + Sync>(
    g: &A,
    sources: &[NodeId],
    layer_cap: Option<u32>,
    exec: Execution,
) -> Result<SweepHistograms> {
    if sources.is_empty() {
        return Err(Error::domain("source sample must not be empty"));
    }
    for &s in sources {
        g.check_node(s)?;
    }
    let n = g.node_count();
    let total = n as u64;
    let (hist, _) = fold_merge(
        exec,
        sources,
        || (SweepHistograms::new(total), Sweeper::new(n)),
        |(mut h, mut sweeper), &s| {
            let out = sweeper
                .sweep(g, s, layer_cap, |_, d, l| {
                    h.distance.add(d as u64);
                    h.lookahead.add(l as u64);
                })
                .expect("sources validated above");
            let missing = (n - 1 - out.reached) as u64;
            h.lookahead.unreachable_count += missing;
            h.distance.unreachable_count += missing;
            h.lookahead.sampled_sources += 1;
            h.distance.sampled_sources += 1;
            h.capped_sources += out.capped as u64;
            (h, sweeper)
        },
        |(mut a, sa), (b, _)| {
            a.merge(&b);
            (a, sa)
        },
    );
    Ok(hist)
}

/// Aggregated lookahead histogram over a nonempty source sample.
pub fn lookahead_distribution<A: Adjacency + Sync>(
    g: &A,
    sources: &[NodeId],
    exec: Execution,
) -> Result<HopHistogram> {
    Ok(sweep_distributions(g, sources, None, exec)?.lookahead)
}

/// Histogram of out-degree over every node.
pub fn branch_distribution(g: &DirectedGraph) -> HopHistogram {
    let n = g.node_count() as u64;
    let mut h = HopHistogram::new(n);
    h.sampled_sources = n;
    for v in 0..g.node_count() as NodeId {
        h.add(g.successors(v).len() as u64);
    }
    h
}

/// Uniform sample of `k` distinct node ids (clamped to the node count),
/// sorted ascending.
pub fn sample_sources(node_count: usize, k: usize, seed: u64) -> Vec<NodeId> {
    if k >= node_count {
        return (0..node_count as NodeId).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<NodeId> = rand::seq::index::sample(&mut rng, node_count, k)
        .into_iter()
        .map(|i| i as NodeId)
        .collect();
    picked.sort_unstable();
    picked
}

/// Plain BFS distances from `s` to every node, used by tests and the
/// generator's validation.
pub fn distances_from<A: Adjacency>(g: &A, s: NodeId) -> Vec<Hops> {
    let mut out = vec![Hops::Unreachable; g.node_count()];
    out[s as usize] = Hops::Finite(0);
    let mut queue = VecDeque::from([s]);
    while let Some(v) = queue.pop_front() {
        let d = out[v as usize].finite().unwrap();
        for &c in g.successors(v) {
            if out[c as usize] == Hops::Unreachable {
                out[c as usize] = Hops::Finite(d + 1);
                queue.push_back(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(depth: u32) -> DirectedGraph {
        DirectedGraph::from_edge_list((0..depth).map(|i| (i, i + 1)))
    }

    #[test]
    fn hops_ordering_puts_unreachable_last() {
        assert!(Hops::Finite(u32::MAX) < Hops::Unreachable);
        assert!(Hops::Finite(1) < Hops::Finite(2));
    }

    #[test]
    fn distance_basics() {
        let g = chain(3);
        assert_eq!(distance(&g, 2, 2).unwrap(), Hops::Finite(0));
        assert_eq!(distance(&g, 0, 3).unwrap(), Hops::Finite(3));
        assert_eq!(distance(&g, 3, 0).unwrap(), Hops::Unreachable);
        assert!(distance(&g, 0, 9).is_err());
    }

    #[test]
    fn long_chain_has_lookahead_one() {
        let g = chain(1536);
        assert_eq!(lookahead(&g, 0, 1536).unwrap(), Hops::Finite(1));
        assert_eq!(distance(&g, 0, 1536).unwrap(), Hops::Finite(1536));
    }

    #[test]
    fn lookahead_self_is_zero() {
        let g = chain(2);
        assert_eq!(lookahead(&g, 1, 1).unwrap(), Hops::Finite(0));
    }

    #[test]
    fn dead_end_branch_still_counts_until_goal_layer() {
        // 0 -> {1, 2}; 1 -> 3 (dead end); 2 -> 4 -> 5. Layers {1,2}, {3,4}
        // keep distinct origins, so the goal is only settled at layer 3.
        let g = DirectedGraph::from_edge_list([(0, 1), (0, 2), (1, 3), (2, 4), (4, 5)]);
        assert_eq!(lookahead(&g, 0, 5).unwrap(), Hops::Finite(3));
        assert_eq!(lookahead(&g, 0, 4).unwrap(), Hops::Finite(2));
    }

    #[test]
    fn common_origin_stops_early() {
        // Both branches of layer 2 descend from child 1 as well.
        let g = DirectedGraph::from_edge_list([
            (0, 1),
            (0, 2),
            (1, 3),
            (1, 4),
            (2, 4),
            (3, 5),
            (4, 6),
            (6, 7),
        ]);
        // Layer 2 = {3, 4}: origins {1} and {1, 2}, common child 1.
        assert_eq!(lookahead(&g, 0, 7).unwrap(), Hops::Finite(2));
        assert_eq!(distance(&g, 0, 7).unwrap(), Hops::Finite(4));
        let all = lookaheads_from_source(&g, 0).unwrap();
        assert_eq!(all[7], Hops::Finite(2));
        assert_eq!(all[1], Hops::Finite(1));
    }

    #[test]
    fn early_stop_does_not_claim_unreachable_targets() {
        let g = DirectedGraph::from_edge_list([(0, 1), (1, 2), (3, 4)]);
        assert_eq!(lookahead(&g, 0, 4).unwrap(), Hops::Unreachable);
        assert_eq!(lookahead(&g, 0, 2).unwrap(), Hops::Finite(1));
    }

    #[test]
    fn from_source_on_chain_and_isolated() {
        let g = chain(5);
        let l = lookaheads_from_source(&g, 0).unwrap();
        assert_eq!(l[0], Hops::Finite(0));
        assert!(l[1..].iter().all(|&x| x == Hops::Finite(1)));

        let g = DirectedGraph::with_nodes(3, [(1, 2)]);
        let l = lookaheads_from_source(&g, 0).unwrap();
        assert_eq!(l, vec![Hops::Finite(0), Hops::Unreachable, Hops::Unreachable]);
    }

    #[test]
    fn from_source_keeps_earlier_layer_values() {
        // Node 3 sits at layer 1 but is also a descendant of the stop layer.
        let g = DirectedGraph::from_edge_list([(0, 1), (0, 3), (1, 2), (3, 2), (2, 3)]);
        let l = lookaheads_from_source(&g, 0).unwrap();
        for t in 0..4 {
            assert_eq!(l[t as usize], lookahead(&g, 0, t).unwrap(), "target {t}");
        }
    }

    #[test]
    fn pairwise_chain_histogram() {
        let h = pairwise_distance_distribution(&chain(3), None, Execution::Sequential).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(1, 3), (2, 2), (3, 1)]));
        assert_eq!(h.unreachable_count, 6);
        assert_eq!(h.finite_mass() + h.unreachable_count, 4 * 3);
    }

    #[test]
    fn pairwise_edgeless() {
        let g = DirectedGraph::with_nodes(5, []);
        let h = pairwise_distance_distribution(&g, None, Execution::Parallel).unwrap();
        assert!(h.counts.is_empty());
        assert_eq!(h.unreachable_count, 20);
    }

    #[test]
    fn lookahead_distribution_chain_and_metadata() {
        let h = lookahead_distribution(&chain(4), &[0, 1, 2, 3, 4], Execution::Sequential).unwrap();
        assert_eq!(h.counts, BTreeMap::from([(1, 10)]));

        let g = DirectedGraph::with_nodes(1000, (0..999).map(|i| (i, i + 1)));
        let h = lookahead_distribution(&g, &[3, 500], Execution::Parallel).unwrap();
        assert_eq!(h.sampled_sources, 2);
        assert_eq!(h.total_sources, 1000);
        assert!(lookahead_distribution(&g, &[], Execution::Sequential).is_err());
    }

    #[test]
    fn branch_histograms() {
        let h = branch_distribution(&chain(3));
        assert_eq!(h.counts, BTreeMap::from([(0, 1), (1, 3)]));
        let star = DirectedGraph::from_edge_list((1..=16).map(|i| (0, i)));
        let h = branch_distribution(&star);
        assert_eq!(h.counts, BTreeMap::from([(0, 16), (16, 1)]));
        assert_eq!(h.finite_mass(), 17);
    }

    #[test]
    fn layer_cap_marks_capped_sources() {
        let g = chain(10);
        let h = sweep_distributions(&g, &[0], Some(3), Execution::Sequential).unwrap();
        assert_eq!(h.capped_sources, 1);
        assert_eq!(h.distance.finite_mass(), 3);
    }

    #[test]
    fn wide_start_uses_multiword_masks() {
        // 130 children, only child 129 continues to the goal.
        let mut edges: Vec<(u32, u32)> = (1..=130).map(|c| (0, c)).collect();
        edges.push((130, 131));
        edges.push((131, 132));
        let g = DirectedGraph::from_edge_list(edges);
        // Layer 2 = {131}, whose only origin is child 130.
        assert_eq!(lookahead(&g, 0, 132).unwrap(), Hops::Finite(2));
    }

    #[test]
    fn sample_sources_is_seeded_and_clamped() {
        let a = sample_sources(1000, 10, 5);
        assert_eq!(a, sample_sources(1000, 10, 5));
        assert_eq!(a.len(), 10);
        assert_eq!(sample_sources(4, 10, 5), vec![0, 1, 2, 3]);
    }
}
