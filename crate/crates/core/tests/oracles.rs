use std::collections::{BTreeMap, BTreeSet, VecDeque};

use lookahead_core::complexity::{
    distance, lookahead, lookaheads_from_source, pairwise_distance_distribution, sample_sources,
    sweep_distributions, Hops,
};
use lookahead_core::generator::count_simple_paths_capped;
use lookahead_core::parallel::Execution;
use lookahead_core::{DirectedGraph, NodeId};
use proptest::prelude::*;

type Adj = Vec<Vec<NodeId>>;

fn adjacency(n: usize, edges: &[(NodeId, NodeId)]) -> Adj {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u as usize].push(v);
    }
    adj
}

fn reachable(adj: &Adj, s: NodeId, t: NodeId) -> bool {
    let mut seen = BTreeSet::from([s]);
    let mut stack = vec![s];
    while let Some(v) = stack.pop() {
        if v == t {
            return true;
        }
        for &c in &adj[v as usize] {
            if seen.insert(c) {
                stack.push(c);
            }
        }
    }
    false
}

/// Layered search with explicit origin sets, written directly from the
/// definition.
fn oracle_lookahead(adj: &Adj, s: NodeId, t: NodeId) -> Option<u32> {
    if s == t {
        return Some(0);
    }
    if !reachable(adj, s, t) {
        return None;
    }
    let mut visited = BTreeSet::from([s]);
    let mut origins: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    let mut layer: BTreeSet<NodeId> = BTreeSet::new();
    for &c in &adj[s as usize] {
        if c != s {
            layer.insert(c);
            origins.entry(c).or_default().insert(c);
        }
    }
    visited.extend(layer.iter().copied());
    let mut l = 1;
    loop {
        if layer.is_empty() {
            return None;
        }
        if layer.contains(&t) {
            return Some(l);
        }
        let common = layer
            .iter()
            .map(|v| origins[v].clone())
            .reduce(|a, b| a.intersection(&b).copied().collect())
            .unwrap();
        if !common.is_empty() {
            return Some(l);
        }
        let mut next = BTreeSet::new();
        for v in &layer {
            for &w in &adj[*v as usize] {
                if !visited.contains(&w) {
                    next.insert(w);
                    let o = origins[v].clone();
                    origins.entry(w).or_default().extend(o);
                }
            }
        }
        visited.extend(next.iter().copied());
        layer = next;
        l += 1;
    }
}

fn oracle_distance(adj: &Adj, s: NodeId, t: NodeId) -> Option<u32> {
    let mut dist = BTreeMap::from([(s, 0u32)]);
    let mut q = VecDeque::from([s]);
    while let Some(v) = q.pop_front() {
        if v == t {
            return Some(dist[&v]);
        }
        for &c in &adj[v as usize] {
            if !dist.contains_key(&c) {
                dist.insert(c, dist[&v] + 1);
                q.push_back(c);
            }
        }
    }
    None
}

fn count_paths_dfs(adj: &Adj, v: NodeId, t: NodeId, on_path: &mut Vec<bool>) -> u64 {
    if v == t {
        return 1;
    }
    on_path[v as usize] = true;
    let mut total = 0;
    for &c in &adj[v as usize] {
        if !on_path[c as usize] {
            total += count_paths_dfs(adj, c, t, on_path);
        }
    }
    on_path[v as usize] = false;
    total
}

fn to_hops(x: Option<u32>) -> Hops {
    x.map(Hops::Finite).unwrap_or(Hops::Unreachable)
}

fn dag() -> impl Strategy<Value = (usize, Vec<(NodeId, NodeId)>)> {
    (2usize..=12).prop_flat_map(|n| {
        let pairs: Vec<(NodeId, NodeId)> = (0..n as NodeId)
            .flat_map(|u| (u + 1..n as NodeId).map(move |v| (u, v)))
            .collect();
        let k = pairs.len();
        (Just(n), proptest::sample::subsequence(pairs, 0..=k))
    })
}

fn digraph() -> impl Strategy<Value = (usize, Vec<(NodeId, NodeId)>)> {
    (1usize..=12).prop_flat_map(|n| {
        (
            Just(n),
            proptest::collection::vec((0..n as NodeId, 0..n as NodeId), 0..=n * 3),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lookahead_matches_oracle_on_dags((n, edges) in dag()) {
        let g = DirectedGraph::with_nodes(n, edges.iter().copied());
        let adj = adjacency(n, &edges);
        for s in 0..n as NodeId {
            for t in 0..n as NodeId {
                prop_assert_eq!(lookahead(&g, s, t).unwrap(), to_hops(oracle_lookahead(&adj, s, t)), "s={} t={}", s, t);
            }
        }
    }

    #[test]
    fn lookahead_matches_oracle_with_cycles((n, edges) in digraph()) {
        let g = DirectedGraph::with_nodes(n, edges.iter().copied());
        let adj = adjacency(n, &edges);
        for s in 0..n as NodeId {
            for t in 0..n as NodeId {
                prop_assert_eq!(lookahead(&g, s, t).unwrap(), to_hops(oracle_lookahead(&adj, s, t)));
            }
        }
    }

    #[test]
    fn lookahead_bounded_by_distance((n, edges) in digraph()) {
        let g = DirectedGraph::with_nodes(n, edges.iter().copied());
        let adj = adjacency(n, &edges);
        for s in 0..n as NodeId {
            for t in 0..n as NodeId {
                let la = lookahead(&g, s, t).unwrap();
                let d = distance(&g, s, t).unwrap();
                prop_assert_eq!(d, to_hops(oracle_distance(&adj, s, t)));
                prop_assert_eq!(la.is_reachable(), d.is_reachable());
                prop_assert!(la <= d);
            }
        }
    }

    #[test]
    fn from_source_matches_per_pair((n, edges) in digraph()) {
        let g = DirectedGraph::with_nodes(n, edges.iter().copied());
        for s in 0..n as NodeId {
            let all = lookaheads_from_source(&g, s).unwrap();
            for t in 0..n as NodeId {
                prop_assert_eq!(all[t as usize], lookahead(&g, s, t).unwrap());
            }
        }
    }

    #[test]
    fn histograms_independent_of_execution((n, edges) in digraph()) {
        let g = DirectedGraph::with_nodes(n, edges.iter().copied());
        let sources: Vec<NodeId> = (0..n as NodeId).collect();
        let a = sweep_distributions(&g, &sources, None, Execution::Sequential).unwrap();
        let b = sweep_distributions(&g, &sources, None, Execution::Parallel).unwrap();
        prop_assert_eq!(&a, &b);
        let d = pairwise_distance_distribution(&g, None, Execution::Parallel).unwrap();
        prop_assert_eq!(&a.distance.counts, &d.counts);
        prop_assert_eq!(a.distance.unreachable_count, d.unreachable_count);
        prop_assert!(a.lookahead.mean().unwrap_or(0.0) <= a.distance.mean().unwrap_or(0.0) + 1e-12);
    }

    #[test]
    fn simple_path_count_matches_enumeration((n, edges) in dag(), cap in 2u64..50) {
        let g = DirectedGraph::with_nodes(n, edges.iter().copied());
        let adj = adjacency(n, &edges);
        let t = n as NodeId - 1;
        let exact = count_paths_dfs(&adj, 0, t, &mut vec![false; n]);
        prop_assert_eq!(count_simple_paths_capped(&g, 0, t, cap).unwrap(), exact.min(cap));
    }

    #[test]
    fn source_sample_is_sorted_and_distinct(n in 1usize..500, k in 0usize..600, seed: u64) {
        let s = sample_sources(n, k, seed);
        prop_assert_eq!(s.len(), k.min(n));
        prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(s, sample_sources(n, k, seed));
    }
}

#[test]
fn twenty_node_dag_path_count() {
    let mut edges = Vec::new();
    let mut x = 12345u64;
    for u in 0..20u32 {
        for v in u + 1..20 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if (x >> 33) % 4 == 0 {
                edges.push((u, v));
            }
        }
    }
    let g = DirectedGraph::with_nodes(20, edges.iter().copied());
    let adj = adjacency(20, &edges);
    let exact = count_paths_dfs(&adj, 0, 19, &mut vec![false; 20]);
    assert_eq!(count_simple_paths_capped(&g, 0, 19, u64::MAX).unwrap(), exact);
    assert_eq!(count_simple_paths_capped(&g, 0, 19, 3).unwrap(), exact.min(3));
}
