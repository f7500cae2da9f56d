use std::collections::HashSet;

use lookahead_core::complexity::{distance, lookahead, Hops};
use lookahead_core::generator::{
    count_simple_paths_capped, could_be_isomorphic, generate_chain, generate_dataset, generate_example,
    shuffle_node_ids, topological_order, CellKey, DatasetGrid, GenerationSpec,
};
use lookahead_core::parallel::Execution;
use lookahead_core::{Adjacency, DirectedGraph, NodeId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_example(spec: &GenerationSpec, seed: u64) -> Result<(), TestCaseError> {
    let ex = generate_example(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let g = &ex.graph;
    let target = spec.target_lookahead();
    prop_assert!(!g.has_self_loops());
    prop_assert!(topological_order(g).is_ok());
    prop_assert_eq!(g.out_degree(ex.start).unwrap(), spec.branches as usize);
    prop_assert_eq!(count_simple_paths_capped(g, ex.start, ex.goal, 2).unwrap(), 1);
    prop_assert_eq!(distance(g, ex.start, ex.goal).unwrap(), Hops::Finite(spec.lookahead));
    prop_assert_eq!(lookahead(g, ex.start, ex.goal).unwrap(), Hops::Finite(target));
    prop_assert!(g.edge_count() <= spec.max_edges);
    let leading: Vec<NodeId> = g
        .successors(ex.start)
        .iter()
        .copied()
        .filter(|&c| distance(g, c, ex.goal).unwrap().is_reachable())
        .collect();
    prop_assert_eq!(leading, vec![ex.gold_next]);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn generated_examples_meet_contract(l in 1u32..=12, b in 1u32..=6, extra in 0usize..40, seed: u64) {
        let spec = GenerationSpec::new(l, b);
        let spec = spec.clone().with_max_edges(spec.max_edges + extra);
        check_example(&spec, seed)?;
    }

    #[test]
    fn tight_edge_budget(l in 1u32..=10, b in 1u32..=5, seed: u64) {
        let spec = GenerationSpec::new(l, b).with_max_edges((l * b) as usize);
        check_example(&spec, seed)?;
    }

    #[test]
    fn shuffle_preserves_structure(n in 1usize..30, raw in proptest::collection::vec((0u32..30, 0u32..30), 0..80), seed: u64) {
        let edges: Vec<(NodeId, NodeId)> = raw.into_iter().map(|(u, v)| (u % n as u32, v % n as u32)).collect();
        let g = DirectedGraph::with_nodes(n, edges);
        let (h, perm) = shuffle_node_ids(&g, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut seen = HashSet::new();
        prop_assert!(perm.iter().all(|&p| (p as usize) < n && seen.insert(p)));
        let mut inv = vec![0; n];
        for (old, &new) in perm.iter().enumerate() {
            inv[new as usize] = old as NodeId;
        }
        let back: HashSet<_> = h.edges().map(|(u, v)| (inv[u as usize], inv[v as usize])).collect();
        prop_assert_eq!(back, g.edges().collect::<HashSet<_>>());
        prop_assert!(could_be_isomorphic(&g, &h));
    }

    #[test]
    fn chain_lookahead_is_one(depth in 1u32..300, extra in 0u32..20, seed: u64) {
        let c = generate_chain(depth, extra, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(lookahead(&c.graph, c.start, c.goal).unwrap(), Hops::Finite(1));
        prop_assert_eq!(distance(&c.graph, c.start, c.goal).unwrap(), Hops::Finite(depth));
    }
}

#[test]
fn fifty_examples_at_l8_b4() {
    let spec = GenerationSpec::new(8, 4).with_max_edges(200);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let ex = generate_example(&spec, &mut rng).unwrap();
        assert_eq!(lookahead(&ex.graph, ex.start, ex.goal).unwrap(), Hops::Finite(8));
    }
}

#[test]
fn dataset_is_deterministic_and_serializes_identically() {
    let grid = DatasetGrid {
        cells: vec![(2, 2), (4, 4), (3, 1)],
        chain_depths: vec![2, 16],
        ..Default::default()
    };
    let a = generate_dataset(&grid, 10, 5, Execution::Parallel).unwrap();
    let b = generate_dataset(&grid, 10, 5, Execution::Parallel).unwrap();
    let dump = |d: &lookahead_core::generator::Dataset| -> String {
        d.examples()
            .map(|e| serde_json::to_string(&e.to_record()).unwrap() + "\n")
            .collect()
    };
    assert_eq!(dump(&a), dump(&b));
    assert_eq!(a.len(), 50);
    for (key, exs) in &a.cells {
        if let CellKey::Grid { .. } = key {
            for i in 0..exs.len() {
                for j in 0..i {
                    assert!(!could_be_isomorphic(&exs[i].graph, &exs[j].graph), "{key:?}");
                }
            }
        }
        assert!(exs.iter().enumerate().all(|(i, e)| e.id.ends_with(&format!("_{i:03}"))));
    }
    let other = generate_dataset(&grid, 10, 6, Execution::Parallel).unwrap();
    assert_ne!(dump(&a), dump(&other));
}

#[test]
fn single_edge_budget_cell_cannot_fill() {
    // With one edge allowed there is exactly one (L=1, B=1) shape, so a
    // second non-isomorphic example cannot exist.
    let grid = DatasetGrid {
        cells: vec![(1, 1)],
        max_edges: Some(1),
        ..Default::default()
    };
    assert!(generate_dataset(&grid, 1, 0, Execution::Sequential).is_ok());
    let err = generate_dataset(&grid, 2, 0, Execution::Sequential).unwrap_err();
    assert!(matches!(
        err,
        lookahead_core::Error::GenerationFailed { lookahead: 1, branches: 1, .. }
    ));
}
