use lookahead_core::complexity::{lookahead, HopHistogram};
use lookahead_core::graph::EdgeListSource;
use lookahead_core::parallel::Execution;
use lookahead_core::profile::{
    erdos_renyi_gnp, merge_profiles, percentile_markers, profile_graph, profile_loaded, profile_proofs,
    ComplexityProfile, ProfileOptions, ProofCorpusRecord, DEFAULT_QUANTILES,
};
use lookahead_core::{DirectedGraph, NodeId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn proof_profile(name: &str, lengths: &[usize]) -> ComplexityProfile {
    let corpus: Vec<_> = lengths
        .iter()
        .enumerate()
        .map(|(i, &n)| ProofCorpusRecord {
            proof_id: format!("{name}{i}"),
            lines: vec!["x".into(); n],
        })
        .collect();
    profile_proofs(name, &corpus).unwrap()
}

proptest! {
    #[test]
    fn markers_are_monotone(counts in proptest::collection::btree_map(0u64..1000, 1u64..1000, 1..30)) {
        let mut h = HopHistogram::new(0);
        for (&v, &c) in &counts {
            h.add_n(v, c);
        }
        let m = percentile_markers(&h, &[0.0, 10.0, 50.0, 75.0, 90.0, 99.0, 99.9, 100.0]).unwrap();
        prop_assert!(m.windows(2).all(|w| w[0].value <= w[1].value));
        prop_assert_eq!(m[0].value, *counts.keys().next().unwrap());
        prop_assert_eq!(m.last().unwrap().value, *counts.keys().last().unwrap());
    }

    #[test]
    fn merge_is_order_free(a in proptest::collection::vec(1usize..40, 1..20), b in proptest::collection::vec(1usize..40, 1..20), c in proptest::collection::vec(1usize..40, 1..20)) {
        let (pa, pb, pc) = (proof_profile("a", &a), proof_profile("b", &b), proof_profile("c", &c));
        let m1 = merge_profiles("m", &[pa.clone(), pb.clone(), pc.clone()]).unwrap();
        let m2 = merge_profiles("m", &[pc, pa, pb]).unwrap();
        prop_assert_eq!(&m1, &m2);
        let d = m1.proof_length.unwrap();
        prop_assert!((d.finite_mass() - 1.0).abs() < 1e-9);
        prop_assert!(d.percentiles.windows(2).all(|w| w[0].value <= w[1].value));
    }
}

#[test]
fn small_dag_profile_matches_per_pair() {
    let edges = [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4), (2, 5), (5, 6), (6, 7), (4, 8), (8, 9), (9, 10), (7, 11), (1, 11)];
    let g = DirectedGraph::with_nodes(12, edges);
    let p = profile_loaded("dag", &g, Some(true), ProfileOptions { sample: 12, ..Default::default() }).unwrap();
    let mut h = HopHistogram::new(12);
    for s in 0..12 as NodeId {
        for t in 0..12 as NodeId {
            if s != t {
                match lookahead(&g, s, t).unwrap().finite() {
                    Some(v) => h.add(v as u64),
                    None => h.unreachable_count += 1,
                }
            }
        }
    }
    let la = p.lookahead.unwrap();
    let expected: Vec<(u64, f64)> = h.counts.iter().map(|(&v, &c)| (v, c as f64)).collect();
    assert_eq!(la.histogram, expected);
    assert_eq!(la.unreachable, h.unreachable_count as f64);
    assert_eq!(la.percentiles, percentile_markers(&h, &DEFAULT_QUANTILES).unwrap());
}

#[test]
fn er_mean_lookahead_below_mean_distance() {
    let g = erdos_renyi_gnp(1000, 0.01, &mut ChaCha8Rng::seed_from_u64(2));
    let opts = ProfileOptions { sample: 200, seed: 1, ..Default::default() };
    let p = profile_loaded("er", &g, Some(true), opts).unwrap();
    let la = p.lookahead.as_ref().unwrap().mean().unwrap();
    let d = p.distance.as_ref().unwrap().mean().unwrap();
    assert!(la <= d, "{la} > {d}");
    assert_eq!(p, profile_loaded("er", &g, Some(true), opts).unwrap());
    let seq = profile_loaded("er", &g, Some(true), ProfileOptions { exec: Execution::Sequential, ..opts }).unwrap();
    assert_eq!(p, seq);
}

#[test]
fn profile_from_file_and_clamped_sample() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.tsv");
    let body: String = (0..100).map(|i| format!("{i}\t{}\n", i + 1)).collect();
    std::fs::write(&path, body).unwrap();
    let p = profile_graph(&EdgeListSource::path(&path), ProfileOptions { sample: 5000, ..Default::default() }).unwrap();
    assert_eq!(p.metadata.sampled_sources, 101);
    assert!(p.percentiles().iter().all(|m| m.value == 1));
    assert!(p.branches.unwrap().percentiles.iter().all(|m| m.value == 1));
}

#[test]
fn layer_cap_is_recorded() {
    let g = DirectedGraph::from_edge_list((0..50).map(|i| (i, i + 1)));
    let opts = ProfileOptions { sample: 10, layer_cap: Some(3), ..Default::default() };
    let p = profile_loaded("capped", &g, Some(true), opts).unwrap();
    assert_eq!(p.metadata.layer_cap, Some(3));
    assert!(p.metadata.capped_sources > 0);
}
