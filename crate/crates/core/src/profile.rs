//! Complexity profiles of real graphs and proof corpora.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::complexity::{branch_distribution, sample_sources, sweep_distributions, HopHistogram};
use crate::error::{Error, Result};
use crate::graph::{ingest_stream, Adjacency, DirectedGraph, EdgeListSource, NodeId};
use crate::parallel::Execution;

pub const DEFAULT_QUANTILES: [f64; 5] = [50.0, 75.0, 90.0, 99.0, 99.9];

/// Quantiles are compared at this resolution (percent times 1000).
const Q_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercentileMarker {
    /// In percent, e.g. 99.9.
    pub quantile: f64,
    pub value: u64,
}

fn check_quantile(q: f64) -> Result<u128> {
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::domain(format!("quantile {q} is outside [0, 100]")));
    }
    Ok((q * Q_SCALE).round() as u128)
}

/// Nearest-rank percentiles over the finite values of `hist`: the smallest
/// value whose cumulative count reaches the quantile.
pub fn percentile_markers(hist: &HopHistogram, quantiles: &[f64]) -> Result<Vec<PercentileMarker>> {
    let total = hist.finite_mass() as u128;
    if total == 0 {
        return Err(Error::domain("histogram has no finite mass"));
    }
    quantiles
        .iter()
        .map(|&q| {
            let need = check_quantile(q)? * total;
            let mut cum = 0u128;
            for (&v, &c) in &hist.counts {
                cum += c as u128;
                if cum * 100 * Q_SCALE as u128 >= need {
                    return Ok(PercentileMarker { quantile: q, value: v });
                }
            }
            unreachable!("cumulative count reaches the total")
        })
        .collect()
}

/// A histogram as value -> mass, either raw counts or a normalized density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    /// `(value, mass)` in increasing value order.
    pub histogram: Vec<(u64, f64)>,
    /// Mass of pairs with no path, reported but excluded from percentiles.
    pub unreachable: f64,
    pub percentiles: Vec<PercentileMarker>,
}

impl Distribution {
    pub fn from_hist(hist: &HopHistogram) -> Result<Self> {
        Ok(Self {
            histogram: hist.counts.iter().map(|(&v, &c)| (v, c as f64)).collect(),
            unreachable: hist.unreachable_count as f64,
            percentiles: percentile_markers(hist, &DEFAULT_QUANTILES)?,
        })
    }

    fn from_mass(mass: BTreeMap<u64, f64>, unreachable: f64) -> Result<Self> {
        let histogram: Vec<(u64, f64)> = mass.into_iter().filter(|&(_, m)| m > 0.0).collect();
        let percentiles = mass_percentiles(&histogram, &DEFAULT_QUANTILES)?;
        Ok(Self {
            histogram,
            unreachable,
            percentiles,
        })
    }

    pub fn finite_mass(&self) -> f64 {
        self.histogram.iter().map(|&(_, m)| m).sum()
    }

    pub fn mean(&self) -> Option<f64> {
        let total = self.finite_mass();
        (total > 0.0).then(|| self.histogram.iter().map(|&(v, m)| v as f64 * m).sum::<f64>() / total)
    }

    pub fn percentile(&self, q: f64) -> Option<u64> {
        self.percentiles.iter().find(|p| p.quantile == q).map(|p| p.value)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "value,mass")?;
        for (v, m) in &self.histogram {
            writeln!(w, "{v},{m}")?;
        }
        Ok(())
    }

    /// Unit finite mass, with the unreachable share scaled alongside.
    fn normalized(&self) -> (BTreeMap<u64, f64>, f64) {
        let total = self.finite_mass();
        let mass = self.histogram.iter().map(|&(v, m)| (v, m / total)).collect();
        (mass, self.unreachable / total)
    }
}

/// Nearest-rank percentiles over a real-valued density.
fn mass_percentiles(histogram: &[(u64, f64)], quantiles: &[f64]) -> Result<Vec<PercentileMarker>> {
    let total: f64 = histogram.iter().map(|&(_, m)| m).sum();
    if !(total > 0.0) {
        return Err(Error::domain("distribution has no finite mass"));
    }
    quantiles
        .iter()
        .map(|&q| {
            check_quantile(q)?;
            let need = q / 100.0 * total * (1.0 - 1e-12);
            let mut cum = 0.0;
            for &(v, m) in histogram {
                cum += m;
                if cum >= need {
                    return Ok(PercentileMarker { quantile: q, value: v });
                }
            }
            Ok(PercentileMarker {
                quantile: q,
                value: histogram.last().unwrap().0,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfileMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub sampled_sources: u64,
    pub node_count: u64,
    pub edge_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer_cap: Option<u32>,
    pub capped_sources: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merged_from: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityProfile {
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lookahead: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_length: Option<Distribution>,
    pub metadata: ProfileMetadata,
}

impl ComplexityProfile {
    /// Markers of the headline distribution: lookahead for graphs, proof
    /// length for proof corpora.
    pub fn percentiles(&self) -> &[PercentileMarker] {
        self.lookahead
            .as_ref()
            .or(self.proof_length.as_ref())
            .map(|d| d.percentiles.as_slice())
            .unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProfileOptions {
    pub sample: usize,
    pub seed: u64,
    pub layer_cap: Option<u32>,
    pub exec: Execution,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            sample: 30_000,
            seed: 0,
            layer_cap: None,
            exec: Execution::Parallel,
        }
    }
}

/// Ingests `source` and profiles it.
pub fn profile_graph(source: &EdgeListSource, opts: ProfileOptions) -> Result<ComplexityProfile> {
    let ingested = ingest_stream(source)?;
    profile_loaded(&source.name(), &ingested.graph, Some(ingested.directed), opts)
}

/// Branch histogram over every node; lookahead and distance histograms from
/// a uniform sample of sources to every other node.
pub fn profile_loaded(
    name: &str,
    g: &DirectedGraph,
    directed: Option<bool>,
    opts: ProfileOptions,
) -> Result<ComplexityProfile> {
    let n = g.node_count();
    if n < 2 {
        return Err(Error::domain(format!("{name} has fewer than two nodes")));
    }
    if opts.sample == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    if opts.sample > n {
        log::warn!("{name}: sample of {} sources clamped to {n} nodes", opts.sample);
    }
    let sources = sample_sources(n, opts.sample, opts.seed);
    let sweep = sweep_distributions(g, &sources, opts.layer_cap, opts.exec)?;
    let mut notes = Vec::new();
    if directed == Some(false) {
        notes.push("undirected input profiled as ingested, without symmetrizing".to_string());
    }
    Ok(ComplexityProfile {
        dataset: name.to_string(),
        lookahead: Some(Distribution::from_hist(&sweep.lookahead)?),
        distance: Some(Distribution::from_hist(&sweep.distance)?),
        branches: Some(Distribution::from_hist(&branch_distribution(g))?),
        proof_length: None,
        metadata: ProfileMetadata {
            seed: Some(opts.seed),
            sampled_sources: sources.len() as u64,
            node_count: n as u64,
            edge_count: g.edge_count() as u64,
            directed,
            layer_cap: opts.layer_cap,
            capped_sources: sweep.capped_sources,
            merged_from: Vec::new(),
            notes,
        },
    })
}

/// A proof as its own line segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofCorpusRecord {
    pub proof_id: String,
    pub lines: Vec<String>,
}

impl ProofCorpusRecord {
    pub fn length(&self) -> usize {
        self.lines.len()
    }
}

/// Proof-length histogram with percentile markers; no branch histogram.
pub fn profile_proofs(name: &str, corpus: &[ProofCorpusRecord]) -> Result<ComplexityProfile> {
    if corpus.is_empty() {
        return Err(Error::domain("proof corpus is empty"));
    }
    let mut hist = HopHistogram::new(corpus.len() as u64);
    for r in corpus {
        if r.lines.is_empty() {
            return Err(Error::domain(format!("proof {} has no lines", r.proof_id)));
        }
        hist.add(r.length() as u64);
    }
    hist.sampled_sources = corpus.len() as u64;
    Ok(ComplexityProfile {
        dataset: name.to_string(),
        lookahead: None,
        distance: None,
        branches: None,
        proof_length: Some(Distribution::from_hist(&hist)?),
        metadata: ProfileMetadata {
            sampled_sources: corpus.len() as u64,
            notes: vec!["line count used as the proof length".to_string()],
            ..Default::default()
        },
    })
}

/// Averages the unit-normalized distributions of every input, each dataset
/// weighted equally. Independent of input order.
pub fn merge_profiles(name: &str, profiles: &[ComplexityProfile]) -> Result<ComplexityProfile> {
    if profiles.is_empty() {
        return Err(Error::domain("nothing to merge"));
    }
    let mut sorted: Vec<&ComplexityProfile> = profiles.iter().collect();
    sorted.sort_by_cached_key(|p| (p.dataset.clone(), serde_json::to_string(p).unwrap_or_default()));

    let merge = |pick: fn(&ComplexityProfile) -> Option<&Distribution>| -> Result<Option<Distribution>> {
        let parts: Vec<(BTreeMap<u64, f64>, f64)> = sorted.iter().filter_map(|p| pick(p)).map(Distribution::normalized).collect();
        if parts.is_empty() {
            return Ok(None);
        }
        let k = parts.len() as f64;
        let mut mass: BTreeMap<u64, f64> = BTreeMap::new();
        let mut unreachable = 0.0;
        for (m, u) in &parts {
            for (&v, &x) in m {
                *mass.entry(v).or_insert(0.0) += x / k;
            }
            unreachable += u / k;
        }
        Distribution::from_mass(mass, unreachable).map(Some)
    };

    let directed: HashSet<Option<bool>> = sorted.iter().map(|p| p.metadata.directed).collect();
    let mut merged_from: Vec<String> = sorted.iter().map(|p| p.dataset.clone()).collect();
    merged_from.sort();
    Ok(ComplexityProfile {
        dataset: name.to_string(),
        lookahead: merge(|p| p.lookahead.as_ref())?,
        distance: merge(|p| p.distance.as_ref())?,
        branches: merge(|p| p.branches.as_ref())?,
        proof_length: merge(|p| p.proof_length.as_ref())?,
        metadata: ProfileMetadata {
            sampled_sources: sorted.iter().map(|p| p.metadata.sampled_sources).sum(),
            node_count: sorted.iter().map(|p| p.metadata.node_count).sum(),
            edge_count: sorted.iter().map(|p| p.metadata.edge_count).sum(),
            directed: if directed.len() == 1 { *directed.iter().next().unwrap() } else { None },
            capped_sources: sorted.iter().map(|p| p.metadata.capped_sources).sum(),
            merged_from,
            notes: vec!["uniform per-dataset weighting of normalized histograms".to_string()],
            ..Default::default()
        },
    })
}

/// Directed G(n, p): each ordered pair `u != v` is an edge independently.
pub fn erdos_renyi_gnp<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> DirectedGraph {
    let mut edges = Vec::new();
    for u in 0..n as NodeId {
        for v in 0..n as NodeId {
            if u != v && rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    DirectedGraph::with_nodes(n, edges)
}

/// Directed G(n, m): `m` distinct edges without self-loops, uniformly.
pub fn erdos_renyi_gnm<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<DirectedGraph> {
    let max = n.saturating_mul(n.saturating_sub(1));
    if m > max {
        return Err(Error::domain(format!("{m} edges do not fit in {n} nodes")));
    }
    let mut seen: HashSet<(NodeId, NodeId)> = HashSet::with_capacity(m);
    let mut edges = Vec::with_capacity(m);
    while edges.len() < m {
        let u = rng.random_range(0..n as NodeId);
        let v = rng.random_range(0..n as NodeId);
        if u != v && seen.insert((u, v)) {
            edges.push((u, v));
        }
    }
    Ok(DirectedGraph::with_nodes(n, edges))
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Closed-form mean shortest-path length of a random graph with `n` nodes
/// and edge probability `p`.
pub fn er_mean_path_length(n: f64, p: f64) -> f64 {
    (n.ln() - EULER_GAMMA) / (p * n).ln() + 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hist(pairs: &[(u64, u64)]) -> HopHistogram {
        let mut h = HopHistogram::new(0);
        for &(v, c) in pairs {
            h.add_n(v, c);
        }
        h
    }

    #[test]
    fn nearest_rank() {
        let h = hist(&[(1, 99), (1000, 1)]);
        let m = percentile_markers(&h, &[99.0, 99.9, 0.0]).unwrap();
        assert_eq!(m.iter().map(|p| p.value).collect::<Vec<_>>(), vec![1, 1000, 1]);
        let h = hist(&[(16, 2), (32, 2)]);
        let m = percentile_markers(&h, &[50.0, 75.0]).unwrap();
        assert_eq!((m[0].value, m[1].value), (16, 32));
        assert!(percentile_markers(&HopHistogram::default(), &[50.0]).is_err());
        assert!(percentile_markers(&h, &[101.0]).is_err());
    }

    #[test]
    fn proofs() {
        let rec = |id: &str, n: usize| ProofCorpusRecord {
            proof_id: id.into(),
            lines: vec!["x".into(); n],
        };
        let p = profile_proofs("p", &[rec("a", 16), rec("b", 16), rec("c", 32), rec("d", 32)]).unwrap();
        let d = p.proof_length.as_ref().unwrap();
        assert_eq!((d.percentile(50.0), d.percentile(75.0)), (Some(16), Some(32)));
        assert!(p.branches.is_none());
        let one = profile_proofs("one", &[rec("a", 7)]).unwrap();
        assert!(one.percentiles().iter().all(|m| m.value == 7));
        assert!(profile_proofs("none", &[]).is_err());
    }

    #[test]
    fn merge_split_mass() {
        let a = profile_proofs("a", &[ProofCorpusRecord { proof_id: "x".into(), lines: vec!["l".into()] }]).unwrap();
        let b = profile_proofs(
            "b",
            &vec![
                ProofCorpusRecord {
                    proof_id: "y".into(),
                    lines: vec!["l".into(); 3],
                };
                5
            ],
        )
        .unwrap();
        let m = merge_profiles("m", &[a.clone(), b.clone()]).unwrap();
        let d = m.proof_length.as_ref().unwrap();
        assert_eq!(d.histogram, vec![(1, 0.5), (3, 0.5)]);
        assert!([1, 3].contains(&d.percentile(50.0).unwrap()));
        assert!((d.finite_mass() - 1.0).abs() < 1e-12);
        assert_eq!(merge_profiles("m", &[b, a]).unwrap(), m);
        assert!(merge_profiles("m", &[]).is_err());
    }

    #[test]
    fn chain_profile() {
        let g = DirectedGraph::from_edge_list((0..100).map(|i| (i, i + 1)));
        let p = profile_loaded("chain", &g, Some(true), ProfileOptions::default()).unwrap();
        let la = p.lookahead.as_ref().unwrap();
        assert_eq!(la.histogram, vec![(1, 5050.0)]);
        assert!(la.percentiles.iter().all(|m| m.value == 1));
        assert_eq!(p.metadata.sampled_sources, 101);
        let br = p.branches.as_ref().unwrap();
        assert!(br.percentiles.iter().all(|m| m.value == 1));
    }

    #[test]
    fn er_closed_form() {
        assert!((er_mean_path_length(26.0, 0.3) - 1.805).abs() < 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = erdos_renyi_gnm(100, 500, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 500);
        assert!(!g.has_self_loops());
        assert!(erdos_renyi_gnm(3, 7, &mut rng).is_err());
    }
}
