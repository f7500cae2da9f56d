//! Compact directed-graph storage shared by every other module.
//!
//! Graphs are built once and then frozen into a CSR layout: one offsets array
//! and one contiguous target array. Successors keep their first-insertion
//! order and duplicates are dropped during the freeze.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::PathBuf;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Dense node index in `[0, node_count)`.
pub type NodeId = u32;

/// Read access to out-adjacency. Implemented by the frozen [`DirectedGraph`]
/// and by the generator's mutable working graph so the complexity routines
/// run on both.
pub trait Adjacency {
    fn node_count(&self) -> usize;
    fn successors(&self, v: NodeId) -> &[NodeId];

    fn check_node(&self, v: NodeId) -> Result<()> {
        if (v as usize) < self.node_count() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                node: v,
                node_count: self.node_count(),
            })
        }
    }
}

/// Counters collected while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub records: usize,
    pub duplicates: usize,
    pub self_loops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Csr {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
}

impl Csr {
    fn row(&self, v: NodeId) -> &[NodeId] {
        let v = v as usize;
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Immutable directed graph over dense ids.
#[derive(Debug)]
pub struct DirectedGraph {
    out: Csr,
    inc: OnceLock<Csr>,
    stats: BuildStats,
}

impl Clone for DirectedGraph {
    fn clone(&self) -> Self {
        Self {
            out: self.out.clone(),
            inc: OnceLock::new(),
            stats: self.stats,
        }
    }
}

impl PartialEq for DirectedGraph {
    fn eq(&self, other: &Self) -> bool {
        self.out == other.out
    }
}

impl Eq for DirectedGraph {}

impl Adjacency for DirectedGraph {
    fn node_count(&self) -> usize {
        self.out.offsets.len() - 1
    }

    #[inline]
    fn successors(&self, v: NodeId) -> &[NodeId] {
        self.out.row(v)
    }
}

impl DirectedGraph {
    /// Builds a graph from the distinct edges of `edges`. The node count is
    /// one past the largest id seen.
    pub fn from_edge_list<I>(edges: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut b = GraphBuilder::new();
        for (u, v) in edges {
            b.add_edge(u, v);
        }
        b.build()
    }

    /// Like [`from_edge_list`](Self::from_edge_list) but with an explicit
    /// node count, so trailing isolated nodes survive.
    pub fn with_nodes<I>(node_count: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut b = GraphBuilder::new();
        b.reserve_nodes(node_count);
        for (u, v) in edges {
            b.add_edge(u, v);
        }
        b.build()
    }

    pub fn edge_count(&self) -> usize {
        self.out.targets.len()
    }

    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    pub fn out_degree(&self, v: NodeId) -> Result<usize> {
        self.check_node(v)?;
        Ok(self.successors(v).len())
    }

    pub fn in_degree(&self, v: NodeId) -> Result<usize> {
        self.check_node(v)?;
        Ok(self.predecessors(v).len())
    }

    /// Predecessors of `v`. The reverse adjacency is materialized on the
    /// first call and cached.
    pub fn predecessors(&self, v: NodeId) -> &[NodeId] {
        self.inc.get_or_init(|| self.transpose_csr()).row(v)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        (u as usize) < self.node_count() && self.successors(u).contains(&v)
    }

    /// All edges in node order, each node's successors in insertion order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId)
            .flat_map(move |u| self.successors(u).iter().map(move |&v| (u, v)))
    }

    pub fn has_self_loops(&self) -> bool {
        self.edges().any(|(u, v)| u == v)
    }

    fn transpose_csr(&self) -> Csr {
        let n = self.node_count();
        let mut offsets = vec![0usize; n + 1];
        for &t in &self.out.targets {
            offsets[t as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0; self.out.targets.len()];
        for (u, v) in self.edges() {
            targets[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        Csr { offsets, targets }
    }
}

/// Single-writer accumulator for edges; [`GraphBuilder::build`] freezes it.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    edges: Vec<(NodeId, NodeId)>,
    node_count: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reserve_nodes(&mut self, n: usize) {
        self.node_count = self.node_count.max(n);
    }

    pub fn add_edge(&mut self, u: NodeId, v: NodeId) {
        self.node_count = self.node_count.max(u.max(v) as usize + 1);
        self.edges.push((u, v));
    }

    pub fn build(self) -> DirectedGraph {
        let n = self.node_count;
        let records = self.edges.len();
        let mut offsets = vec![0usize; n + 1];
        for &(u, _) in &self.edges {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        // Stable counting sort keeps per-node insertion order.
        let mut fill = offsets.clone();
        let mut targets = vec![0; records];
        for &(u, v) in &self.edges {
            targets[fill[u as usize]] = v;
            fill[u as usize] += 1;
        }
        drop(self.edges);

        // Drop repeated successors in place, keeping first occurrences.
        let mut seen = vec![u32::MAX; n];
        let mut write = 0usize;
        let mut self_loops = 0usize;
        let mut new_offsets = Vec::with_capacity(n + 1);
        new_offsets.push(0);
        for u in 0..n {
            for read in offsets[u]..offsets[u + 1] {
                let v = targets[read];
                if seen[v as usize] != u as u32 {
                    seen[v as usize] = u as u32;
                    if v as usize == u {
                        self_loops += 1;
                    }
                    targets[write] = v;
                    write += 1;
                }
            }
            new_offsets.push(write);
        }
        targets.truncate(write);
        targets.shrink_to_fit();

        DirectedGraph {
            out: Csr {
                offsets: new_offsets,
                targets,
            },
            inc: OnceLock::new(),
            stats: BuildStats {
                records,
                duplicates: records - write,
                self_loops,
            },
        }
    }
}

/// Where an edge list comes from.
#[derive(Debug, Clone)]
pub enum EdgeInput {
    Path(PathBuf),
    Buffer(Vec<u8>),
}

/// How the two fields of a record are turned into node ids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum IdMode {
    #[default]
    Integer,
    /// Arbitrary string labels, interned to dense ids in first-seen order.
    Interned,
}

/// A delimiter-separated edge file description.
#[derive(Debug, Clone)]
pub struct EdgeListSource {
    pub input: EdgeInput,
    pub delimiter: char,
    pub ids: IdMode,
    /// Recorded in profile metadata; edges are always stored as given.
    pub directed: bool,
}

impl EdgeListSource {
    pub fn path(path: impl Into<PathBuf>) -> Self {
        Self {
            input: EdgeInput::Path(path.into()),
            delimiter: '\t',
            ids: IdMode::Integer,
            directed: true,
        }
    }

    pub fn buffer(bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            input: EdgeInput::Buffer(bytes.into()),
            delimiter: '\t',
            ids: IdMode::Integer,
            directed: true,
        }
    }

    pub fn with_delimiter(mut self, delimiter: char) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn with_ids(mut self, ids: IdMode) -> Self {
        self.ids = ids;
        self
    }

    pub fn with_directed(mut self, directed: bool) -> Self {
        self.directed = directed;
        self
    }

    pub fn name(&self) -> String {
        match &self.input {
            EdgeInput::Path(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
            EdgeInput::Buffer(_) => "buffer".to_string(),
        }
    }
}

/// Result of streaming ingestion.
#[derive(Debug)]
pub struct Ingested {
    pub graph: DirectedGraph,
    /// Label of each dense id when the source used [`IdMode::Interned`].
    pub labels: Option<Vec<String>>,
    pub directed: bool,
}

/// Reads an edge list line by line into a graph. Only the growing edge array
/// (and the intern table, for string ids) is held in memory.
pub fn ingest_stream(source: &EdgeListSource) -> Result<Ingested> {
    let reader: Box<dyn Read> = match &source.input {
        EdgeInput::Path(p) => Box::new(File::open(p)?),
        EdgeInput::Buffer(b) => Box::new(std::io::Cursor::new(b.clone())),
    };
    let mut reader = BufReader::with_capacity(1 << 16, reader);
    let mut builder = GraphBuilder::new();
    let mut interner: HashMap<String, NodeId> = HashMap::new();
    let mut labels: Vec<String> = Vec::new();
    let mut line = String::new();
    let mut lineno = 0usize;

    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let record = line.trim_end_matches(['\n', '\r']);
        if record.trim().is_empty() || record.starts_with('#') {
            continue;
        }
        let mut fields = record.split(source.delimiter);
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a.trim(), b.trim()),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!(
                        "expected two fields separated by {:?}",
                        source.delimiter
                    ),
                })
            }
        };
        let (u, v) = match source.ids {
            IdMode::Integer => (parse_id(a, lineno)?, parse_id(b, lineno)?),
            IdMode::Interned => {
                let mut intern = |s: &str| -> NodeId {
                    if let Some(&id) = interner.get(s) {
                        return id;
                    }
                    let id = labels.len() as NodeId;
                    labels.push(s.to_string());
                    interner.insert(s.to_string(), id);
                    id
                };
                (intern(a), intern(b))
            }
        };
        builder.add_edge(u, v);
    }

    if source.ids == IdMode::Interned {
        builder.reserve_nodes(labels.len());
    }
    Ok(Ingested {
        graph: builder.build(),
        labels: (source.ids == IdMode::Interned).then_some(labels),
        directed: source.directed,
    })
}

fn parse_id(field: &str, line: usize) -> Result<NodeId> {
    field.parse::<NodeId>().map_err(|_| Error::Parse {
        line,
        message: format!("{field:?} is not a non-negative integer node id"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn empty_edge_list() {
        let g = DirectedGraph::from_edge_list(Vec::new());
        assert_eq!(g.node_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let g = DirectedGraph::from_edge_list([(0, 1), (1, 2), (0, 1)]);
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.stats().duplicates, 1);
    }

    #[test]
    fn successors_keep_insertion_order() {
        let g = DirectedGraph::from_edge_list([(0, 3), (0, 1), (0, 2), (0, 1)]);
        assert_eq!(g.successors(0), &[3, 1, 2]);
    }

    #[test]
    fn out_degree_checks_range() {
        let g = DirectedGraph::from_edge_list([(0, 1), (1, 2)]);
        assert_eq!(g.out_degree(0).unwrap(), 1);
        assert!(matches!(g.out_degree(3), Err(Error::InvalidNode { .. })));
    }

    #[test]
    fn star_out_degree() {
        let g = DirectedGraph::from_edge_list((1..=16).map(|i| (0, i)));
        assert_eq!(g.out_degree(0).unwrap(), 16);
        assert_eq!(g.in_degree(5).unwrap(), 1);
    }

    #[test]
    fn predecessors_transpose() {
        let g = DirectedGraph::from_edge_list([(0, 2), (1, 2), (2, 0)]);
        let mut p = g.predecessors(2).to_vec();
        p.sort();
        assert_eq!(p, vec![0, 1]);
        assert_eq!(g.predecessors(0), &[2]);
    }

    #[test]
    fn random_edges_match_hash_set_recount() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let edges: Vec<(u32, u32)> = (0..1_000_000)
            .map(|_| (rng.random_range(0..100_000), rng.random_range(0..100_000)))
            .collect();
        let distinct: HashSet<_> = edges.iter().copied().collect();
        let g = DirectedGraph::from_edge_list(edges.iter().copied());
        let degree_sum: usize = (0..g.node_count() as u32)
            .map(|v| g.out_degree(v).unwrap())
            .sum();
        assert_eq!(degree_sum, distinct.len());
        assert_eq!(g.edge_count(), distinct.len());
        let back: HashSet<_> = g.edges().collect();
        assert_eq!(back, distinct);
    }

    #[test]
    fn ingest_tab_separated_chain() {
        let src = EdgeListSource::buffer("0\t1\n1\t2\n");
        let g = ingest_stream(&src).unwrap().graph;
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn ingest_reports_line_of_malformed_field() {
        let src = EdgeListSource::buffer("a\tb\n");
        match ingest_stream(&src) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        let src = EdgeListSource::buffer("# header\n\n0\t1\n1\t2\t3\n");
        match ingest_stream(&src) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_missing_file_is_io_error() {
        let src = EdgeListSource::path("/definitely/not/here.tsv");
        assert!(matches!(ingest_stream(&src), Err(Error::Io(_))));
    }

    #[test]
    fn ingest_interned_labels() {
        let src = EdgeListSource::buffer("cat,mammal\nmammal,animal\ncat,animal\n")
            .with_delimiter(',')
            .with_ids(IdMode::Interned);
        let ing = ingest_stream(&src).unwrap();
        assert_eq!(ing.labels.unwrap(), vec!["cat", "mammal", "animal"]);
        assert_eq!(ing.graph.edge_count(), 3);
        assert_eq!(ing.graph.successors(0), &[1, 2]);
    }

    #[test]
    fn ingest_matches_in_memory_build() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let edges: Vec<(u32, u32)> = (0..10_000)
            .map(|_| (rng.random_range(0..2_000), rng.random_range(0..2_000)))
            .collect();
        let mut text = String::from("# prefix\n");
        for (u, v) in &edges {
            text.push_str(&format!("{u}\t{v}\n"));
        }
        let streamed = ingest_stream(&EdgeListSource::buffer(text)).unwrap().graph;
        let direct = DirectedGraph::from_edge_list(edges);
        assert_eq!(streamed, direct);
    }

    #[test]
    fn self_loops_accepted_at_ingestion() {
        let g = DirectedGraph::from_edge_list([(0, 0), (0, 1)]);
        assert!(g.has_self_loops());
        assert_eq!(g.stats().self_loops, 1);
    }
}
