//! Lookahead and branching complexity for graph reasoning tasks: graph
//! storage, complexity measures, controlled-lookahead generation,
//! natural-language translation, model evaluation, and corpus profiling.

pub mod complexity;
pub mod error;
pub mod eval;
pub mod generator;
pub mod graph;
pub mod naturalizer;
pub mod parallel;
pub mod profile;

pub use error::{Error, Result};
pub use graph::{Adjacency, DirectedGraph, NodeId};
