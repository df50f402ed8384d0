//! Graph data model, validation, and the JSONL serialization shared by every
//! other module.
//!
//! Graphs are undirected and node-attributed. Edges are stored once as
//! `(u, v)` with `u < v`; message passing expands both directions at load
//! time. Node features carry single-precision semantics (f32 on disk and in
//! memory, widened to f64 inside the models).

mod jsonl;

pub use jsonl::{
    decode_jsonl, decode_jsonl_bytes, decode_jsonl_str, encode_jsonl, encode_jsonl_to_string,
    read_jsonl, write_jsonl, DecodeError,
};

use std::fmt;
use std::sync::Arc;

/// Per-node tag: confounding base graph or k-th motif instance (k ≥ 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Base,
    Motif(u32),
}

impl Role {
    pub fn index(self) -> u32 {
        match self {
            Role::Base => 0,
            Role::Motif(k) => k,
        }
    }

    pub fn from_index(i: u32) -> Role {
        if i == 0 {
            Role::Base
        } else {
            Role::Motif(i)
        }
    }

    pub fn is_motif(self) -> bool {
        matches!(self, Role::Motif(_))
    }
}

/// num_nodes × d node-feature matrix, single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Features {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Features {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Option<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return None;
        }
        Some(Features {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub id: u64,
    pub num_nodes: usize,
    /// unordered pairs, stored once with u < v
    pub edges: Vec<(u32, u32)>,
    pub node_features: Features,
    pub node_roles: Vec<Role>,
    pub junction_mask: Vec<bool>,
    pub graph_label: usize,
    pub node_labels: Option<Vec<usize>>,
    /// marker node followed by its subsequent content, in path order
    pub marker_span: Option<Vec<usize>>,
}

impl Graph {
    /// Symmetric neighbor lists, ready for message passing.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u as usize].push(v);
            adj[v as usize].push(u);
        }
        adj
    }

    pub fn adjacency_arc(&self) -> Arc<Vec<Vec<u32>>> {
        Arc::new(self.adjacency())
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| u as usize == node || v as usize == node)
            .count()
    }

    pub fn junction_nodes(&self) -> Vec<usize> {
        self.junction_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EdgeEndpointOutOfRange { edge: (u32, u32), num_nodes: usize },
    SelfLoop { node: u32 },
    DuplicateEdge { edge: (u32, u32) },
    EdgeNotCanonical { edge: (u32, u32) },
    FeatureRowCount { expected: usize, actual: usize },
    RoleCount { expected: usize, actual: usize },
    JunctionMaskLength { expected: usize, actual: usize },
    JunctionMaskInconsistent { node: usize },
    NodeLabelsLength { expected: usize, actual: usize },
    MarkerIndexOutOfRange { index: usize, num_nodes: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EdgeEndpointOutOfRange { edge, num_nodes } => write!(
                f,
                "edge ({},{}) endpoint out of range for {} nodes",
                edge.0, edge.1, num_nodes
            ),
            Violation::SelfLoop { node } => write!(f, "self-loop at node {node}"),
            Violation::DuplicateEdge { edge } => {
                write!(f, "duplicate edge ({},{})", edge.0, edge.1)
            }
            Violation::EdgeNotCanonical { edge } => {
                write!(f, "edge ({},{}) not stored as (min,max)", edge.0, edge.1)
            }
            Violation::FeatureRowCount { expected, actual } => {
                write!(f, "feature rows {actual} != num_nodes {expected}")
            }
            Violation::RoleCount { expected, actual } => {
                write!(f, "role count {actual} != num_nodes {expected}")
            }
            Violation::JunctionMaskLength { expected, actual } => {
                write!(f, "junction mask length {actual} != num_nodes {expected}")
            }
            Violation::JunctionMaskInconsistent { node } => {
                write!(f, "junction mask inconsistent at node {node}")
            }
            Violation::NodeLabelsLength { expected, actual } => {
                write!(f, "node label count {actual} != num_nodes {expected}")
            }
            Violation::MarkerIndexOutOfRange { index, num_nodes } => {
                write!(f, "marker index {index} out of range for {num_nodes} nodes")
            }
        }
    }
}

/// Checks every [`Graph`] invariant; an empty report means the graph is valid.
/// Violations are data, not failures.
pub fn validate_graph(g: &Graph) -> Vec<Violation> {
    let mut report = Vec::new();
    let n = g.num_nodes;

    let mut seen = std::collections::HashSet::new();
    for &(u, v) in &g.edges {
        if u as usize >= n || v as usize >= n {
            report.push(Violation::EdgeEndpointOutOfRange {
                edge: (u, v),
                num_nodes: n,
            });
            continue;
        }
        if u == v {
            report.push(Violation::SelfLoop { node: u });
            continue;
        }
        if u > v {
            report.push(Violation::EdgeNotCanonical { edge: (u, v) });
        }
        let key = (u.min(v), u.max(v));
        if !seen.insert(key) {
            report.push(Violation::DuplicateEdge { edge: (u, v) });
        }
    }

    if g.node_features.rows() != n {
        report.push(Violation::FeatureRowCount {
            expected: n,
            actual: g.node_features.rows(),
        });
    }
    if g.node_roles.len() != n {
        report.push(Violation::RoleCount {
            expected: n,
            actual: g.node_roles.len(),
        });
    }
    if g.junction_mask.len() != n {
        report.push(Violation::JunctionMaskLength {
            expected: n,
            actual: g.junction_mask.len(),
        });
    } else if g.node_roles.len() == n {
        // mask may be true only on nodes incident to a role-boundary edge
        let boundary = boundary_nodes(g);
        for (i, &m) in g.junction_mask.iter().enumerate() {
            if m && !boundary[i] {
                report.push(Violation::JunctionMaskInconsistent { node: i });
            }
        }
    }
    if let Some(labels) = &g.node_labels {
        if labels.len() != n {
            report.push(Violation::NodeLabelsLength {
                expected: n,
                actual: labels.len(),
            });
        }
    }
    if let Some(span) = &g.marker_span {
        for &i in span {
            if i >= n {
                report.push(Violation::MarkerIndexOutOfRange {
                    index: i,
                    num_nodes: n,
                });
            }
        }
    }
    report
}

/// Nodes incident to at least one edge whose endpoints carry different roles.
/// Edges with out-of-range endpoints are ignored.
pub fn boundary_nodes(g: &Graph) -> Vec<bool> {
    let mut out = vec![false; g.num_nodes];
    for &(u, v) in &g.edges {
        let (u, v) = (u as usize, v as usize);
        if u >= g.num_nodes || v >= g.num_nodes {
            continue;
        }
        if g.node_roles[u] != g.node_roles[v] {
            out[u] = true;
            out[v] = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    GraphCls,
    NodeCls,
}

/// Conditional probability that a motif is paired with its spuriously
/// correlated base in the training split. `Balanced` draws uniformly
/// (equivalent to 1/3 for three classes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bias {
    Balanced,
    Coef(f64),
}

impl Bias {
    pub fn paired_probability(self) -> f64 {
        match self {
            Bias::Balanced => 1.0 / 3.0,
            Bias::Coef(b) => b,
        }
    }

    pub fn is_valid(self) -> bool {
        match self {
            Bias::Balanced => true,
            Bias::Coef(b) => (1.0 / 3.0..=1.0).contains(&b),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[usize] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl fmt::Display for SplitName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitName::Train => write!(f, "train"),
            SplitName::Val => write!(f, "val"),
            SplitName::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub splits: Splits,
    pub bias: Bias,
    pub task: Task,
    pub feature_dim: usize,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        match self.task {
            Task::GraphCls => self
                .graphs
                .iter()
                .map(|g| g.graph_label + 1)
                .max()
                .unwrap_or(0),
            Task::NodeCls => self
                .graphs
                .iter()
                .filter_map(|g| g.node_labels.as_ref())
                .flatten()
                .map(|&l| l + 1)
                .max()
                .unwrap_or(0),
        }
    }
}

/// Dataset-level invariant check: split indices disjoint and in range, all
/// graphs sharing the dataset feature dimension, all member graphs valid.
pub fn validate_dataset(ds: &Dataset) -> Vec<String> {
    let mut reasons = Vec::new();
    let n = ds.graphs.len();
    let mut seen = vec![false; n];
    for (split, idxs) in [
        ("train", &ds.splits.train),
        ("val", &ds.splits.val),
        ("test", &ds.splits.test),
    ] {
        for &i in idxs {
            if i >= n {
                reasons.push(format!("{split} split index {i} out of range ({n} graphs)"));
            } else if seen[i] {
                reasons.push(format!("graph {i} appears in more than one split"));
            } else {
                seen[i] = true;
            }
        }
    }
    if !ds.bias.is_valid() {
        reasons.push("bias must be in [1/3,1]".to_string());
    }
    for (i, g) in ds.graphs.iter().enumerate() {
        if g.node_features.cols() != ds.feature_dim {
            reasons.push(format!(
                "graph {i}: feature dim {} != dataset dim {}",
                g.node_features.cols(),
                ds.feature_dim
            ));
        }
        for v in validate_graph(g) {
            reasons.push(format!("graph {i}: {v}"));
        }
        if ds.task == Task::NodeCls && g.node_labels.is_none() {
            reasons.push(format!("graph {i}: node task but node labels missing"));
        }
    }
    reasons
}
