//! Directed acyclic graph of code blocks.
//!
//! Every source-to-sink path renders to one candidate program by concatenating
//! the blocks on its edges. Corrections add parallel sub-paths; an algorithm's
//! correction set is read straight off the edges of its path.

mod paths;
mod splice;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use paths::{PathCountTable, DEFAULT_POOL_SIZE};
pub use splice::{Application, ChainPiece, LineSplice, Occurrence, ResolvedSplice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u32);

/// Identifier of the correction that introduced an edge. `ROOT` tags the
/// initial program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrectionId(pub u32);

impl CorrectionId {
    pub const ROOT: CorrectionId = CorrectionId(0);

    pub fn is_root(self) -> bool {
        self == Self::ROOT
    }
}

impl fmt::Display for CorrectionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            write!(f, "root")
        } else {
            write!(f, "c{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("initial program is empty")]
    EmptyProgram,
    #[error("anchor error: {0}")]
    Anchor(String),
    #[error("path is not a source-to-sink path of this graph")]
    InvalidPath,
    #[error("correction {0} has no edges in this graph")]
    UnknownCorrection(CorrectionId),
    #[error("malformed graph snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    /// Source lines, each keeping its own line terminator.
    pub lines: Vec<String>,
    pub correction: CorrectionId,
    /// Twin class: edges carrying the same code copied into several places of
    /// the graph share a class, and are always split together.
    pub class: u32,
}

/// A source-to-sink edge sequence.
///
/// `epoch` is the graph's edge count when the path was last known to be
/// current; block splits made after it are folded back in by
/// [`CodeGraph::refresh`]. Equality and ordering look at the edges only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Path {
    pub edges: Vec<EdgeId>,
    #[serde(default = "current_epoch")]
    pub epoch: u32,
}

fn current_epoch() -> u32 {
    u32::MAX
}

impl PartialEq for Path {
    fn eq(&self, other: &Self) -> bool {
        self.edges == other.edges
    }
}

impl Eq for Path {}

impl std::hash::Hash for Path {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.edges.hash(state);
    }
}

impl PartialOrd for Path {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Path {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.edges.cmp(&other.edges)
    }
}

impl Path {
    /// A path assumed current; stamp it with [`CodeGraph::stamp`] before
    /// storing it across graph mutations.
    pub fn new(edges: Vec<EdgeId>) -> Self {
        Self {
            edges,
            epoch: current_epoch(),
        }
    }

    /// Canonical hash of the edge-id sequence.
    pub fn id(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.edges {
            hasher.update(e.0.to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }
}

/// Splits text into lines, each keeping its terminator. The last line may lack
/// one.
pub fn split_lines(text: &str) -> Vec<String> {
    text.split_inclusive('\n').map(str::to_owned).collect()
}

/// SHA-256 of the rendered bytes, hex encoded.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeGraph {
    edges: Vec<Edge>,
    node_count: u32,
    out: Vec<Vec<EdgeId>>,
    inc: Vec<Vec<EdgeId>>,
    source: NodeId,
    sink: NodeId,
    /// Split chain: when an edge is split, it keeps the head of its block and
    /// `fragment_next` points at the edge holding the tail.
    fragment_next: Vec<Option<EdgeId>>,
    classes: BTreeMap<u32, Vec<EdgeId>>,
    next_class: u32,
}

impl CodeGraph {
    /// Builds the two-node graph whose single edge holds the whole program.
    pub fn new(program: &str) -> Result<Self, GraphError> {
        if program.is_empty() {
            return Err(GraphError::EmptyProgram);
        }
        let mut g = CodeGraph {
            edges: Vec::new(),
            node_count: 0,
            out: Vec::new(),
            inc: Vec::new(),
            source: NodeId(0),
            sink: NodeId(0),
            fragment_next: Vec::new(),
            classes: BTreeMap::new(),
            next_class: 0,
        };
        g.source = g.add_node();
        g.sink = g.add_node();
        let class = g.new_class();
        g.add_edge(g.source, g.sink, split_lines(program), CorrectionId::ROOT, class);
        Ok(g)
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn node_count(&self) -> usize {
        self.node_count as usize
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0 as usize]
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn out_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.out[node.0 as usize]
    }

    pub fn in_edges(&self, node: NodeId) -> &[EdgeId] {
        &self.inc[node.0 as usize]
    }

    /// Corrections (excluding the root) that own at least one edge.
    pub fn corrections(&self) -> BTreeSet<CorrectionId> {
        self.edges
            .iter()
            .map(|e| e.correction)
            .filter(|c| !c.is_root())
            .collect()
    }

    fn add_node(&mut self) -> NodeId {
        let id = NodeId(self.node_count);
        self.node_count += 1;
        self.out.push(Vec::new());
        self.inc.push(Vec::new());
        id
    }

    fn new_class(&mut self) -> u32 {
        let c = self.next_class;
        self.next_class += 1;
        c
    }

    fn add_edge(
        &mut self,
        from: NodeId,
        to: NodeId,
        lines: Vec<String>,
        correction: CorrectionId,
        class: u32,
    ) -> EdgeId {
        let id = EdgeId(self.edges.len() as u32);
        self.edges.push(Edge {
            id,
            from,
            to,
            lines,
            correction,
            class,
        });
        self.fragment_next.push(None);
        // ids are monotone, so pushing keeps adjacency lists sorted
        self.out[from.0 as usize].push(id);
        self.inc[to.0 as usize].push(id);
        self.classes.entry(class).or_default().push(id);
        id
    }

    /// Splits every edge of `edge`'s twin class after `offset` lines. Each
    /// split edge keeps its id for the head; the tails form a new class.
    fn split_class(&mut self, edge: EdgeId, offset: usize) {
        let class = self.edge(edge).class;
        let len = self.edge(edge).lines.len();
        assert!(offset > 0 && offset < len, "split offset out of range");
        let members = self.classes[&class].clone();
        let tail_class = self.new_class();
        let expected = self.edge(edge).lines.clone();
        for m in members {
            debug_assert_eq!(self.edge(m).lines, expected);
            let old_to = self.edge(m).to;
            let mid = self.add_node();
            let tail_lines = self.edges[m.0 as usize].lines.split_off(offset);
            let correction = self.edge(m).correction;
            self.edges[m.0 as usize].to = mid;
            let inc = &mut self.inc[old_to.0 as usize];
            inc.retain(|&x| x != m);
            self.inc[mid.0 as usize].push(m);
            let tail = self.add_edge(mid, old_to, tail_lines, correction, tail_class);
            self.inc[old_to.0 as usize].sort();
            self.fragment_next[tail.0 as usize] = self.fragment_next[m.0 as usize];
            self.fragment_next[m.0 as usize] = Some(tail);
        }
    }

    /// Number of edges ever created; paths stamped with it are current.
    pub fn epoch(&self) -> u32 {
        self.edges.len() as u32
    }

    pub fn stamp(&self, mut path: Path) -> Path {
        path.epoch = self.epoch();
        path
    }

    /// Re-expresses a path recorded before later block splits in terms of the
    /// current edges. Rendering is unchanged.
    pub fn refresh(&self, path: &Path) -> Path {
        let edges = self.expand_edges(&path.edges, path.epoch);
        self.stamp(Path::new(edges))
    }

    /// Inserts the tail fragments created at or after `epoch` behind each
    /// edge. Older fragments already were separate edges, so a path only
    /// contains them if it lists them.
    pub(crate) fn expand_edges(&self, edges: &[EdgeId], epoch: u32) -> Vec<EdgeId> {
        let mut out = Vec::with_capacity(edges.len());
        for &e in edges {
            out.push(e);
            let mut next = self.fragment_next[e.0 as usize];
            while let Some(f) = next {
                if f.0 < epoch {
                    break;
                }
                out.push(f);
                next = self.fragment_next[f.0 as usize];
            }
        }
        out
    }

    /// Checks that `path` is a source-to-sink edge chain of this graph.
    pub fn validate_path(&self, path: &Path) -> Result<(), GraphError> {
        let mut at = self.source;
        for &e in &path.edges {
            if e.0 as usize >= self.edges.len() || self.edge(e).from != at {
                return Err(GraphError::InvalidPath);
            }
            at = self.edge(e).to;
        }
        if at != self.sink || path.edges.is_empty() {
            return Err(GraphError::InvalidPath);
        }
        Ok(())
    }

    pub fn render(&self, path: &Path) -> String {
        let mut out = String::new();
        for &e in &path.edges {
            for line in &self.edge(e).lines {
                out.push_str(line);
            }
        }
        out
    }

    pub fn render_lines(&self, path: &Path) -> Vec<&str> {
        path.edges
            .iter()
            .flat_map(|&e| self.edge(e).lines.iter().map(String::as_str))
            .collect()
    }

    /// C(a): corrections whose edges lie on the path (root excluded).
    pub fn corrections_on(&self, path: &Path) -> BTreeSet<CorrectionId> {
        path.edges
            .iter()
            .map(|&e| self.edge(e).correction)
            .filter(|c| !c.is_root())
            .collect()
    }

    /// Nodes in a topological order, or `None` if a cycle exists.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.node_count as usize;
        let mut indeg: Vec<usize> = self.inc.iter().map(Vec::len).collect();
        let mut stack: Vec<NodeId> = (0..n)
            .filter(|&i| indeg[i] == 0)
            .map(|i| NodeId(i as u32))
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(v);
            for &e in self.out_edges(v) {
                let to = self.edge(e).to.0 as usize;
                indeg[to] -= 1;
                if indeg[to] == 0 {
                    stack.push(NodeId(to as u32));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Structural invariants: acyclic, single source and sink, every node on a
    /// source-to-sink path.
    pub fn check_invariants(&self) -> Result<(), String> {
        let order = self.topological_order().ok_or("graph has a cycle")?;
        for v in 0..self.node_count {
            let v = NodeId(v);
            if v != self.source && self.in_edges(v).is_empty() {
                return Err(format!("node {} has no incoming edge", v.0));
            }
            if v != self.sink && self.out_edges(v).is_empty() {
                return Err(format!("node {} has no outgoing edge", v.0));
            }
        }
        if !self.in_edges(self.source).is_empty() || !self.out_edges(self.sink).is_empty() {
            return Err("source or sink has wrong degree".into());
        }
        // all nodes reachable from the source follows from the degree checks
        // plus acyclicity; the order length confirms every node is visited
        debug_assert_eq!(order.len(), self.node_count as usize);
        Ok(())
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            source: self.source,
            sink: self.sink,
            nodes: (0..self.node_count).map(NodeId).collect(),
            edges: self.edges.clone(),
            fragments: self
                .fragment_next
                .iter()
                .enumerate()
                .filter_map(|(i, n)| n.map(|n| (EdgeId(i as u32), n)))
                .collect(),
        }
    }

    /// Graphviz rendering. Edge labels carry the introducing correction, the
    /// line count and the first line of the block.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph code {\n  rankdir=TB;\n  node [shape=point];\n");
        out.push_str(&format!("  n{} [shape=box, label=\"source\"];\n", self.source.0));
        out.push_str(&format!("  n{} [shape=box, label=\"sink\"];\n", self.sink.0));
        for e in &self.edges {
            let first = e.lines.first().map(|l| l.trim()).unwrap_or("");
            let first: String = first.chars().take(40).collect();
            let label = format!("{} ({} lines) {}", e.correction, e.lines.len(), first)
                .replace('\\', "\\\\")
                .replace('"', "\\\"");
            out.push_str(&format!("  n{} -> n{} [label=\"{label}\"];\n", e.from.0, e.to.0));
        }
        out.push_str("}\n");
        out
    }

    pub fn from_snapshot(snap: &GraphSnapshot) -> Result<Self, GraphError> {
        let node_count = snap.nodes.len() as u32;
        for (i, n) in snap.nodes.iter().enumerate() {
            if n.0 != i as u32 {
                return Err(GraphError::Snapshot("node ids must be 0..n".into()));
            }
        }
        let mut g = CodeGraph {
            edges: Vec::new(),
            node_count: 0,
            out: Vec::new(),
            inc: Vec::new(),
            source: snap.source,
            sink: snap.sink,
            fragment_next: Vec::new(),
            classes: BTreeMap::new(),
            next_class: 0,
        };
        for _ in 0..node_count {
            g.add_node();
        }
        for (i, e) in snap.edges.iter().enumerate() {
            if e.id.0 != i as u32 || e.from.0 >= node_count || e.to.0 >= node_count {
                return Err(GraphError::Snapshot(format!("bad edge {}", e.id.0)));
            }
            g.add_edge(e.from, e.to, e.lines.clone(), e.correction, e.class);
            g.next_class = g.next_class.max(e.class + 1);
        }
        for &(e, n) in &snap.fragments {
            let slot = g
                .fragment_next
                .get_mut(e.0 as usize)
                .ok_or_else(|| GraphError::Snapshot("bad fragment link".into()))?;
            *slot = Some(n);
        }
        g.check_invariants().map_err(GraphError::Snapshot)?;
        Ok(g)
    }

    /// Stable digest of the full structure; equal digests mean an identical
    /// export.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(&self.snapshot()).expect("snapshot serializes");
        text_hash(&json)
    }

    /// Edge id to position of the first line of each edge along `path`.
    pub(crate) fn line_offsets(&self, path: &Path) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(path.edges.len());
        let mut at = 0;
        for &e in &path.edges {
            offsets.push(at);
            at += self.edge(e).lines.len();
        }
        offsets
    }

    pub(crate) fn class_members(&self, class: u32) -> &[EdgeId] {
        self.classes.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nodes lying on some path from `from` to `to` (both included).
    pub(crate) fn between(&self, from: NodeId, to: NodeId) -> BTreeSet<NodeId> {
        let mut forward = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if forward.insert(v) && v != to {
                for &e in self.out_edges(v) {
                    stack.push(self.edge(e).to);
                }
            }
        }
        let mut result = BTreeSet::new();
        let mut stack = vec![to];
        while let Some(v) = stack.pop() {
            if forward.contains(&v) && result.insert(v) && v != from {
                for &e in self.in_edges(v) {
                    stack.push(self.edge(e).from);
                }
            }
        }
        result
    }

    /// Copies the subgraph between `from` and `to`, mapping `from` onto
    /// `new_from` and `to` onto a fresh node, which is returned. Copies keep
    /// the code, correction tag and twin class of their originals.
    pub(crate) fn copy_region(&mut self, from: NodeId, to: NodeId, new_from: NodeId) -> NodeId {
        let nodes = self.between(from, to);
        let mut map: HashMap<NodeId, NodeId> = HashMap::new();
        map.insert(from, new_from);
        for &v in &nodes {
            if v != from {
                let fresh = self.add_node();
                map.insert(v, fresh);
            }
        }
        let region_edges: Vec<EdgeId> = self
            .edges
            .iter()
            .filter(|e| nodes.contains(&e.from) && nodes.contains(&e.to) && e.from != to)
            .map(|e| e.id)
            .collect();
        for e in region_edges {
            let src = self.edge(e).clone();
            self.add_edge(map[&src.from], map[&src.to], src.lines, src.correction, src.class);
        }
        map[&to]
    }
}

/// JSON-serializable export of a graph; reloading it reproduces every
/// rendering byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub source: NodeId,
    pub sink: NodeId,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<Edge>,
    #[serde(default)]
    pub fragments: Vec<(EdgeId, EdgeId)>,
}
