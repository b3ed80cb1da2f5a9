//! Sub-path insertion.
//!
//! A correction arrives as line-level splices against a reference path. The
//! splices are turned into one alternative chain running from the first
//! splice's start node to the last splice's end node, so the correction
//! toggles as a unit. Code between two splices is copied into the chain
//! (keeping twin classes), which preserves every alternative that already
//! lived there. The chain is inserted at every occurrence of the anchored
//! region, including copies made by earlier multi-edit corrections.

use serde::{Deserialize, Serialize};

use super::{CodeGraph, CorrectionId, EdgeId, GraphError, NodeId, Path};

/// Replace reference lines `[start, end)` (0-based) with `lines`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineSplice {
    pub start: usize,
    pub end: usize,
    pub lines: Vec<String>,
}

/// A splice mapped onto graph nodes along the reference path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedSplice {
    pub start: NodeId,
    pub end: NodeId,
    /// Reference edges the splice replaces.
    pub span: Vec<EdgeId>,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainPiece {
    Edge(EdgeId),
    /// Copy of the code between splice `after` and splice `after + 1`,
    /// entered at `entry`.
    Region { after: usize, entry: NodeId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Occurrence {
    /// Edges replaced by each splice, in order.
    pub spans: Vec<Vec<EdgeId>>,
    pub chain: Vec<ChainPiece>,
}

/// Record of one correction inserted into the graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Application {
    pub correction: CorrectionId,
    pub occurrences: Vec<Occurrence>,
    /// Graph epoch right after insertion; later splits are folded in when the
    /// recorded edges are used.
    pub epoch: u32,
}

fn find_run(haystack: &[EdgeId], needle: &[EdgeId], from: usize) -> Option<usize> {
    let first = *needle.first()?;
    let at = from + haystack[from..].iter().position(|&e| e == first)?;
    (haystack.get(at..at + needle.len()) == Some(needle)).then_some(at)
}

impl CodeGraph {
    /// Positions (in lines) of the nodes along `path`: node k is the start of
    /// edge k, the last node is the sink.
    fn node_positions(&self, path: &Path) -> Vec<(NodeId, usize)> {
        let offsets = self.line_offsets(path);
        let mut nodes: Vec<(NodeId, usize)> = path
            .edges
            .iter()
            .zip(&offsets)
            .map(|(&e, &o)| (self.edge(e).from, o))
            .collect();
        let total = offsets
            .last()
            .map(|&o| o + self.edge(*path.edges.last().unwrap()).lines.len())
            .unwrap_or(0);
        nodes.push((self.sink(), total));
        nodes
    }

    /// Makes sure a node sits at line boundary `pos` on the reference,
    /// splitting the enclosing block (and its twins) when needed.
    fn ensure_boundary(&mut self, reference: &mut Path, pos: usize) {
        let offsets = self.line_offsets(reference);
        for (i, &e) in reference.edges.iter().enumerate() {
            let len = self.edge(e).lines.len();
            if offsets[i] < pos && pos < offsets[i] + len {
                let epoch = self.epoch();
                self.split_class(e, pos - offsets[i]);
                reference.epoch = epoch;
                *reference = self.refresh(reference);
                return;
            }
        }
    }

    fn check_splices(&self, reference: &Path, splices: &[LineSplice]) -> Result<(), GraphError> {
        self.validate_path(reference)?;
        let total = self.render_lines(reference).len();
        if splices.is_empty() {
            return Err(GraphError::Anchor("no splices".into()));
        }
        let mut prev_end = 0;
        for (i, s) in splices.iter().enumerate() {
            if s.start >= s.end {
                return Err(GraphError::Anchor(format!("empty range at splice {i}")));
            }
            if s.end > total {
                return Err(GraphError::Anchor(format!(
                    "range {}..{} beyond reference length {total}",
                    s.start + 1,
                    s.end + 1
                )));
            }
            if i > 0 && s.start < prev_end {
                return Err(GraphError::Anchor("overlapping or unordered splices".into()));
            }
            prev_end = s.end;
        }
        Ok(())
    }

    /// Maps line splices onto nodes of the reference path, splitting blocks
    /// where an anchor falls inside one. Rendering of every path is unchanged.
    /// Returns the refreshed reference along with the resolved splices.
    pub fn resolve_splices(
        &mut self,
        reference: &Path,
        splices: &[LineSplice],
    ) -> Result<(Path, Vec<ResolvedSplice>), GraphError> {
        let mut reference = self.refresh(reference);
        self.check_splices(&reference, splices)?;
        for s in splices {
            self.ensure_boundary(&mut reference, s.start);
            self.ensure_boundary(&mut reference, s.end);
        }
        let nodes = self.node_positions(&reference);
        let latest = |pos: usize| nodes.iter().rposition(|&(_, p)| p == pos).unwrap();
        let earliest = |pos: usize| nodes.iter().position(|&(_, p)| p == pos).unwrap();
        let resolved = splices
            .iter()
            .map(|s| {
                let a = latest(s.start);
                let b = earliest(s.end);
                ResolvedSplice {
                    start: nodes[a].0,
                    end: nodes[b].0,
                    span: reference.edges[a..b].to_vec(),
                    lines: s.lines.clone(),
                }
            })
            .collect();
        Ok((reference, resolved))
    }

    /// Edge sequences twin to `region` (same class at every step), each
    /// starting from a twin of the region's first edge.
    fn occurrences_of(&self, region: &[EdgeId]) -> Vec<Vec<EdgeId>> {
        let first_class = self.edge(region[0]).class;
        let mut found = Vec::new();
        'start: for &f in self.class_members(first_class) {
            let mut matched = vec![f];
            let mut at = self.edge(f).to;
            for &r in &region[1..] {
                let class = self.edge(r).class;
                match self.out_edges(at).iter().find(|&&g| self.edge(g).class == class) {
                    Some(&g) => {
                        matched.push(g);
                        at = self.edge(g).to;
                    }
                    None => continue 'start,
                }
            }
            found.push(matched);
        }
        found
    }

    /// Inserts the alternative sub-paths of a correction. The splices must be
    /// sorted, non-overlapping and non-empty ranges of the reference
    /// rendering.
    pub fn insert_correction(
        &mut self,
        correction: CorrectionId,
        reference: &Path,
        splices: &[LineSplice],
    ) -> Result<Application, GraphError> {
        let (reference, resolved) = self.resolve_splices(reference, splices)?;
        let index_of = |n: NodeId| -> usize {
            if n == self.sink() {
                reference.edges.len()
            } else {
                reference
                    .edges
                    .iter()
                    .position(|&e| self.edge(e).from == n)
                    .unwrap()
            }
        };
        // splice i covers reference edges [bounds[i].0, bounds[i].1)
        let bounds: Vec<(usize, usize)> = resolved
            .iter()
            .map(|r| (index_of(r.start), index_of(r.end)))
            .collect();
        let base = bounds[0].0;
        let region = &reference.edges[base..bounds.last().unwrap().1];
        let occurrences = self.occurrences_of(region);
        debug_assert!(occurrences.iter().any(|o| o.as_slice() == region));

        let classes: Vec<u32> = resolved.iter().map(|_| self.new_class()).collect();
        let k = resolved.len();
        let mut records = Vec::with_capacity(occurrences.len());
        for occ in occurrences {
            let spans: Vec<Vec<EdgeId>> = bounds
                .iter()
                .map(|&(a, b)| occ[a - base..b - base].to_vec())
                .collect();
            let end_node = self.edge(*occ.last().unwrap()).to;
            let mut at = self.edge(occ[0]).from;
            let mut chain = Vec::new();
            for i in 0..k {
                let target = if i + 1 == k { end_node } else { self.add_node() };
                let e = self.add_edge(at, target, resolved[i].lines.clone(), correction, classes[i]);
                chain.push(ChainPiece::Edge(e));
                at = target;
                if i + 1 < k {
                    let (inner_from, inner_to) = (bounds[i].1 - base, bounds[i + 1].0 - base);
                    if inner_from < inner_to {
                        let u = self.edge(occ[inner_from]).from;
                        let v = self.edge(occ[inner_to - 1]).to;
                        chain.push(ChainPiece::Region { after: i, entry: at });
                        at = self.copy_region(u, v, at);
                    }
                }
            }
            records.push(Occurrence { spans, chain });
        }
        debug_assert!(self.check_invariants().is_ok(), "{:?}", self.check_invariants());
        Ok(Application {
            correction,
            occurrences: records,
            epoch: self.epoch(),
        })
    }

    /// Follows `edges` (a walk in the original region) through a copy that
    /// starts at `entry`, matching twin classes step by step.
    fn walk_twins(&self, entry: NodeId, edges: &[EdgeId]) -> Option<Vec<EdgeId>> {
        let mut at = entry;
        let mut out = Vec::with_capacity(edges.len());
        for &e in edges {
            let class = self.edge(e).class;
            let g = *self
                .out_edges(at)
                .iter()
                .find(|&&g| self.edge(g).class == class)?;
            out.push(g);
            at = self.edge(g).to;
        }
        Some(out)
    }

    /// Locates the spans of `occ` on `path`; returns the start index of each.
    fn locate(&self, occ: &Occurrence, epoch: u32, path: &Path) -> Option<Vec<(usize, usize)>> {
        let mut from = 0;
        let mut found = Vec::with_capacity(occ.spans.len());
        for span in &occ.spans {
            let span = self.expand_edges(span, epoch);
            let at = find_run(&path.edges, &span, from)?;
            found.push((at, at + span.len()));
            from = at + span.len();
        }
        Some(found)
    }
}

impl Application {
    /// Domain membership: the path traverses every replaced span of one
    /// occurrence.
    pub fn applies_to(&self, graph: &CodeGraph, path: &Path) -> bool {
        let path = graph.refresh(path);
        self.occurrences
            .iter()
            .any(|occ| graph.locate(occ, self.epoch, &path).is_some())
    }

    /// The path with this correction switched on, if it lies in the domain.
    pub fn apply_to(&self, graph: &CodeGraph, path: &Path) -> Option<Path> {
        let path = graph.refresh(path);
        for occ in &self.occurrences {
            let Some(spans) = graph.locate(occ, self.epoch, &path) else {
                continue;
            };
            let mut edges = path.edges[..spans[0].0].to_vec();
            for piece in &occ.chain {
                match *piece {
                    ChainPiece::Edge(e) => edges.extend(graph.expand_edges(&[e], self.epoch)),
                    ChainPiece::Region { after, entry } => {
                        let inner = &path.edges[spans[after].1..spans[after + 1].0];
                        edges.extend(graph.walk_twins(entry, inner)?);
                    }
                }
            }
            edges.extend_from_slice(&path.edges[spans.last().unwrap().1..]);
            let out = graph.stamp(Path::new(edges));
            debug_assert!(graph.validate_path(&out).is_ok());
            return Some(out);
        }
        None
    }
}
