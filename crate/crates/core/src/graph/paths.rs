use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CodeGraph, CorrectionId, EdgeId, GraphError, NodeId, Path};

/// Candidate pool size above which enumeration switches to seeded sampling.
pub const DEFAULT_POOL_SIZE: usize = 10_000;

/// Per-node path counts towards the sink. `with` counts only paths that use
/// at least one edge of the filter correction.
#[derive(Debug, Clone)]
pub struct PathCountTable {
    any: Vec<u128>,
    with: Vec<u128>,
    filter: Option<CorrectionId>,
}

impl PathCountTable {
    pub fn from_source(&self, graph: &CodeGraph) -> u128 {
        let s = graph.source().0 as usize;
        if self.filter.is_some() {
            self.with[s]
        } else {
            self.any[s]
        }
    }
}

impl CodeGraph {
    /// The first path in edge-id order; right after construction this is the
    /// initial program.
    pub fn root_path(&self) -> Path {
        let mut edges = Vec::new();
        let mut at = self.source();
        while at != self.sink() {
            let e = self.out_edges(at)[0];
            edges.push(e);
            at = self.edge(e).to;
        }
        self.stamp(Path::new(edges))
    }

    pub fn path_counts(&self, filter: Option<CorrectionId>) -> PathCountTable {
        let order = self.topological_order().expect("graph is acyclic");
        let n = self.node_count();
        let mut any = vec![0u128; n];
        let mut with = vec![0u128; n];
        any[self.sink().0 as usize] = 1;
        for &v in order.iter().rev() {
            let vi = v.0 as usize;
            if v == self.sink() {
                continue;
            }
            let (mut a, mut w) = (0u128, 0u128);
            for &e in self.out_edges(v) {
                let edge = self.edge(e);
                let to = edge.to.0 as usize;
                a = a.saturating_add(any[to]);
                w = w.saturating_add(if Some(edge.correction) == filter {
                    any[to]
                } else {
                    with[to]
                });
            }
            any[vi] = a;
            with[vi] = w;
        }
        PathCountTable { any, with, filter }
    }

    /// Exact number of source-to-sink paths (saturating at `u128::MAX`).
    pub fn count_paths(&self) -> u128 {
        self.path_counts(None).from_source(self)
    }

    /// Number of paths using at least one edge of `correction`.
    pub fn count_paths_with(&self, correction: CorrectionId) -> u128 {
        self.path_counts(Some(correction)).from_source(self)
    }

    fn check_filter(&self, filter: Option<CorrectionId>) -> Result<(), GraphError> {
        match filter {
            Some(c) if !self.edges().any(|e| e.correction == c) => {
                Err(GraphError::UnknownCorrection(c))
            }
            _ => Ok(()),
        }
    }

    /// Up to `cap` distinct paths in lexicographic order of their edge-id
    /// sequences, each using the filter correction when one is given.
    pub fn enumerate_paths(
        &self,
        filter: Option<CorrectionId>,
        cap: usize,
    ) -> Result<Vec<Path>, GraphError> {
        assert!(cap >= 1, "cap must be positive");
        self.check_filter(filter)?;
        let table = self.path_counts(filter);
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.dfs(self.source(), filter.is_none(), filter, &table, &mut stack, &mut out, cap);
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        at: NodeId,
        satisfied: bool,
        filter: Option<CorrectionId>,
        table: &PathCountTable,
        stack: &mut Vec<EdgeId>,
        out: &mut Vec<Path>,
        cap: usize,
    ) {
        if out.len() >= cap {
            return;
        }
        if at == self.sink() {
            if satisfied {
                out.push(self.stamp(Path::new(stack.clone())));
            }
            return;
        }
        for &e in self.out_edges(at) {
            let edge = self.edge(e);
            let sat = satisfied || Some(edge.correction) == filter;
            let to = edge.to.0 as usize;
            let reachable = if sat { table.any[to] } else { table.with[to] };
            if reachable == 0 {
                continue;
            }
            stack.push(e);
            self.dfs(edge.to, sat, filter, table, stack, out, cap);
            stack.pop();
            if out.len() >= cap {
                return;
            }
        }
    }

    /// Draws one path uniformly at random among those satisfying the filter.
    pub fn sample_path<R: Rng>(
        &self,
        filter: Option<CorrectionId>,
        table: &PathCountTable,
        rng: &mut R,
    ) -> Option<Path> {
        let mut at = self.source();
        let mut satisfied = filter.is_none();
        let mut edges = Vec::new();
        if table.from_source(self) == 0 {
            return None;
        }
        while at != self.sink() {
            let weights: Vec<(EdgeId, bool, f64)> = self
                .out_edges(at)
                .iter()
                .map(|&e| {
                    let edge = self.edge(e);
                    let sat = satisfied || Some(edge.correction) == filter;
                    let to = edge.to.0 as usize;
                    let count = if sat { table.any[to] } else { table.with[to] };
                    (e, sat, count as f64)
                })
                .collect();
            let total: f64 = weights.iter().map(|w| w.2).sum();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = None;
            for &(e, sat, w) in &weights {
                if w == 0.0 {
                    continue;
                }
                chosen = Some((e, sat));
                if pick < w {
                    break;
                }
                pick -= w;
            }
            let (e, sat) = chosen?;
            edges.push(e);
            satisfied = sat;
            at = self.edge(e).to;
        }
        Some(self.stamp(Path::new(edges)))
    }

    /// Candidate pool: every path when there are at most `pool_size`, else a
    /// deterministic uniform sample of distinct paths. Sorted lexicographically.
    pub fn candidate_pool(&self, pool_size: usize, seed: u64) -> Vec<Path> {
        let table = self.path_counts(None);
        let total = table.from_source(self);
        if total <= pool_size as u128 {
            let mut out = Vec::new();
            let mut stack = Vec::new();
            self.dfs(self.source(), true, None, &table, &mut stack, &mut out, pool_size.max(1));
            return out;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = std::collections::BTreeSet::new();
        // bounded number of draws; duplicates are rare once total >> pool_size
        let max_draws = pool_size.saturating_mul(4);
        for _ in 0..max_draws {
            if seen.len() >= pool_size {
                break;
            }
            if let Some(p) = self.sample_path(None, &table, &mut rng) {
                seen.insert(p);
            }
        }
        seen.into_iter().collect()
    }
}
