//! Random-forest regression over dense feature rows.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or cannot be split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features inspected per split; `None` means ⌈√p⌉.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("row {row} has {found} features, expected {expected}")]
    WidthMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("forest needs at least one tree")]
    NoTrees,
}

/// A tree node. Leaves have no split feature. `cover` is the number of
/// training rows reaching the node (each distinct training row once, not the
/// bootstrap multiplicity); it weights unseen-feature branches when
/// computing conditional expectations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
    pub cover: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
            cover: 0.0,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Index of the child taken by `x` at branch `node`.
    pub fn child(&self, node: usize, x: &[f64]) -> usize {
        let n = &self.nodes[node];
        let f = n.feature.expect("branch node");
        if x[f] <= n.threshold {
            n.left
        } else {
            n.right
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        while !self.nodes[at].is_leaf() {
            at = self.child(at, x);
        }
        self.nodes[at].value
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left).max(go(t, n.right))
            }
        }
        go(self, 0)
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| n.feature)
    }

    fn set_covers(&mut self, rows: &[Vec<f64>]) {
        for n in &mut self.nodes {
            n.cover = 0.0;
        }
        for x in rows {
            let mut at = 0;
            loop {
                self.nodes[at].cover += 1.0;
                if self.nodes[at].is_leaf() {
                    break;
                }
                at = self.child(at, x);
            }
        }
    }
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    targets: &'a [f64],
    config: &'a ForestConfig,
    max_features: usize,
    width: usize,
    nodes: Vec<Node>,
}

struct Split {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn mean(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.targets[i]).sum::<f64>() / idx.len() as f64
    }

    fn build<R: Rng>(&mut self, idx: &mut [usize], depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::leaf(self.mean(idx)));
        let depth_ok = self.config.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || idx.len() < self.config.min_samples_split.max(2) {
            return id;
        }
        let first = self.targets[idx[0]];
        if idx.iter().all(|&i| self.targets[i] == first) {
            return id;
        }
        let Some(split) = self.best_split(idx, rng) else {
            return id;
        };
        // partition in place: rows going left first
        let mut cut = 0;
        for k in 0..idx.len() {
            if self.rows[idx[k]][split.feature] <= split.threshold {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(cut);
        let left = self.build(left_idx, depth + 1, rng);
        let right = self.build(right_idx, depth + 1, rng);
        let node = &mut self.nodes[id];
        node.feature = Some(split.feature);
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        id
    }

    /// Best variance-reducing split among a random feature subset. Like
    /// common implementations, keeps drawing features past the subset size
    /// until some valid split turns up.
    fn best_split<R: Rng>(&self, idx: &[usize], rng: &mut R) -> Option<Split> {
        let mut features: Vec<usize> = (0..self.width).collect();
        features.shuffle(rng);
        let min_leaf = self.config.min_samples_leaf.max(1);
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(idx.len());
        for (inspected, &f) in features.iter().enumerate() {
            if inspected >= self.max_features && best.is_some() {
                break;
            }
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.rows[i][f], self.targets[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = pairs.iter().map(|p| p.1).sum();
            let n = pairs.len() as f64;
            let mut left_sum = 0.0;
            for k in 0..pairs.len() - 1 {
                left_sum += pairs[k].1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                if k + 1 < min_leaf || pairs.len() - k - 1 < min_leaf {
                    continue;
                }
                let nr = n - nl;
                let right_sum = total - left_sum;
                // maximizing this is minimizing the summed squared error
                let score = left_sum * left_sum / nl + right_sum * right_sum / nr;
                if best.as_ref().is_none_or(|b| score > b.score + 1e-12) {
                    best = Some(Split {
                        feature: f,
                        threshold: 0.5 * (pairs[k].0 + pairs[k + 1].0),
                        score,
                    });
                }
            }
        }
        best
    }
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize, TrainError> {
    let width = rows.first().ok_or(TrainError::Empty)?.len();
    for (row, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(TrainError::WidthMismatch {
                row,
                expected: width,
                found: r.len(),
            });
        }
    }
    Ok(width)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
    pub feature_count: usize,
    pub training_size: usize,
    /// Mean prediction over the training rows.
    pub baseline: f64,
}

impl RandomForest {
    pub fn fit(
        rows: &[Vec<f64>],
        targets: &[f64],
        config: &ForestConfig,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let width = check_rows(rows)?;
        assert_eq!(rows.len(), targets.len(), "one target per row");
        if config.n_trees == 0 {
            return Err(TrainError::NoTrees);
        }
        let max_features = config
            .max_features
            .unwrap_or_else(|| (width as f64).sqrt().ceil() as usize)
            .clamp(1, width.max(1));
        let n = rows.len();
        let mut trees = Vec::with_capacity(config.n_trees);
        for t in 0..config.n_trees {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let mut idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = Builder {
                rows,
                targets,
                config,
                max_features,
                width,
                nodes: Vec::new(),
            };
            builder.build(&mut idx, 0, &mut rng);
            let mut tree = Tree {
                nodes: builder.nodes,
            };
            tree.set_covers(rows);
            trees.push(tree);
        }
        let mut forest = Self {
            trees,
            feature_count: width,
            training_size: n,
            baseline: 0.0,
        };
        forest.baseline = rows.iter().map(|x| forest.predict(x)).sum::<f64>() / n as f64;
        Ok(forest)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.feature_count, "input width");
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Indices of the `k` highest predictions; ties go to the lower index.
    pub fn rank(&self, candidates: &[Vec<f64>], k: usize) -> Vec<usize> {
        let scores: Vec<f64> = candidates.iter().map(|x| self.predict(x)).collect();
        top_k(&scores, k)
    }
}

/// Indices of the `k` largest scores, best first, ties by index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Coefficient of determination of `predicted` against `actual`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> f64 {
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_rows(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..p).map(|_| f64::from(rng.random_range(0..2u8))).collect())
            .collect()
    }

    #[test]
    fn single_point_is_a_constant_model() {
        let f = RandomForest::fit(&[vec![1.0, 0.0]], &[3.5], &ForestConfig::default(), 0).unwrap();
        assert_eq!(f.predict(&[0.0, 1.0]), 3.5);
        assert_eq!(f.predict(&[1.0, 0.0]), 3.5);
        assert_eq!(f.baseline, 3.5);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let err = RandomForest::fit(&[vec![1.0], vec![1.0, 0.0]], &[1.0, 2.0], &ForestConfig::default(), 0);
        assert_eq!(
            err.unwrap_err(),
            TrainError::WidthMismatch {
                row: 1,
                expected: 1,
                found: 2
            }
        );
        assert_eq!(
            RandomForest::fit(&[], &[], &ForestConfig::default(), 0).unwrap_err(),
            TrainError::Empty
        );
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows = binary_rows(60, 6, &mut rng);
        let y: Vec<f64> = rows.iter().map(|r| r[0] - 2.0 * r[3] + rng.random::<f64>()).collect();
        let a = RandomForest::fit(&rows, &y, &ForestConfig::default(), 11).unwrap();
        let b = RandomForest::fit(&rows, &y, &ForestConfig::default(), 11).unwrap();
        assert_eq!(a, b);
        let c = RandomForest::fit(&rows, &y, &ForestConfig::default(), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn additive_landscape_generalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = [1.5, -0.7, 0.3, 2.0, -1.2, 0.8, 0.0, -0.4];
        let rows = binary_rows(200, w.len(), &mut rng);
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().zip(&w).map(|(x, w)| x * w).sum())
            .collect();
        let f = RandomForest::fit(&rows[..160], &y[..160], &ForestConfig::default(), 5).unwrap();
        let pred: Vec<f64> = rows[160..].iter().map(|x| f.predict(x)).collect();
        assert!(r_squared(&y[160..], &pred) >= 0.8);
    }

    #[test]
    fn noise_labels_do_not_generalize() {
        let mut worst = f64::NEG_INFINITY;
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let rows = binary_rows(200, 8, &mut rng);
            let y: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
            let f = RandomForest::fit(&rows[..160], &y[..160], &ForestConfig::default(), seed).unwrap();
            let pred: Vec<f64> = rows[160..].iter().map(|x| f.predict(x)).collect();
            worst = worst.max(r_squared(&y[160..], &pred));
        }
        assert!(worst < 0.2, "best noise R² {worst}");
    }

    #[test]
    fn baseline_is_mean_training_prediction_and_covers_count_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows = binary_rows(40, 4, &mut rng);
        let y: Vec<f64> = rows.iter().map(|r| r[1] * 3.0 + r[2]).collect();
        let f = RandomForest::fit(&rows, &y, &ForestConfig::default(), 2).unwrap();
        let mean = rows.iter().map(|r| f.predict(r)).sum::<f64>() / 40.0;
        assert!((f.baseline - mean).abs() < 1e-12);
        for t in &f.trees {
            assert_eq!(t.nodes[0].cover, 40.0);
            for n in t.nodes.iter().filter(|n| !n.is_leaf()) {
                assert_eq!(n.cover, t.nodes[n.left].cover + t.nodes[n.right].cover);
            }
        }
    }

    #[test]
    fn ranking_breaks_ties_by_index_and_nests() {
        assert_eq!(top_k(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
        assert_eq!(top_k(&[0.1, 0.9, 0.5, 0.9], 3), vec![1, 3, 2]);
        assert_eq!(top_k(&[0.1, 0.9], 5), vec![1, 0]);
        let scores = [0.3, 0.3, 0.7, 0.1, 0.7, 0.2];
        for k in 1..scores.len() {
            let a = top_k(&scores, k);
            let b = top_k(&scores, k + 1);
            assert_eq!(&b[..k], &a[..]);
        }
    }
}
