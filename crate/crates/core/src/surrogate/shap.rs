//! Shapley attributions of forest predictions.
//!
//! The value of a coalition S is the conditional expectation of the model
//! output when only the features in S are known: at a split on a feature
//! outside S both children are averaged, weighted by how many training rows
//! went each way. With this value function the empty coalition is the mean
//! training prediction, so attributions sum to `predict(x) - baseline`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::forest::{RandomForest, Tree};

/// Largest feature count accepted by exact mode.
pub const EXACT_MAX_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMode {
    /// Polynomial-time per-tree algorithm over root-to-leaf paths.
    Exact,
    /// Monte-Carlo average of marginal contributions over random feature
    /// orderings.
    Sampled { permutations: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShapError {
    #[error("exact attribution supports at most {EXACT_MAX_FEATURES} features, model has {0}; use sampled mode")]
    TooManyFeatures(usize),
    #[error("input has {found} features, model expects {expected}")]
    Width { expected: usize, found: usize },
    #[error("sampled mode needs at least one permutation")]
    NoPermutations,
}

/// Attribution of `x` under `mode`.
pub fn shapley(model: &RandomForest, x: &[f64], mode: ShapMode) -> Result<Vec<f64>, ShapError> {
    if x.len() != model.feature_count {
        return Err(ShapError::Width {
            expected: model.feature_count,
            found: x.len(),
        });
    }
    match mode {
        ShapMode::Exact => {
            if model.feature_count > EXACT_MAX_FEATURES {
                return Err(ShapError::TooManyFeatures(model.feature_count));
            }
            Ok(tree_shap_forest(model, x))
        }
        ShapMode::Sampled { permutations, seed } => {
            if permutations == 0 {
                return Err(ShapError::NoPermutations);
            }
            Ok(sampled(model, x, permutations, seed))
        }
    }
}

/// Forest attribution without the feature-count gate.
pub fn tree_shap_forest(model: &RandomForest, x: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; model.feature_count];
    for tree in &model.trees {
        tree_shap(tree, x, &mut phi);
    }
    let scale = 1.0 / model.trees.len() as f64;
    phi.iter_mut().for_each(|p| *p *= scale);
    phi
}

/// Conditional expectation of the forest output given the features flagged
/// in `known`.
pub fn expected_value(model: &RandomForest, x: &[f64], known: &[bool]) -> f64 {
    model
        .trees
        .iter()
        .map(|t| tree_expected_value(t, x, known, 0))
        .sum::<f64>()
        / model.trees.len() as f64
}

fn tree_expected_value(tree: &Tree, x: &[f64], known: &[bool], node: usize) -> f64 {
    let n = &tree.nodes[node];
    match n.feature {
        None => n.value,
        Some(f) if known[f] => tree_expected_value(tree, x, known, tree.child(node, x)),
        Some(_) => {
            let (l, r) = (&tree.nodes[n.left], &tree.nodes[n.right]);
            (l.cover * tree_expected_value(tree, x, known, n.left)
                + r.cover * tree_expected_value(tree, x, known, n.right))
                / n.cover
        }
    }
}

fn sampled(model: &RandomForest, x: &[f64], permutations: usize, seed: u64) -> Vec<f64> {
    let p = model.feature_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phi = vec![0.0; p];
    let mut order: Vec<usize> = (0..p).collect();
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut known = vec![false; p];
        let mut prev = expected_value(model, x, &known);
        for &f in &order {
            known[f] = true;
            let next = expected_value(model, x, &known);
            phi[f] += next - prev;
            prev = next;
        }
    }
    phi.iter_mut().for_each(|v| *v /= permutations as f64);
    phi
}

/// One element of the unique-feature path: the feature split on, the
/// fraction of "zero" (feature unknown) and "one" (feature known) paths
/// flowing through, and the permutation weight.
#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero: f64,
    one: f64,
    weight: f64,
}

/// Appends an element to `path[..*len]`; the slice must have room for it.
fn extend(path: &mut [PathElement], len: &mut usize, zero: f64, one: f64, feature: Option<usize>) {
    let depth = *len;
    path[depth] = PathElement {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    };
    *len += 1;
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / denom;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / denom;
    }
}

/// Removes element `index` from `path[..*len]`.
fn unwind(path: &mut [PathElement], len: &mut usize, index: usize) {
    let depth = *len - 1;
    let PathElement { zero, one, .. } = path[index];
    let mut next = path[depth].weight;
    let denom = (depth + 1) as f64;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let keep = path[i].weight;
            path[i].weight = next * denom / ((i + 1) as f64 * one);
            next = keep - path[i].weight * zero * (depth - i) as f64 / denom;
        } else {
            path[i].weight = path[i].weight * denom / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero = path[i + 1].zero;
        path[i].one = path[i + 1].one;
    }
    *len -= 1;
}

/// Total weight of the path after removing element `index`, without
/// modifying it.
fn unwound_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let PathElement { zero, one, .. } = path[index];
    let denom = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let w = next * denom / ((i + 1) as f64 * one);
            total += w;
            next = path[i].weight - w * zero * (depth - i) as f64 / denom;
        } else if zero != 0.0 {
            total += path[i].weight / (zero * (depth - i) as f64 / denom);
        }
    }
    total
}

fn tree_shap(tree: &Tree, x: &[f64], phi: &mut [f64]) {
    // each level works on a copy of its parent's path placed right after it
    let d = tree.depth() + 2;
    let empty = PathElement {
        feature: None,
        zero: 0.0,
        one: 0.0,
        weight: 0.0,
    };
    let mut buf = vec![empty; d * (d + 1) / 2 + d];
    recurse(tree, x, phi, 0, &mut buf, 0, 1.0, 1.0, None);
}

/// `buf[..parent_len]` holds the parent's path; this node's path is built in
/// the space after it.
#[allow(clippy::too_many_arguments)]
fn recurse(
    tree: &Tree,
    x: &[f64],
    phi: &mut [f64],
    node: usize,
    buf: &mut [PathElement],
    parent_len: usize,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    let (parent, path) = buf.split_at_mut(parent_len);
    path[..parent_len].copy_from_slice(parent);
    let mut len = parent_len;
    extend(path, &mut len, zero, one, feature);
    let n = &tree.nodes[node];
    match n.feature {
        None => {
            for i in 1..len {
                let w = unwound_sum(&path[..len], i);
                let el = path[i];
                phi[el.feature.expect("non-root element")] += w * (el.one - el.zero) * n.value;
            }
        }
        Some(f) => {
            let hot = tree.child(node, x);
            let cold = if hot == n.left { n.right } else { n.left };
            let (mut in_zero, mut in_one) = (1.0, 1.0);
            if let Some(k) = (1..len).find(|&k| path[k].feature == Some(f)) {
                in_zero = path[k].zero;
                in_one = path[k].one;
                unwind(path, &mut len, k);
            }
            let hot_frac = tree.nodes[hot].cover / n.cover;
            let cold_frac = tree.nodes[cold].cover / n.cover;
            recurse(tree, x, phi, hot, path, len, hot_frac * in_zero, in_one, Some(f));
            recurse(tree, x, phi, cold, path, len, cold_frac * in_zero, 0.0, Some(f));
        }
    }
}
