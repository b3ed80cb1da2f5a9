//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use algograph::correction::{Edit, EditOp};
use algograph::surrogate::forest::Tree;
use algograph::surrogate::{ForestConfig, RandomForest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain line-list patcher: walks the original lines once and emits inserted,
/// replaced and kept text around each of them.
pub fn patch_oracle(text: &str, edits: &[Edit]) -> String {
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let n = lines.len();
    let mut out = String::new();
    let emit = |out: &mut String, s: &str| {
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        out.push_str(s);
    };
    for i in 1..=n + 1 {
        for e in edits {
            let before = matches!(e.op, EditOp::InsertBefore) && e.first == i;
            let empty_replace = matches!(e.op, EditOp::Replace) && e.first == i && e.last == i;
            if before || empty_replace {
                emit(&mut out, &e.new_lines);
            }
        }
        if i > n {
            break;
        }
        let covering = edits.iter().find(|e| {
            matches!(e.op, EditOp::Replace | EditOp::Delete) && e.first <= i && i < e.last
        });
        match covering {
            Some(e) if e.first == i => emit(&mut out, &e.new_lines),
            Some(_) => {}
            None => emit(&mut out, lines[i - 1]),
        }
        for e in edits {
            if matches!(e.op, EditOp::InsertAfter) && e.first == i {
                emit(&mut out, &e.new_lines);
            }
        }
    }
    out
}

pub fn random_block(rng: &mut ChaCha8Rng, tag: &str) -> String {
    let k = rng.random_range(1..=3);
    (0..k).map(|j| format!("{tag}_{j} = {}\n", rng.random_range(0..100))).collect()
}

/// Random non-overlapping edits against a text of `n` lines.
pub fn random_edits(rng: &mut ChaCha8Rng, n: usize, tag: &str) -> Vec<Edit> {
    let count = rng.random_range(1..=3);
    let mut edits: Vec<Edit> = Vec::new();
    let mut taken = vec![false; n + 2];
    for k in 0..count {
        let op = match rng.random_range(0..4) {
            0 => EditOp::InsertBefore,
            1 => EditOp::InsertAfter,
            2 => EditOp::Replace,
            _ => EditOp::Delete,
        };
        let first = rng.random_range(1..=n);
        let edit = match op {
            EditOp::InsertBefore | EditOp::InsertAfter => {
                // keep the insertion point clear of rewritten lines
                let gap_line = if op == EditOp::InsertBefore { first } else { first + 1 };
                if gap_line <= n && taken[gap_line] && gap_line > 1 && taken[gap_line - 1] {
                    continue;
                }
                Edit { op, first, last: first, new_lines: random_block(rng, &format!("{tag}{k}")) }
            }
            EditOp::Replace | EditOp::Delete => {
                let last = (first + rng.random_range(1..=3)).min(n + 1);
                if (first..last).any(|l| taken[l]) {
                    continue;
                }
                let new_lines = if op == EditOp::Replace {
                    random_block(rng, &format!("{tag}{k}"))
                } else {
                    String::new()
                };
                Edit { op, first, last, new_lines }
            }
        };
        edits.push(edit);
        if matches!(op, EditOp::Replace | EditOp::Delete) {
            for l in edits.last().unwrap().first..edits.last().unwrap().last {
                taken[l] = true;
            }
        }
    }
    // drop inserts that ended up strictly inside a later rewrite
    let ranges: Vec<(usize, usize)> = edits
        .iter()
        .filter(|e| !e.op.is_insert())
        .map(|e| e.range())
        .collect();
    edits.retain(|e| {
        if !e.op.is_insert() {
            return true;
        }
        let (p, _) = e.range();
        !ranges.iter().any(|&(a, b)| a < p && p < b)
    });
    if edits.is_empty() || edits.iter().all(|e| e.op == EditOp::Delete) && {
        let deleted: usize = edits.iter().map(|e| e.last - e.first).sum();
        deleted >= n
    } {
        return vec![Edit {
            op: EditOp::Replace,
            first: 1,
            last: 2,
            new_lines: format!("{tag} = 0\n"),
        }];
    }
    edits
}

/// Value of coalition `mask` for one tree: follow `x` on known features,
/// average children by training-row counts otherwise.
pub fn coalition_value(tree: &Tree, x: &[f64], mask: u32, node: usize) -> f64 {
    let n = &tree.nodes[node];
    let Some(f) = n.feature else {
        return n.value;
    };
    if mask & (1 << f) != 0 {
        let next = if x[f] <= n.threshold { n.left } else { n.right };
        coalition_value(tree, x, mask, next)
    } else {
        let (l, r) = (&tree.nodes[n.left], &tree.nodes[n.right]);
        (l.cover * coalition_value(tree, x, mask, n.left)
            + r.cover * coalition_value(tree, x, mask, n.right))
            / (l.cover + r.cover)
    }
}

pub fn brute_force(model: &RandomForest, x: &[f64]) -> Vec<f64> {
    let p = model.feature_count;
    let values: Vec<f64> = (0..1u32 << p)
        .map(|mask| {
            model
                .trees
                .iter()
                .map(|t| coalition_value(t, x, mask, 0))
                .sum::<f64>()
                / model.trees.len() as f64
        })
        .collect();
    let mut fact = vec![1.0f64; p + 1];
    for i in 1..=p {
        fact[i] = fact[i - 1] * i as f64;
    }
    (0..p)
        .map(|i| {
            let mut phi = 0.0;
            for mask in 0..1u32 << p {
                if mask & (1 << i) != 0 {
                    continue;
                }
                let s = mask.count_ones() as usize;
                let w = fact[s] * fact[p - s - 1] / fact[p];
                phi += w * (values[(mask | (1 << i)) as usize] - values[mask as usize]);
            }
            phi
        })
        .collect()
}

pub fn random_model(p: usize, n: usize, trees: usize, seed: u64) -> (RandomForest, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| f64::from(rng.random_range(0..2u8))).collect())
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().zip(&w).map(|(x, w)| x * w).sum();
            lin + r[0] * r[p - 1] * 1.5 + rng.random_range(-0.3..0.3)
        })
        .collect();
    let cfg = ForestConfig {
        n_trees: trees,
        ..ForestConfig::default()
    };
    (RandomForest::fit(&rows, &y, &cfg, seed).unwrap(), rng)
}
