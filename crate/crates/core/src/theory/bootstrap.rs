//! Expected best fitness under a token budget when runs are capped at n
//! iterations and restarted, estimated by resampling recorded runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::{derive_seed, RunTrace};

/// Trajectories simulated per worker shard.
const SHARD: usize = 8192;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BootstrapError {
    #[error("the trace bank is empty")]
    EmptyBank,
    #[error("at least one trajectory is required")]
    NoTrajectories,
    #[error("run {0} has a zero-cost initial record; trajectories would never end")]
    FreeRun(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trajectories: usize,
}

/// One trajectory: sample a recorded run uniformly, pay its zero-shot cost,
/// then replay up to `n_cap` iterations (cost, incumbent) before
/// restarting with a fresh sample. A step is taken only if the cumulative
/// cost stays within `budget`; the first unaffordable step ends the
/// trajectory. A trajectory that cannot afford even its first sample scores
/// that sample's zero-shot fitness.
fn trajectory<R: Rng>(bank: &[RunTrace], budget: f64, n_cap: usize, rng: &mut R) -> f64 {
    let mut spent = 0.0;
    let mut best = f64::NEG_INFINITY;
    loop {
        let run = &bank[rng.random_range(0..bank.len())];
        let c = run.initial_cost as f64;
        if spent + c > budget {
            return if best.is_finite() { best } else { run.initial_fitness };
        }
        spent += c;
        best = best.max(run.initial_fitness);
        for it in run.iterations.iter().take(n_cap) {
            let c = it.cost as f64;
            if spent + c > budget {
                return best;
            }
            spent += c;
            best = best.max(it.incumbent_fitness);
        }
    }
}

/// Mean over `trajectories` of the best fitness reached. Trajectories are
/// simulated in shards with seeds derived from `seed`, so the result does
/// not depend on how many threads run them.
pub fn bootstrap_restarts(
    bank: &[RunTrace],
    budget: f64,
    n_cap: usize,
    trajectories: usize,
    seed: u64,
) -> Result<BootstrapEstimate, BootstrapError> {
    if bank.is_empty() {
        return Err(BootstrapError::EmptyBank);
    }
    if trajectories == 0 {
        return Err(BootstrapError::NoTrajectories);
    }
    if let Some(i) = bank.iter().position(|r| r.initial_cost == 0) {
        return Err(BootstrapError::FreeRun(i));
    }
    let shards = trajectories.div_ceil(SHARD);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(shards);
    // (count, mean, sum of squared deviations) per shard
    let mut sums = vec![(0.0f64, 0.0f64, 0.0f64); shards];
    std::thread::scope(|scope| {
        for (w, chunk) in sums.chunks_mut(shards.div_ceil(workers)).enumerate() {
            let first = w * shards.div_ceil(workers);
            scope.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let shard = first + k;
                    let count = SHARD.min(trajectories - shard * SHARD);
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[shard as u64]));
                    for _ in 0..count {
                        let x = trajectory(bank, budget, n_cap, &mut rng);
                        slot.0 += 1.0;
                        let d = x - slot.1;
                        slot.1 += d / slot.0;
                        slot.2 += d * (x - slot.1);
                    }
                }
            });
        }
    });
    let (n, mean, m2) = sums.iter().fold((0.0, 0.0, 0.0), |a, s| {
        let n = a.0 + s.0;
        let d = s.1 - a.1;
        (n, a.1 + d * s.0 / n, a.2 + s.2 + d * d * a.0 * s.0 / n)
    });
    let var = if trajectories > 1 { m2 / (n - 1.0) } else { 0.0 };
    Ok(BootstrapEstimate {
        mean,
        std_error: (var / n).sqrt(),
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub budget: f64,
    pub n_cap: usize,
    pub estimate: f64,
    pub std_error: f64,
}

/// One estimate per (method, budget, iteration cap) cell. Every cell uses
/// the same seed, so the `n_cap = 0` cells are exactly repeated zero-shot
/// sampling of the method's bank.
pub fn budget_table(
    banks: &[(String, Vec<RunTrace>)],
    budgets: &[f64],
    caps: &[usize],
    trajectories: usize,
    seed: u64,
) -> Result<Vec<TableRow>, BootstrapError> {
    let mut rows = Vec::new();
    for (method, bank) in banks {
        for &budget in budgets {
            for &n_cap in caps {
                let e = bootstrap_restarts(bank, budget, n_cap, trajectories, seed)?;
                rows.push(TableRow {
                    method: method.clone(),
                    budget,
                    n_cap,
                    estimate: e.mean,
                    std_error: e.std_error,
                });
            }
        }
    }
    Ok(rows)
}
