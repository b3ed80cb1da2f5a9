//! Executes configured runs and writes their artifacts: one directory per
//! run with fixed file names, and a manifest for batches.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path as FsPath, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig, TheoryConfig};
use crate::correction::{Correction, CorrectionStatus};
use crate::fitness::FitnessService;
use crate::graph::CorrectionId;
use crate::search::{
    derive_seed, write_jsonl, Evaluated, RunTrace, Search, SearchError, SearchOutcome, Termination, Variant,
};
use crate::theory::{
    budget_table, check_bounded_decay, check_budget_monotonicity, check_interior_optimum, check_derivative_dominance, omega_star, z_grid, CheckReport,
    PolicyProfile, TableRow,
};
use crate::surrogate::{credit_report, CreditReport, ForestConfig, PresenceVector, ShapMode, EXACT_MAX_FEATURES};

pub const TRACE_FILE: &str = "trace.jsonl";
pub const INCUMBENT_FILE: &str = "incumbent.txt";
pub const CREDIT_FILE: &str = "credit.csv";
pub const GRAPH_FILE: &str = "graph.json";
pub const CORRECTIONS_FILE: &str = "corrections.json";
pub const EVALUATED_FILE: &str = "evaluated.json";
pub const FITNESS_FILE: &str = "fitness.jsonl";
pub const BUDGET_FILE: &str = "budget.json";
pub const SUMMARY_FILE: &str = "summary.md";
pub const RUN_FILE: &str = "run.json";
pub const MANIFEST_FILE: &str = "bank.json";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Artifact(String),
    /// Inputs that are well-formed but unusable, such as an empty bank.
    #[error("{0}")]
    Usage(String),
}

impl RunError {
    /// 2 for configuration problems, 1 for everything that went wrong at
    /// run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Search(SearchError::Config(_)) | RunError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Facts about a finished run that the other artifacts do not carry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub variant: Variant,
    pub termination: Termination,
    pub incumbent_fitness: f64,
    pub incumbent_corrections: Vec<CorrectionId>,
    pub total_cost: u64,
    pub iterations: usize,
    pub evaluations: usize,
    /// Surrogate feature order.
    pub features: Vec<CorrectionId>,
    pub forest: ForestConfig,
    pub shap_permutations: usize,
}

fn output_err(path: &FsPath) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Output {
        path: path.to_owned(),
        source,
    }
}

fn write_file(path: &FsPath, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(path, bytes).map_err(output_err(path))
}

fn write_json<T: Serialize>(path: &FsPath, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::Artifact(e.to_string()))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// Runs one search as configured and writes its artifacts into `out`.
pub fn run_to_dir(config: &RunConfig, out: &FsPath) -> Result<RunSummary, RunError> {
    // build everything that can fail on configuration before any query
    let mut generator = config.build_generator()?;
    let (evaluator, instances) = config.build_evaluator(config.seed)?;
    config.search.validate().map_err(ConfigError::Invalid)?;
    fs::create_dir_all(out).map_err(output_err(out))?;
    let ledger = out.join(FITNESS_FILE);
    if ledger.exists() {
        fs::remove_file(&ledger).map_err(output_err(&ledger))?;
    }
    let mut fitness = FitnessService::new(evaluator, instances, config.penalty.unwrap_or_default())
        .with_ledger(&ledger)
        .map_err(output_err(&ledger))?;
    let outcome = Search::new(
        config.search.clone(),
        config.problem.clone(),
        &mut generator,
        &mut fitness,
        config.seed,
    )
    .run()?;
    let summary = RunSummary {
        seed: config.seed,
        variant: config.search.variant,
        termination: outcome.termination,
        incumbent_fitness: outcome.incumbent().record.fitness,
        incumbent_corrections: outcome.incumbent().corrections.iter().copied().collect(),
        total_cost: outcome.state.ledger.spent(),
        iterations: outcome.trace.len(),
        evaluations: outcome.state.evaluated.len(),
        features: outcome.state.features.clone(),
        forest: config.search.forest.clone(),
        shap_permutations: config.search.shap_permutations,
    };
    write_outcome(&outcome, &summary, out)?;
    Ok(summary)
}

fn write_outcome(outcome: &SearchOutcome, summary: &RunSummary, out: &FsPath) -> Result<(), RunError> {
    let path = out.join(TRACE_FILE);
    let mut buf = Vec::new();
    write_jsonl(&outcome.events, &mut buf).map_err(output_err(&path))?;
    write_file(&path, &buf)?;

    write_file(&out.join(INCUMBENT_FILE), outcome.incumbent_program().as_bytes())?;

    let path = out.join(CREDIT_FILE);
    let mut buf = Vec::new();
    outcome
        .credit
        .write_csv(&mut buf)
        .map_err(|e| RunError::Artifact(e.to_string()))?;
    write_file(&path, &buf)?;

    write_json(&out.join(GRAPH_FILE), &outcome.state.graph.snapshot())?;
    write_json(&out.join(CORRECTIONS_FILE), &outcome.state.corrections)?;
    write_json(&out.join(EVALUATED_FILE), &outcome.state.evaluated)?;
    write_json(&out.join(BUDGET_FILE), &outcome.state.ledger)?;
    write_json(&out.join(RUN_FILE), summary)?;
    if summary.variant == Variant::Guided {
        let mut text = outcome.state.summary.clone();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        write_file(&out.join(SUMMARY_FILE), text.as_bytes())?;
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &FsPath) -> Result<T, RunError> {
    let file = File::open(path).map_err(output_err(path))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| RunError::Artifact(format!("{}: {e}", path.display())))
}

/// Refits the surrogate on a finished run's evaluations and recomputes the
/// credit of its applied corrections.
pub fn recompute_credit(run_dir: &FsPath, seed: u64) -> Result<CreditReport, RunError> {
    let summary: RunSummary = read_json(&run_dir.join(RUN_FILE))?;
    let evaluated: Vec<Evaluated> = read_json(&run_dir.join(EVALUATED_FILE))?;
    let corrections: Vec<Correction> = read_json(&run_dir.join(CORRECTIONS_FILE))?;
    if summary.features.is_empty() {
        return Ok(CreditReport::default());
    }
    let dataset: Vec<(PresenceVector, f64)> = evaluated
        .iter()
        .map(|e| (PresenceVector::from_set(&summary.features, &e.corrections), e.record.fitness))
        .collect();
    let model = crate::surrogate::train(&dataset, &summary.forest, seed)
        .map_err(|e| RunError::Artifact(format!("cannot fit the surrogate: {e}")))?;
    let names = summary
        .features
        .iter()
        .map(|&id| {
            corrections
                .iter()
                .find(|c| c.id == id && c.status == CorrectionStatus::Applied)
                .map(|c| (id, c.description.clone()))
                .ok_or_else(|| RunError::Artifact(format!("feature {id} is not an applied correction")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let rows: Vec<Vec<f64>> = dataset.iter().map(|(v, _)| v.features()).collect();
    let mode = if names.len() <= EXACT_MAX_FEATURES {
        ShapMode::Exact
    } else {
        ShapMode::Sampled {
            permutations: summary.shap_permutations,
            seed,
        }
    };
    credit_report(&model, &rows, &names, mode).map_err(|e| RunError::Artifact(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    /// Label used to group runs into banks.
    pub method: String,
    /// Trace path relative to the manifest.
    pub trace: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub master_seed: u64,
    pub runs: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &FsPath) -> Result<Self, RunError> {
        read_json(path)
    }

    /// Traces of the successful runs, grouped by method in first-seen order.
    pub fn banks(&self, manifest_path: &FsPath) -> Result<Vec<(String, Vec<RunTrace>)>, RunError> {
        let base = manifest_path.parent().unwrap_or(FsPath::new("."));
        let mut banks: Vec<(String, Vec<RunTrace>)> = Vec::new();
        for entry in self.runs.iter().filter(|e| e.status == RunStatus::Ok) {
            let path = base.join(&entry.trace);
            let file = File::open(&path).map_err(output_err(&path))?;
            let trace = RunTrace::read_jsonl(BufReader::new(file))
                .map_err(|e| RunError::Artifact(format!("{}: {e}", path.display())))?
                .ok_or_else(|| RunError::Artifact(format!("{}: no initial record", path.display())))?;
            match banks.iter_mut().find(|(m, _)| *m == entry.method) {
                Some((_, bank)) => bank.push(trace),
                None => banks.push((entry.method.clone(), vec![trace])),
            }
        }
        Ok(banks)
    }
}

pub fn run_dir_name(index: usize) -> String {
    format!("run-{index:03}")
}

/// Runs `runs` independent searches with seeds derived from the config's
/// seed, at most `parallelism` at a time, and writes `bank.json` listing
/// them in index order. Individual failures are recorded, not raised.
pub fn batch(config: &RunConfig, runs: usize, parallelism: usize, out: &FsPath) -> Result<Manifest, RunError> {
    if runs == 0 {
        return Err(ConfigError::Invalid("--runs must be at least 1".into()).into());
    }
    if parallelism == 0 {
        return Err(ConfigError::Invalid("--parallelism must be at least 1".into()).into());
    }
    // surface configuration problems once, before spawning anything
    config.build_generator()?;
    config.build_evaluator(config.seed)?;
    fs::create_dir_all(out).map_err(output_err(out))?;
    let method = match config.search.variant {
        Variant::Agnostic => "agnostic",
        Variant::Guided => "guided",
    };
    let next = AtomicUsize::new(0);
    let entries = Mutex::new(Vec::with_capacity(runs));
    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(runs) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= runs {
                    break;
                }
                let seed = derive_seed(config.seed, &[index as u64]);
                let mut run = config.clone();
                run.seed = seed;
                let dir = run_dir_name(index);
                let result = run_to_dir(&run, &out.join(&dir));
                let entry = ManifestEntry {
                    index,
                    seed,
                    method: method.to_owned(),
                    trace: format!("{dir}/{TRACE_FILE}"),
                    status: if result.is_ok() { RunStatus::Ok } else { RunStatus::Failed },
                    error: result.err().map(|e| e.to_string()),
                };
                entries.lock().expect("no worker panics while holding the lock").push(entry);
            });
        }
    });
    let mut runs_done = entries.into_inner().expect("workers finished");
    runs_done.sort_by_key(|e| e.index);
    let manifest = Manifest {
        master_seed: config.seed,
        runs: runs_done,
    };
    let path = out.join(MANIFEST_FILE);
    let file = File::create(&path).map_err(output_err(&path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| RunError::Artifact(e.to_string()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(output_err(&path))?;
    Ok(manifest)
}

pub const REPORT_FILE: &str = "report.txt";
pub const Z_GRID_FILE: &str = "z_grid.csv";
pub const OMEGA_STAR_FILE: &str = "omega_star.csv";

/// Every check that applies to the configured profile. Checks whose
/// premises fail are reported as such rather than skipped.
pub fn theory_checks(config: &TheoryConfig) -> Vec<CheckReport> {
    let p = &config.profile;
    let mut reports = vec![
        check_budget_monotonicity(p, &config.budgets, config.points),
        check_interior_optimum(p, &config.budgets, config.points),
    ];
    let mut decay = check_bounded_decay(&p.q, 1.0, config.decay_x_max, config.points);
    decay.name = format!("{} (Q)", decay.name);
    reports.push(decay);
    let mut decay = check_bounded_decay(&p.mu, p.c0, config.decay_x_max.max(2.0 * p.c0), config.points);
    decay.name = format!("{} (μ)", decay.name);
    reports.push(decay);
    if let Some(c) = &config.comparison {
        let other = PolicyProfile { mu: c.mu, ..*p };
        reports.push(check_derivative_dominance(p, &other, &config.budgets, config.points));
    }
    reports
}

fn csv_err(path: &FsPath) -> impl Fn(csv::Error) -> RunError + '_ {
    move |e| RunError::Artifact(format!("{}: {e}", path.display()))
}

/// Writes the check report, the Z grid and the maximizer sets into `out`.
pub fn budget_theory(config: &TheoryConfig, out: &FsPath) -> Result<Vec<CheckReport>, RunError> {
    fs::create_dir_all(out).map_err(output_err(out))?;
    let reports = theory_checks(config);
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    write_file(&out.join(REPORT_FILE), text.as_bytes())?;

    let path = out.join(Z_GRID_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["omega", "budget", "z"]).map_err(csv_err(&path))?;
    for (omega, budget, z) in z_grid(&config.profile, &config.budgets, config.points) {
        w.write_record([omega.to_string(), budget.to_string(), z.to_string()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(output_err(&path))?;

    let path = out.join(OMEGA_STAR_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["budget", "omega", "z", "global"]).map_err(csv_err(&path))?;
    for &b in &config.budgets {
        let set = omega_star(&config.profile, b, config.points);
        for &(omega, z) in &set.local {
            let global = set.omegas.contains(&omega);
            w.write_record([b.to_string(), omega.to_string(), z.to_string(), global.to_string()])
                .map_err(csv_err(&path))?;
        }
    }
    w.flush().map_err(output_err(&path))?;
    Ok(reports)
}

/// Budget-by-cap table over the successful runs of the given manifests,
/// grouped by method.
pub fn bootstrap_table(
    manifests: &[PathBuf],
    budgets: &[f64],
    caps: &[usize],
    trajectories: usize,
    seed: u64,
) -> Result<Vec<TableRow>, RunError> {
    let mut banks: Vec<(String, Vec<RunTrace>)> = Vec::new();
    for path in manifests {
        for (method, traces) in Manifest::load(path)?.banks(path)? {
            match banks.iter_mut().find(|(m, _)| *m == method) {
                Some((_, bank)) => bank.extend(traces),
                None => banks.push((method, traces)),
            }
        }
    }
    if banks.is_empty() {
        return Err(RunError::Usage("the trace bank is empty: no successful runs".into()));
    }
    if let Some(b) = budgets.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(RunError::Usage(format!("budget {b} must be positive")));
    }
    budget_table(&banks, budgets, caps, trajectories, seed).map_err(|e| RunError::Usage(e.to_string()))
}

pub fn write_table<W: Write>(rows: &[TableRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "budget", "n_cap", "estimate", "std_error"])?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.budget.to_string(),
            r.n_cap.to_string(),
            r.estimate.to_string(),
            r.std_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
