//! The search loop: pick the incumbent as reference, ask for corrections,
//! grow the graph, evaluate an exploration and an exploitation set per
//! correction, retrain the surrogate, and (guided variant) refresh the
//! credit summary, until the token budget or the iteration cap runs out.

use std::collections::{BTreeSet, HashSet};
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::correction::{apply_correction, domain_of, parse_corrections, Correction, CorrectionStatus};
use crate::fitness::{dedupe_key, Evaluator, FitnessRecord, FitnessService};
use crate::generator::{
    extract_program, CreditLine, CreditOutcome, Generator, GeneratorErrorKind, ProblemContext,
};
use crate::graph::{CodeGraph, CorrectionId, GraphError, Path, DEFAULT_POOL_SIZE};
use crate::surrogate::{
    credit_report, top_k, CreditReport, ForestConfig, PresenceVector, RandomForest, ShapMode,
    EXACT_MAX_FEATURES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Corrections are requested from the reference alone.
    #[default]
    Agnostic,
    /// The request also carries a summary of credited past corrections.
    Guided,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "agnostic" => Ok(Variant::Agnostic),
            "guided" => Ok(Variant::Guided),
            other => Err(format!("unknown variant {other:?} (expected agnostic or guided)")),
        }
    }
}

fn default_n_eval() -> usize {
    16
}

fn default_pool_size() -> usize {
    2000
}

fn default_permutations() -> usize {
    256
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    /// Token budget B.
    pub budget: u64,
    /// Evaluation cap per applied correction; even and at least 2.
    #[serde(default = "default_n_eval")]
    pub n_eval: usize,
    /// Optional cap on the number of iterations.
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub variant: Variant,
    /// Paths sampled from the graph when ranking unevaluated candidates.
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default)]
    pub forest: ForestConfig,
    /// Orderings used for credit when there are too many corrections for
    /// exact attribution.
    #[serde(default = "default_permutations")]
    pub shap_permutations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            budget: 100_000,
            n_eval: default_n_eval(),
            iterations: None,
            variant: Variant::Agnostic,
            pool_size: default_pool_size(),
            forest: ForestConfig::default(),
            shap_permutations: default_permutations(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.budget == 0 {
            return Err("budget must be positive".into());
        }
        if self.n_eval < 2 || self.n_eval % 2 != 0 {
            return Err(format!("n_eval must be even and at least 2, got {}", self.n_eval));
        }
        if self.pool_size == 0 {
            return Err("pool_size must be positive".into());
        }
        if self.pool_size > DEFAULT_POOL_SIZE * 100 {
            return Err(format!("pool_size {} is unreasonably large", self.pool_size));
        }
        if self.shap_permutations == 0 {
            return Err("shap_permutations must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    Initial,
    Corrections,
    Summary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetEvent {
    pub iteration: usize,
    pub kind: QueryKind,
    pub cost: u64,
}

/// Token account of one run. `remaining` may end below zero by at most the
/// cost of the query that crossed it; no query is issued after that.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub initial: u64,
    pub remaining: i128,
    pub events: Vec<BudgetEvent>,
}

impl BudgetLedger {
    pub fn new(budget: u64) -> Self {
        Self {
            initial: budget,
            remaining: i128::from(budget),
            events: Vec::new(),
        }
    }

    pub fn can_issue(&self) -> bool {
        self.remaining > 0
    }

    pub fn charge(&mut self, iteration: usize, kind: QueryKind, cost: u64) {
        self.remaining -= i128::from(cost);
        self.events.push(BudgetEvent { iteration, kind, cost });
    }

    pub fn spent(&self) -> u64 {
        self.events.iter().map(|e| e.cost).sum()
    }

    pub fn exhausted(&self) -> bool {
        self.remaining < 0
    }
}

/// One evaluated algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluated {
    pub path: Path,
    pub corrections: BTreeSet<CorrectionId>,
    pub record: FitnessRecord,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    pub proposed: usize,
    pub applied: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Surrogate refits during the iteration, one per applied correction.
    pub retrains: usize,
    /// Lower bound on the paths the iteration's corrections added.
    pub new_paths: u64,
    pub incumbent_fitness: f64,
    /// Tokens charged during the iteration.
    pub cost: u64,
    pub cumulative_cost: u64,
    pub reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    BudgetExhausted,
    IterationCap,
    FixturesExhausted,
    GeneratorFailed,
}

/// Everything a run records, in the order it happened. Serialized as JSON
/// lines, one event per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Initial {
        fitness: f64,
        cost: u64,
        rendered_hash: String,
    },
    Iteration(IterationTrace),
    Finish {
        termination: Termination,
        incumbent_fitness: f64,
        total_cost: u64,
    },
}

/// The trace of one run: the zero-shot record followed by its iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub initial_fitness: f64,
    pub initial_cost: u64,
    pub iterations: Vec<IterationTrace>,
}

impl RunTrace {
    pub fn from_events(events: &[TraceEvent]) -> Option<Self> {
        let mut trace = None;
        for e in events {
            match e {
                TraceEvent::Initial { fitness, cost, .. } => {
                    trace = Some(RunTrace {
                        initial_fitness: *fitness,
                        initial_cost: *cost,
                        iterations: Vec::new(),
                    })
                }
                TraceEvent::Iteration(it) => trace.as_mut()?.iterations.push(it.clone()),
                TraceEvent::Finish { .. } => {}
            }
        }
        trace
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> io::Result<Option<Self>> {
        let mut events = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: TraceEvent = serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            events.push(e);
        }
        Ok(Self::from_events(&events))
    }

    /// Incumbent fitness after each iteration, starting with the zero-shot.
    pub fn incumbent_series(&self) -> Vec<f64> {
        std::iter::once(self.initial_fitness)
            .chain(self.iterations.iter().map(|i| i.incumbent_fitness))
            .collect()
    }
}

pub fn write_jsonl<W: Write>(events: &[TraceEvent], mut out: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("initial generation failed: {0}")]
    Initial(String),
    #[error("initial program is unusable: {0}")]
    InitialProgram(GraphError),
}

/// Mutable state of a run.
#[derive(Debug, Clone)]
pub struct SearchState {
    pub graph: CodeGraph,
    /// Evaluated algorithms in evaluation order.
    pub evaluated: Vec<Evaluated>,
    seen: HashSet<String>,
    /// Every correction proposed so far, rejected ones included.
    pub corrections: Vec<Correction>,
    /// Applied corrections in application order: the surrogate's features.
    pub features: Vec<CorrectionId>,
    pub model: Option<RandomForest>,
    /// Index into `evaluated`.
    pub incumbent: usize,
    pub summary: String,
    pub ledger: BudgetLedger,
    pub iteration: usize,
    next_id: u32,
    retrains: usize,
}

impl SearchState {
    fn new(graph: CodeGraph, budget: u64) -> Self {
        Self {
            graph,
            evaluated: Vec::new(),
            seen: HashSet::new(),
            corrections: Vec::new(),
            features: Vec::new(),
            model: None,
            incumbent: 0,
            summary: String::new(),
            ledger: BudgetLedger::new(budget),
            iteration: 0,
            next_id: 1,
            retrains: 0,
        }
    }

    pub fn incumbent(&self) -> &Evaluated {
        &self.evaluated[self.incumbent]
    }

    pub fn presence(&self, corrections: &BTreeSet<CorrectionId>) -> PresenceVector {
        PresenceVector::from_set(&self.features, corrections)
    }

    fn record(&mut self, path: Path, corrections: BTreeSet<CorrectionId>, record: FitnessRecord) {
        self.seen.insert(record.rendered_hash.clone());
        // strictly better only: ties keep the earlier evaluation
        if self.evaluated.is_empty() || record.fitness > self.incumbent().record.fitness {
            self.incumbent = self.evaluated.len();
        }
        self.evaluated.push(Evaluated {
            path: self.graph.stamp(path),
            corrections,
            record,
            iteration: self.iteration,
        });
    }

    fn correction(&self, id: CorrectionId) -> &Correction {
        self.corrections.iter().find(|c| c.id == id).expect("known correction")
    }
}

/// The evaluated algorithm with the highest fitness; ties go to the one
/// evaluated first.
pub fn select_reference(state: &SearchState) -> Path {
    let mut best = 0;
    for (i, e) in state.evaluated.iter().enumerate() {
        if e.record.fitness > state.evaluated[best].record.fitness {
            best = i;
        }
    }
    state.graph.refresh(&state.evaluated[best].path)
}

/// A candidate chosen for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCandidate {
    pub path: Path,
    pub rendered: String,
    pub corrections: BTreeSet<CorrectionId>,
}

/// Exploration set (the correction applied to the best evaluated
/// algorithms in its domain) and exploitation set (unevaluated paths ranked
/// by the surrogate). Both skip anything already evaluated or already
/// chosen; when one set runs short the other may take up the slack, up to
/// `n_eval` in total.
pub fn build_eval_sets(
    state: &SearchState,
    correction: CorrectionId,
    n_eval: usize,
    pool_size: usize,
    pool_seed: u64,
) -> (Vec<EvalCandidate>, Vec<EvalCandidate>) {
    let graph = &state.graph;
    let half = n_eval / 2;
    let mut taken: HashSet<String> = HashSet::new();

    let mut exploration = Vec::new();
    if let Some(domain) = domain_of(state.correction(correction)) {
        let mut order: Vec<usize> = (0..state.evaluated.len()).collect();
        // fitness descending, earlier evaluation first among equals
        order.sort_by(|&a, &b| {
            state.evaluated[b]
                .record
                .fitness
                .total_cmp(&state.evaluated[a].record.fitness)
                .then(a.cmp(&b))
        });
        for i in order {
            if exploration.len() == n_eval {
                break;
            }
            let Some(path) = domain.apply(graph, &state.evaluated[i].path) else {
                continue;
            };
            if let Some(c) = fresh_candidate(state, &mut taken, path) {
                exploration.push(c);
            }
        }
    }

    let quota = n_eval - exploration.len().min(half);
    let mut exploitation = Vec::new();
    if quota > 0 {
        let pool = graph.candidate_pool(pool_size, pool_seed);
        let sets: Vec<BTreeSet<CorrectionId>> = pool.iter().map(|p| graph.corrections_on(p)).collect();
        let order = match &state.model {
            Some(model) => {
                let width = model.feature_count;
                let rows: Vec<Vec<f64>> = sets
                    .iter()
                    .map(|s| {
                        let mut f = state.presence(s).features();
                        f.truncate(width);
                        f
                    })
                    .collect();
                let scores: Vec<f64> = rows.iter().map(|r| model.predict(r)).collect();
                top_k(&scores, scores.len())
            }
            None => (0..pool.len()).collect(),
        };
        for i in order {
            if exploitation.len() == quota {
                break;
            }
            if let Some(c) = fresh_candidate(state, &mut taken, pool[i].clone()) {
                exploitation.push(c);
            }
        }
    }
    exploration.truncate(n_eval - exploitation.len());
    (exploration, exploitation)
}

fn fresh_candidate(state: &SearchState, taken: &mut HashSet<String>, path: Path) -> Option<EvalCandidate> {
    let rendered = state.graph.render(&path);
    if rendered.is_empty() {
        return None;
    }
    let key = dedupe_key(&rendered);
    if state.seen.contains(&key) || !taken.insert(key) {
        return None;
    }
    Some(EvalCandidate {
        corrections: state.graph.corrections_on(&path),
        path,
        rendered,
    })
}

/// Deterministic sub-seed for the `parts` stream of a run.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed;
    for &p in parts {
        x = splitmix(x ^ splitmix(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    splitmix(x)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Final state of a run.
#[derive(Debug)]
pub struct SearchOutcome {
    pub state: SearchState,
    pub events: Vec<TraceEvent>,
    pub trace: Vec<IterationTrace>,
    pub termination: Termination,
    /// Credit of every applied correction under the final surrogate.
    pub credit: CreditReport,
}

impl SearchOutcome {
    pub fn incumbent(&self) -> &Evaluated {
        self.state.incumbent()
    }

    pub fn incumbent_program(&self) -> String {
        self.state.graph.render(&self.state.graph.refresh(&self.incumbent().path))
    }
}

/// The search engine, bound to one generator and one fitness service.
pub struct Search<'a, G: Generator + ?Sized, E: Evaluator> {
    config: SearchConfig,
    problem: ProblemContext,
    generator: &'a mut G,
    fitness: &'a mut FitnessService<E>,
    seed: u64,
}

impl<'a, G: Generator + ?Sized, E: Evaluator> Search<'a, G, E> {
    pub fn new(
        config: SearchConfig,
        problem: ProblemContext,
        generator: &'a mut G,
        fitness: &'a mut FitnessService<E>,
        seed: u64,
    ) -> Self {
        Self {
            config,
            problem,
            generator,
            fitness,
            seed,
        }
    }

    pub fn run(mut self) -> Result<SearchOutcome, SearchError> {
        self.config.validate().map_err(SearchError::Config)?;
        let initial = self
            .generator
            .generate_initial(&self.problem)
            .map_err(|e| SearchError::Initial(e.message))?;
        let program = extract_program(&initial.payload);
        if program.trim().is_empty() {
            return Err(SearchError::Initial("empty program".into()));
        }
        let graph = CodeGraph::new(&program).map_err(SearchError::InitialProgram)?;
        let mut state = SearchState::new(graph, self.config.budget);
        state.ledger.charge(0, QueryKind::Initial, initial.cost.total);

        let root = state.graph.root_path();
        let (record, _) = self.fitness.evaluate(&root.id(), &program, &BTreeSet::new());
        let mut events = vec![TraceEvent::Initial {
            fitness: record.fitness,
            cost: initial.cost.total,
            rendered_hash: record.rendered_hash.clone(),
        }];
        state.record(root, BTreeSet::new(), record);

        let mut trace = Vec::new();
        let termination = loop {
            if !state.ledger.can_issue() {
                break Termination::BudgetExhausted;
            }
            if self.config.iterations.is_some_and(|cap| state.iteration >= cap) {
                break Termination::IterationCap;
            }
            state.iteration += 1;
            match self.iteration_step(&mut state) {
                Step::Done(it) => {
                    events.push(TraceEvent::Iteration(it.clone()));
                    trace.push(it);
                }
                Step::Stop(reason, it) => {
                    if let Some(it) = it {
                        events.push(TraceEvent::Iteration(it.clone()));
                        trace.push(it);
                    }
                    break reason;
                }
            }
        };
        events.push(TraceEvent::Finish {
            termination,
            incumbent_fitness: state.incumbent().record.fitness,
            total_cost: state.ledger.spent(),
        });
        let credit = self.credit(&state, u64::MAX).unwrap_or_default();
        for entry in &credit.entries {
            if let Some(c) = state.corrections.iter_mut().find(|c| c.id == entry.correction_id) {
                c.delta = entry.delta;
            }
        }
        Ok(SearchOutcome {
            state,
            events,
            trace,
            termination,
            credit,
        })
    }

    fn iteration_step(&mut self, state: &mut SearchState) -> Step {
        let t = state.iteration;
        let spent_before = state.ledger.spent();
        let reference = select_reference(state);
        let reference_text = state.graph.render(&reference);
        let summary = (self.config.variant == Variant::Guided).then_some(state.summary.as_str());
        let response = self.generator.generate_corrections(&self.problem, &reference_text, summary);
        let mut it = IterationTrace {
            iteration: t,
            proposed: 0,
            applied: 0,
            rejected: 0,
            evaluations: 0,
            retrains: 0,
            new_paths: 0,
            incumbent_fitness: state.incumbent().record.fitness,
            cost: 0,
            cumulative_cost: 0,
            reference: reference.id(),
        };
        let finish = |it: &mut IterationTrace, state: &SearchState| {
            it.incumbent_fitness = state.incumbent().record.fitness;
            it.cumulative_cost = state.ledger.spent();
            it.cost = it.cumulative_cost - spent_before;
        };
        let payload = match response {
            Ok(r) => {
                state.ledger.charge(t, QueryKind::Corrections, r.cost.total);
                if state.ledger.exhausted() {
                    // the reply was not paid for within the budget
                    finish(&mut it, state);
                    return Step::Stop(Termination::BudgetExhausted, None);
                }
                r.payload
            }
            Err(e) => {
                state.ledger.charge(t, QueryKind::Corrections, e.cost.total);
                finish(&mut it, state);
                return match e.kind {
                    GeneratorErrorKind::Exhausted => Step::Stop(Termination::FixturesExhausted, None),
                    GeneratorErrorKind::Transport => Step::Stop(Termination::GeneratorFailed, Some(it)),
                    GeneratorErrorKind::BadResponse => Step::Done(it),
                };
            }
        };

        let batch = parse_corrections(&payload, state.next_id).unwrap_or_default();
        state.next_id += batch.len() as u32;
        it.proposed = batch.len();
        let mut batch_ids = Vec::new();
        for (k, mut correction) in batch.into_iter().enumerate() {
            batch_ids.push(correction.id);
            if correction.status != CorrectionStatus::Pending {
                it.rejected += 1;
                state.corrections.push(correction);
                continue;
            }
            let applied = apply_correction(&mut state.graph, &mut correction, &reference);
            let id = correction.id;
            state.corrections.push(correction);
            let Ok(applied) = applied else {
                it.rejected += 1;
                continue;
            };
            it.applied += 1;
            it.new_paths = it.new_paths.saturating_add(u64::try_from(applied.new_paths_lower_bound).unwrap_or(u64::MAX));
            state.features.push(id);

            let pool_seed = derive_seed(self.seed, &[1, t as u64, k as u64]);
            let (exploration, exploitation) =
                build_eval_sets(state, id, self.config.n_eval, self.config.pool_size, pool_seed);
            for c in exploration.into_iter().chain(exploitation) {
                let (record, fresh) = self.fitness.evaluate(&c.path.id(), &c.rendered, &c.corrections);
                if fresh {
                    it.evaluations += 1;
                }
                state.record(c.path, c.corrections, record);
            }
            self.retrain(state, derive_seed(self.seed, &[2, t as u64, k as u64]));
            it.retrains += 1;
        }

        if self.config.variant == Variant::Guided && state.ledger.can_issue() {
            let credit = self.credit(state, derive_seed(self.seed, &[3, t as u64])).unwrap_or_default();
            let lines: Vec<CreditLine> = batch_ids
                .iter()
                .map(|&id| {
                    let c = state.correction(id);
                    let outcome = match (&c.status, credit.delta_of(id)) {
                        (CorrectionStatus::Rejected(reason), _) => CreditOutcome::Failed(reason.clone()),
                        (_, Some(d)) => CreditOutcome::Delta(d),
                        (_, None) => CreditOutcome::Failed("too few evaluations to estimate".into()),
                    };
                    CreditLine {
                        description: c.description.clone(),
                        outcome,
                    }
                })
                .collect();
            match self.generator.update_summary(&self.problem, &state.summary, &lines) {
                Ok(r) => {
                    state.ledger.charge(t, QueryKind::Summary, r.cost.total);
                    if !state.ledger.exhausted() {
                        state.summary = r.payload;
                    }
                }
                Err(e) => state.ledger.charge(t, QueryKind::Summary, e.cost.total),
            }
        }
        finish(&mut it, state);
        Step::Done(it)
    }

    fn retrain(&self, state: &mut SearchState, seed: u64) {
        state.retrains += 1;
        let dataset: Vec<(PresenceVector, f64)> = state
            .evaluated
            .iter()
            .map(|e| (state.presence(&e.corrections), e.record.fitness))
            .collect();
        state.model = crate::surrogate::train(&dataset, &self.config.forest, seed).ok();
    }

    /// Credit of every applied correction under the current surrogate.
    fn credit(&self, state: &SearchState, seed: u64) -> Option<CreditReport> {
        let model = state.model.as_ref()?;
        let rows: Vec<Vec<f64>> = state
            .evaluated
            .iter()
            .map(|e| state.presence(&e.corrections).features())
            .collect();
        let names: Vec<(CorrectionId, String)> = state
            .features
            .iter()
            .map(|&id| (id, state.correction(id).description.clone()))
            .collect();
        let mode = if names.len() <= EXACT_MAX_FEATURES {
            ShapMode::Exact
        } else {
            ShapMode::Sampled {
                permutations: self.config.shap_permutations,
                seed,
            }
        };
        credit_report(model, &rows, &names, mode).ok()
    }
}

enum Step {
    Done(IterationTrace),
    Stop(Termination, Option<IterationTrace>),
}
