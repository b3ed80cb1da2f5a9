//! Empirical fitness: the mean score of a candidate over a fixed instance
//! set, computed by a pluggable evaluator and cached by rendered text.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path as FsPath, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wait_timeout::ChildExt;

use crate::graph::{text_hash, CorrectionId};

/// Fixed, ordered instance documents passed verbatim to the evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSet {
    pub instances: Vec<String>,
}

impl InstanceSet {
    pub fn new(instances: Vec<String>) -> Self {
        assert!(!instances.is_empty(), "instance set must not be empty");
        Self { instances }
    }

    /// `m` placeholder instances, for evaluators that ignore content.
    pub fn synthetic(m: usize) -> Self {
        Self::new((0..m).map(|i| format!("instance-{i}")).collect())
    }

    pub fn load_dir(dir: &FsPath) -> std::io::Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let instances = files
            .iter()
            .map(std::fs::read_to_string)
            .collect::<std::io::Result<Vec<_>>>()?;
        if instances.is_empty() {
            return Err(std::io::Error::other(format!("no instances in {}", dir.display())));
        }
        Ok(Self { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    Ok,
    RuntimeError,
    Timeout,
    InvalidOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub path_id: String,
    pub rendered_hash: String,
    pub fitness: f64,
    pub per_instance_scores: Vec<f64>,
    pub status: EvalStatus,
}

/// What an evaluator sees of a candidate.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub program: &'a str,
    pub corrections: &'a BTreeSet<CorrectionId>,
}

/// Identical rendered texts share a key; no normalization is applied.
pub fn dedupe_key(rendered: &str) -> String {
    text_hash(rendered)
}

/// Scores one candidate on one instance.
pub trait Evaluator: Sync {
    fn score(&self, candidate: &Candidate<'_>, instance: &str) -> Result<f64, EvalStatus>;

    /// Whether instances of one candidate may be scored concurrently.
    fn concurrent(&self) -> bool {
        false
    }
}

/// Additive-plus-pairwise landscape over the corrections a candidate uses,
/// with optional Gaussian noise that is a fixed function of (seed, rendered
/// text, instance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLandscape {
    #[serde(default)]
    pub base: f64,
    pub weights: BTreeMap<CorrectionId, f64>,
    #[serde(default)]
    pub pairwise: Vec<(CorrectionId, CorrectionId, f64)>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticLandscape {
    pub fn additive(base: f64, weights: &[f64]) -> Self {
        Self {
            base,
            weights: weights
                .iter()
                .enumerate()
                .map(|(i, &w)| (CorrectionId(i as u32 + 1), w))
                .collect(),
            pairwise: Vec::new(),
            noise_sd: 0.0,
            seed: 0,
        }
    }

    /// Noiseless value of a correction set.
    pub fn value(&self, used: &BTreeSet<CorrectionId>) -> f64 {
        let linear: f64 = used.iter().filter_map(|c| self.weights.get(c)).sum();
        let pairs: f64 = self
            .pairwise
            .iter()
            .filter(|(a, b, _)| used.contains(a) && used.contains(b))
            .map(|(_, _, w)| w)
            .sum();
        self.base + linear + pairs
    }

    /// Noiseless value of a presence vector whose bit `i` stands for
    /// correction `i + 1`.
    pub fn value_of_bits(&self, bits: &[bool]) -> f64 {
        let used = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| CorrectionId(i as u32 + 1))
            .collect();
        self.value(&used)
    }

    /// Smallest value any correction set can reach.
    pub fn lower_bound(&self) -> f64 {
        let neg = |w: &f64| w.min(0.0);
        self.base + self.weights.values().map(neg).sum::<f64>()
            + self.pairwise.iter().map(|(_, _, w)| neg(w)).sum::<f64>()
    }
}

impl Evaluator for SyntheticLandscape {
    fn score(&self, candidate: &Candidate<'_>, instance: &str) -> Result<f64, EvalStatus> {
        let mut v = self.value(candidate.corrections);
        if self.noise_sd > 0.0 {
            let mut h = Sha256::new();
            h.update(self.seed.to_le_bytes());
            h.update(candidate.program.as_bytes());
            h.update([0xff]);
            h.update(instance.as_bytes());
            let seed: [u8; 32] = h.finalize().into();
            let mut rng = ChaCha8Rng::from_seed(seed);
            v += Normal::new(0.0, self.noise_sd).expect("finite sd").sample(&mut rng);
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// The reported objective is the score.
    #[default]
    Maximize,
    /// The score is the negated objective.
    Minimize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubprocessConfig {
    /// Program and arguments; `{program}` and `{instance}` are replaced by
    /// file paths.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
    #[serde(default = "default_extension")]
    pub program_extension: String,
    #[serde(default)]
    pub sense: Sense,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_extension() -> String {
    "py".into()
}

/// Runs a user command once per instance and reads `{"objective_value": x}`
/// from its standard output.
#[derive(Debug, Clone)]
pub struct SubprocessEvaluator {
    pub config: SubprocessConfig,
}

impl SubprocessEvaluator {
    pub fn new(config: SubprocessConfig) -> Self {
        Self { config }
    }

    fn run(&self, program: &FsPath, instance: &FsPath) -> Result<f64, EvalStatus> {
        let fill = |arg: &String| {
            arg.replace("{program}", &program.to_string_lossy())
                .replace("{instance}", &instance.to_string_lossy())
        };
        let (cmd, args) = self.config.command.split_first().ok_or(EvalStatus::RuntimeError)?;
        let mut child = Command::new(fill(cmd))
            .args(args.iter().map(fill))
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|_| EvalStatus::RuntimeError)?;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        let limit = Duration::from_secs_f64(self.config.timeout_seconds.max(0.0));
        let status = match child.wait_timeout(limit) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EvalStatus::Timeout);
            }
            Err(_) => return Err(EvalStatus::RuntimeError),
        };
        let out = reader.join().unwrap_or_default();
        if !status.success() {
            return Err(EvalStatus::RuntimeError);
        }
        let value = parse_objective(&out).ok_or(EvalStatus::InvalidOutput)?;
        Ok(match self.config.sense {
            Sense::Maximize => value,
            Sense::Minimize => -value,
        })
    }
}

/// The objective from a JSON object on stdout (whole output, or else its
/// last non-empty line).
fn parse_objective(out: &str) -> Option<f64> {
    let parse = |s: &str| -> Option<f64> {
        let v: serde_json::Value = serde_json::from_str(s.trim()).ok()?;
        v.as_object()?.get("objective_value")?.as_f64().filter(|x| x.is_finite())
    };
    parse(out).or_else(|| out.lines().rev().find(|l| !l.trim().is_empty()).and_then(parse))
}

impl Evaluator for SubprocessEvaluator {
    fn score(&self, candidate: &Candidate<'_>, instance: &str) -> Result<f64, EvalStatus> {
        let dir = tempfile::tempdir().map_err(|_| EvalStatus::RuntimeError)?;
        let program = dir.path().join(format!("candidate.{}", self.config.program_extension));
        let inst = dir.path().join("instance.txt");
        std::fs::write(&program, candidate.program).map_err(|_| EvalStatus::RuntimeError)?;
        std::fs::write(&inst, instance).map_err(|_| EvalStatus::RuntimeError)?;
        self.run(&program, &inst)
    }

    fn concurrent(&self) -> bool {
        true
    }
}

/// Fitness assigned to failed candidates: `sd_multiplier` standard
/// deviations below the worst successful fitness seen so far, but never
/// below `floor` unless the floor itself is not below that worst fitness.
/// Before any success the floor is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub floor: f64,
    pub sd_multiplier: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            floor: -1.0e9,
            sd_multiplier: 10.0,
        }
    }
}

/// Running statistics of successful fitness values.
#[derive(Debug, Clone, Default)]
struct OkStats {
    n: usize,
    mean: f64,
    m2: f64,
    worst: f64,
}

impl OkStats {
    fn push(&mut self, x: f64) {
        self.worst = if self.n == 0 { x } else { self.worst.min(x) };
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }

    fn penalty(&self, cfg: &PenaltyConfig) -> f64 {
        if self.n == 0 {
            return cfg.floor;
        }
        // a zero spread still has to land strictly below the worst success
        let spread = self.sd().max(1.0);
        let p = self.worst - cfg.sd_multiplier * spread;
        if cfg.floor < self.worst {
            p.max(cfg.floor)
        } else {
            p
        }
    }
}

/// Evaluator front-end: averages instance scores, caches results by
/// rendered text, counts fresh evaluations and appends records to an
/// optional JSONL ledger.
pub struct FitnessService<E: Evaluator> {
    evaluator: E,
    instances: InstanceSet,
    penalty: PenaltyConfig,
    cache: HashMap<String, FitnessRecord>,
    stats: OkStats,
    evaluations: usize,
    ledger: Option<BufWriter<File>>,
}

impl<E: Evaluator> FitnessService<E> {
    pub fn new(evaluator: E, instances: InstanceSet, penalty: PenaltyConfig) -> Self {
        Self {
            evaluator,
            instances,
            penalty,
            cache: HashMap::new(),
            stats: OkStats::default(),
            evaluations: 0,
            ledger: None,
        }
    }

    /// Appends every fresh record to `path` as one JSON line.
    pub fn with_ledger(mut self, path: &FsPath) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.ledger = Some(BufWriter::new(file));
        Ok(self)
    }

    pub fn evaluator(&self) -> &E {
        &self.evaluator
    }

    /// Number of candidates actually scored (cache hits excluded).
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn cached(&self, rendered: &str) -> Option<&FitnessRecord> {
        self.cache.get(&dedupe_key(rendered))
    }

    /// Returns the record and whether it was freshly computed.
    pub fn evaluate(
        &mut self,
        path_id: &str,
        rendered: &str,
        corrections: &BTreeSet<CorrectionId>,
    ) -> (FitnessRecord, bool) {
        assert!(!rendered.is_empty(), "candidate must not be empty");
        let key = dedupe_key(rendered);
        if let Some(hit) = self.cache.get(&key) {
            let mut rec = hit.clone();
            rec.path_id = path_id.to_owned();
            return (rec, false);
        }
        let candidate = Candidate {
            program: rendered,
            corrections,
        };
        let outcomes = self.score_all(&candidate);
        self.evaluations += 1;
        let failure = outcomes.iter().find_map(|o| o.err());
        let record = match failure {
            None => {
                let scores: Vec<f64> = outcomes.into_iter().map(|o| o.unwrap()).collect();
                let fitness = scores.iter().sum::<f64>() / scores.len() as f64;
                self.stats.push(fitness);
                FitnessRecord {
                    path_id: path_id.to_owned(),
                    rendered_hash: key.clone(),
                    fitness,
                    per_instance_scores: scores,
                    status: EvalStatus::Ok,
                }
            }
            Some(status) => {
                let penalty = self.stats.penalty(&self.penalty);
                FitnessRecord {
                    path_id: path_id.to_owned(),
                    rendered_hash: key.clone(),
                    fitness: penalty,
                    per_instance_scores: outcomes.iter().map(|o| o.unwrap_or(penalty)).collect(),
                    status,
                }
            }
        };
        if let Some(ledger) = &mut self.ledger {
            let line = serde_json::to_string(&record).expect("record serializes");
            // the ledger is best-effort; a full disk must not abort a search
            let _ = writeln!(ledger, "{line}").and_then(|_| ledger.flush());
        }
        self.cache.insert(key, record.clone());
        (record, true)
    }

    fn score_all(&self, candidate: &Candidate<'_>) -> Vec<Result<f64, EvalStatus>> {
        let instances = &self.instances.instances;
        if !self.evaluator.concurrent() || instances.len() == 1 {
            return instances
                .iter()
                .map(|inst| self.evaluator.score(candidate, inst))
                .collect();
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = instances
                .iter()
                .map(|inst| s.spawn(move || self.evaluator.score(candidate, inst)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(Err(EvalStatus::RuntimeError)))
                .collect()
        })
    }
}
