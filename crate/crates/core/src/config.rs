//! TOML run configuration. Relative paths are resolved against the
//! directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitness::{
    Candidate, EvalStatus, Evaluator, InstanceSet, PenaltyConfig, Sense, SubprocessConfig,
    SubprocessEvaluator, SyntheticLandscape,
};
use crate::generator::{Fixture, Generator, LiveConfig, LiveGenerator, ProblemContext, ScriptedGenerator};
use crate::graph::CorrectionId;
use crate::search::{derive_seed, SearchConfig, Variant};
use crate::theory::{Curve, PolicyProfile};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn default_min_cost() -> u64 {
    1
}

fn default_instances() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// Replays recorded replies from a JSON array of fixtures.
    Scripted {
        fixtures: PathBuf,
        #[serde(default = "default_min_cost")]
        min_cost: u64,
    },
    Live(LiveConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvaluatorConfig {
    /// Weight `i` belongs to the `i+1`-th correction.
    Synthetic {
        #[serde(default)]
        base: f64,
        weights: Vec<f64>,
        #[serde(default)]
        pairwise: Vec<(u32, u32, f64)>,
        #[serde(default)]
        noise_sd: f64,
        /// Defaults to a value derived from the run seed.
        #[serde(default)]
        noise_seed: Option<u64>,
        #[serde(default = "default_instances")]
        instances: usize,
    },
    Subprocess {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_seconds: f64,
        #[serde(default = "default_extension")]
        program_extension: String,
        #[serde(default)]
        sense: Sense,
        /// Every regular file in this directory is one instance.
        instances_dir: PathBuf,
    },
}

fn default_timeout() -> f64 {
    60.0
}

fn default_extension() -> String {
    "py".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub search: SearchConfig,
    #[serde(default)]
    pub problem: ProblemContext,
    #[serde(default)]
    pub penalty: Option<PenaltyConfig>,
    pub generator: GeneratorConfig,
    pub evaluator: EvaluatorConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub budget: Option<u64>,
    pub iterations: Option<usize>,
    pub variant: Option<Variant>,
}

impl RunConfig {
    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(FsPath::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str, base: &FsPath) -> Result<Self, ConfigError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &FsPath) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GeneratorConfig::Scripted { fixtures, .. } = &mut self.generator {
            join(fixtures);
        }
        if let EvaluatorConfig::Subprocess { instances_dir, .. } = &mut self.evaluator {
            join(instances_dir);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.search
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[search] {e}")))?;
        match &self.evaluator {
            EvaluatorConfig::Synthetic {
                weights,
                noise_sd,
                instances,
                pairwise,
                ..
            } => {
                if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
                    return Err(ConfigError::Invalid(format!("[evaluator] weights[{i}] is not finite")));
                }
                if !(noise_sd.is_finite() && *noise_sd >= 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "[evaluator] noise_sd must be a non-negative number, got {noise_sd}"
                    )));
                }
                if *instances == 0 {
                    return Err(ConfigError::Invalid("[evaluator] instances must be positive".into()));
                }
                if let Some(i) = pairwise.iter().position(|&(a, b, w)| a == 0 || b == 0 || !w.is_finite()) {
                    return Err(ConfigError::Invalid(format!(
                        "[evaluator] pairwise[{i}] needs correction ids from 1 and a finite weight"
                    )));
                }
            }
            EvaluatorConfig::Subprocess {
                command,
                timeout_seconds,
                ..
            } => {
                if command.is_empty() {
                    return Err(ConfigError::Invalid("[evaluator] command must not be empty".into()));
                }
                if !(timeout_seconds.is_finite() && *timeout_seconds > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "[evaluator] timeout_seconds must be positive, got {timeout_seconds}"
                    )));
                }
            }
        }
        if let GeneratorConfig::Live(live) = &self.generator {
            if live.base_url.trim().is_empty() || live.model.trim().is_empty() {
                return Err(ConfigError::Invalid("[generator] base_url and model are required".into()));
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(budget) = o.budget {
            self.search.budget = budget;
        }
        if let Some(iterations) = o.iterations {
            self.search.iterations = Some(iterations);
        }
        if let Some(variant) = o.variant {
            self.search.variant = variant;
        }
    }

    /// The evaluator and its instances for a run with `seed`.
    pub fn build_evaluator(&self, seed: u64) -> Result<(AnyEvaluator, InstanceSet), ConfigError> {
        Ok(match &self.evaluator {
            EvaluatorConfig::Synthetic {
                base,
                weights,
                pairwise,
                noise_sd,
                noise_seed,
                instances,
            } => {
                let landscape = SyntheticLandscape {
                    base: *base,
                    weights: weights
                        .iter()
                        .enumerate()
                        .map(|(i, &w)| (CorrectionId(i as u32 + 1), w))
                        .collect::<BTreeMap<_, _>>(),
                    pairwise: pairwise
                        .iter()
                        .map(|&(a, b, w)| (CorrectionId(a), CorrectionId(b), w))
                        .collect(),
                    noise_sd: *noise_sd,
                    seed: noise_seed.unwrap_or_else(|| derive_seed(seed, &[5])),
                };
                (AnyEvaluator::Synthetic(landscape), InstanceSet::synthetic(*instances))
            }
            EvaluatorConfig::Subprocess {
                command,
                timeout_seconds,
                program_extension,
                sense,
                instances_dir,
            } => {
                let instances = InstanceSet::load_dir(instances_dir).map_err(|source| ConfigError::Io {
                    path: instances_dir.clone(),
                    source,
                })?;
                if instances.is_empty() {
                    return Err(ConfigError::Invalid(format!(
                        "[evaluator] no instances in {}",
                        instances_dir.display()
                    )));
                }
                let evaluator = SubprocessEvaluator::new(SubprocessConfig {
                    command: command.clone(),
                    timeout_seconds: *timeout_seconds,
                    program_extension: program_extension.clone(),
                    sense: *sense,
                });
                (AnyEvaluator::Subprocess(evaluator), instances)
            }
        })
    }

    /// Fails before any query when fixtures are unreadable or the API key is
    /// missing.
    pub fn build_generator(&self) -> Result<Box<dyn Generator + Send>, ConfigError> {
        Ok(match &self.generator {
            GeneratorConfig::Scripted { fixtures, min_cost } => {
                let text = std::fs::read_to_string(fixtures).map_err(|source| ConfigError::Io {
                    path: fixtures.clone(),
                    source,
                })?;
                let list: Vec<Fixture> = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                    path: fixtures.clone(),
                    message: e.to_string(),
                })?;
                Box::new(ScriptedGenerator::new(list, *min_cost))
            }
            GeneratorConfig::Live(live) => {
                Box::new(LiveGenerator::new(live.clone()).map_err(|e| ConfigError::Invalid(format!("[generator] {e}")))?)
            }
        })
    }
}

fn default_points() -> usize {
    2001
}

fn default_decay_x_max() -> f64 {
    1.0e6
}

/// A policy profile to analyze, with the budgets to sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub budgets: Vec<f64>,
    /// ω grid size per budget.
    #[serde(default = "default_points")]
    pub points: usize,
    /// Upper end of the decay check for bounded curves.
    #[serde(default = "default_decay_x_max")]
    pub decay_x_max: f64,
    pub profile: PolicyProfile,
    /// A second μ to compare against `profile.mu` under the same Q.
    #[serde(default)]
    pub comparison: Option<Comparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub mu: Curve,
}

impl TheoryConfig {
    pub fn load(path: &FsPath) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.to_owned(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: TheoryConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.profile
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("profile.{e}")))?;
        if let Some(c) = &self.comparison {
            c.mu
                .validate("comparison.mu")
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.budgets.is_empty() {
            return Err(ConfigError::Invalid("budgets: at least one budget is required".into()));
        }
        if let Some(i) = self
            .budgets
            .iter()
            .position(|b| !(b.is_finite() && *b >= self.profile.c0))
        {
            return Err(ConfigError::Invalid(format!(
                "budgets[{i}]: must be finite and at least profile.c0 = {}",
                self.profile.c0
            )));
        }
        if self.points < 3 {
            return Err(ConfigError::Invalid(format!("points: must be at least 3, got {}", self.points)));
        }
        if !(self.decay_x_max.is_finite() && self.decay_x_max > 1.0) {
            return Err(ConfigError::Invalid(format!(
                "decay_x_max: must be finite and above 1, got {}",
                self.decay_x_max
            )));
        }
        Ok(())
    }
}

/// The evaluators a config can select.
#[derive(Debug, Clone)]
pub enum AnyEvaluator {
    Synthetic(SyntheticLandscape),
    Subprocess(SubprocessEvaluator),
}

impl Evaluator for AnyEvaluator {
    fn score(&self, candidate: &Candidate<'_>, instance: &str) -> Result<f64, EvalStatus> {
        match self {
            AnyEvaluator::Synthetic(e) => e.score(candidate, instance),
            AnyEvaluator::Subprocess(e) => e.score(candidate, instance),
        }
    }

    fn concurrent(&self) -> bool {
        match self {
            AnyEvaluator::Synthetic(e) => e.concurrent(),
            AnyEvaluator::Subprocess(e) => e.concurrent(),
        }
    }
}
