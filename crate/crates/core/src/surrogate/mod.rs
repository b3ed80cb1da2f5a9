//! Surrogate fitness model over correction-presence vectors.

pub mod credit;
pub mod forest;
pub mod shap;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use credit::{credit_report, CreditEntry, CreditReport};
pub use forest::{r_squared, top_k, ForestConfig, RandomForest, TrainError};
pub use shap::{expected_value, shapley, ShapError, ShapMode, EXACT_MAX_FEATURES};

use crate::graph::CorrectionId;

/// Which corrections an algorithm uses, indexed by the cumulative correction
/// list. Vectors built before later corrections existed are zero-extended.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PresenceVector(pub Vec<bool>);

impl PresenceVector {
    pub fn from_set(index: &[CorrectionId], used: &BTreeSet<CorrectionId>) -> Self {
        Self(index.iter().map(|c| used.contains(c)).collect())
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn zero_extended(&self, width: usize) -> Self {
        let mut bits = self.0.clone();
        if bits.len() < width {
            bits.resize(width, false);
        }
        Self(bits)
    }

    pub fn features(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(u8::from(b))).collect()
    }
}

/// Fits a fresh forest on presence vectors; all must have the same width.
pub fn train(
    dataset: &[(PresenceVector, f64)],
    config: &ForestConfig,
    seed: u64,
) -> Result<RandomForest, TrainError> {
    let rows: Vec<Vec<f64>> = dataset.iter().map(|(v, _)| v.features()).collect();
    let y: Vec<f64> = dataset.iter().map(|(_, f)| *f).collect();
    RandomForest::fit(&rows, &y, config, seed)
}
