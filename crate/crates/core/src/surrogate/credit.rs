//! Per-correction credit: how much a correction's Shapley value differs
//! between evaluated algorithms that use it and those that do not.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::forest::RandomForest;
use super::shap::{shapley, ShapError, ShapMode};
use crate::graph::CorrectionId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreditEntry {
    pub correction_id: CorrectionId,
    pub description: String,
    /// `None` when either side of the split is empty.
    pub delta: Option<f64>,
    pub support_with: usize,
    pub support_without: usize,
}

impl CreditEntry {
    pub fn is_insufficient(&self) -> bool {
        self.delta.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CreditReport {
    pub entries: Vec<CreditEntry>,
}

/// Mean attribution of each feature over rows having it minus over rows
/// lacking it. `features[i]` names feature column `i`.
pub fn credit_report(
    model: &RandomForest,
    rows: &[Vec<f64>],
    features: &[(CorrectionId, String)],
    mode: ShapMode,
) -> Result<CreditReport, ShapError> {
    assert_eq!(features.len(), model.feature_count, "one name per feature");
    let p = model.feature_count;
    let mut sum_with = vec![0.0; p];
    let mut sum_without = vec![0.0; p];
    let mut n_with = vec![0usize; p];
    let mut n_without = vec![0usize; p];
    for x in rows {
        let psi = shapley(model, x, mode)?;
        for i in 0..p {
            if x[i] > 0.5 {
                sum_with[i] += psi[i];
                n_with[i] += 1;
            } else {
                sum_without[i] += psi[i];
                n_without[i] += 1;
            }
        }
    }
    let entries = features
        .iter()
        .enumerate()
        .map(|(i, (id, description))| CreditEntry {
            correction_id: *id,
            description: description.clone(),
            delta: (n_with[i] > 0 && n_without[i] > 0)
                .then(|| sum_with[i] / n_with[i] as f64 - sum_without[i] / n_without[i] as f64),
            support_with: n_with[i],
            support_without: n_without[i],
        })
        .collect();
    Ok(CreditReport { entries })
}

impl CreditReport {
    pub fn delta_of(&self, id: CorrectionId) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.correction_id == id)
            .and_then(|e| e.delta)
    }

    /// CSV with columns correction_id, description, delta, support_with,
    /// support_without; `delta` is empty when there is not enough data.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["correction_id", "description", "delta", "support_with", "support_without"])?;
        for e in &self.entries {
            w.write_record([
                e.correction_id.to_string(),
                e.description.clone(),
                e.delta.map(|d| format!("{d:.12}")).unwrap_or_default(),
                e.support_with.to_string(),
                e.support_without.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
