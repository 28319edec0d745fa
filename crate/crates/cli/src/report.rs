//! Evaluation reports.

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<usize>,
    pub predicted: usize,
    pub steps: usize,
    /// Credit trajectory CSV, relative to the report directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub classes: Vec<String>,
    /// Items with a known label.
    pub total: usize,
    pub correct: usize,
    pub success_rate: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub items: Vec<ItemResult>,
}

impl EvalReport {
    pub fn new(seed: u64, classes: Vec<String>, items: Vec<ItemResult>) -> Self {
        let n = classes.len();
        let mut confusion = vec![vec![0; n]; n];
        let (mut total, mut correct) = (0, 0);
        for it in &items {
            if let Some(t) = it.truth {
                confusion[t][it.predicted] += 1;
                total += 1;
                correct += usize::from(t == it.predicted);
            }
        }
        Self {
            seed,
            classes,
            total,
            correct,
            success_rate: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            confusion,
            items,
        }
    }

    pub fn summary(&self) -> String {
        format!("{}/{} correct ({:.2}%)", self.correct, self.total, 100.0 * self.success_rate)
    }
}

/// Written by `classify`; carries the config so plots can be regenerated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub config: ExperimentConfig,
    pub report: EvalReport,
}

/// Written by `pose-exp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseExperimentReport {
    pub config: ExperimentConfig,
    pub library_size: usize,
    pub histogram: EvalReport,
    pub string: EvalReport,
}
