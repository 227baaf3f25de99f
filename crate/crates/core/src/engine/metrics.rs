use serde::{Deserialize, Serialize};

use super::HeadState;
use crate::data::{BehaviorDataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{cosine, dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_behavior: Vec<f64>,
    pub pooled: f64,
}

/// Predict positive iff `(W_B + 2ΔW)·g ≥ 0`; an exact zero counts as positive.
pub fn accuracy(head: &HeadState, dataset: &BehaviorDataset) -> Result<AccuracyReport> {
    head.check_dim(dataset.dim())?;
    let boundary = head.boundary();
    let mut correct_total = 0usize;
    let per_behavior = dataset
        .behaviors()
        .iter()
        .map(|b| {
            let correct = b
                .iter()
                .filter(|(x, l)| {
                    let predicted = if dot(&boundary, x) >= 0.0 { Label::Positive } else { Label::Negative };
                    predicted == *l
                })
                .count();
            correct_total += correct;
            correct as f64 / b.len() as f64
        })
        .collect();
    Ok(AccuracyReport { per_behavior, pooled: correct_total as f64 / dataset.len() as f64 })
}

/// Cosine between the boundary `W_B + 2ΔW` and `direction`.
pub fn boundary_cosine(head: &HeadState, direction: &[f64]) -> Result<f64> {
    if direction.len() != head.d {
        return Err(Error::Shape { expected: head.d, got: direction.len() });
    }
    if norm(direction) == 0.0 {
        return Err(Error::Domain("reference direction is zero".into()));
    }
    cosine(&head.boundary(), direction).ok_or(Error::UndefinedCosine)
}
