use super::{BehaviorDataset, Label};
use crate::error::{Error, Result};

/// Parametric surrogate for the embedding change alignment training induces:
/// per behavior, sign means move apart by `kappa_sep` about their midpoint and
/// each sample's deviation from its sign mean is scaled by `kappa_var`.
pub fn apply_alignment_shift(dataset: &BehaviorDataset, kappa_sep: f64, kappa_var: f64) -> Result<BehaviorDataset> {
    for (name, k) in [("kappa_sep", kappa_sep), ("kappa_var", kappa_var)] {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Domain(format!("{name} must be finite and non-negative, got {k}")));
        }
    }
    if kappa_sep == 1.0 && kappa_var == 1.0 {
        return Ok(dataset.clone());
    }
    let d = dataset.dim();
    Ok(dataset.map_behaviors(|b| {
        let mu_plus = b.sign_mean(Label::Positive);
        let mu_minus = b.sign_mean(Label::Negative);
        let center: Vec<f64> = mu_plus.iter().zip(&mu_minus).map(|(p, m)| 0.5 * (p + m)).collect();
        let mut data = Vec::with_capacity(b.data().len());
        for (x, l) in b.iter() {
            let mu = if l == Label::Positive { &mu_plus } else { &mu_minus };
            for j in 0..d {
                data.push(center[j] + kappa_sep * (mu[j] - center[j]) + kappa_var * (x[j] - mu[j]));
            }
        }
        b.with_parts(data, b.labels().to_vec())
    }))
}

/// Swaps every positive label for negative and vice versa.
pub fn flip_labels(dataset: &BehaviorDataset) -> BehaviorDataset {
    dataset.map_behaviors(|b| b.with_parts(b.data().to_vec(), b.labels().iter().map(|l| l.flipped()).collect()))
}
