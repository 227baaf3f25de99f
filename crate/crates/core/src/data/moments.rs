use serde::{Deserialize, Serialize};

use super::{BehaviorDataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{covariance_operator_norm, norm, sub};

/// Empirical moments of one sign of one behavior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignMoments {
    pub count: usize,
    pub mean: Vec<f64>,
    pub mean_norm: f64,
    /// `‖Σ̂‖`, power iteration on the unbiased sample covariance.
    pub cov_norm: f64,
    pub cov_norm_converged: bool,
    /// `Tr(Σ̂)`.
    pub cov_trace: f64,
    pub max_sample_norm: f64,
}

/// Moments of a behavior plus the smallest hypothesis constants they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub behavior_id: String,
    pub d: usize,
    pub n: usize,
    pub plus: SignMoments,
    pub minus: SignMoments,
    /// `b = μ̂₊ − μ̂₋`.
    pub b: Vec<f64>,
    pub b_norm: f64,
    /// `log_d ‖b‖`.
    pub delta_hat: f64,
    /// `max ‖Σ̂±‖ / √d`.
    pub c_v: f64,
    /// `max (‖μ̂±‖ + Tr(Σ̂±)^{1/2}) / √d`.
    pub c_n: f64,
    /// `c_n d^{1/2 − Δ̂}`.
    pub c_n_prime: f64,
    /// `n / √d`.
    pub gamma: f64,
}

impl MomentReport {
    pub fn max_cov_norm(&self) -> f64 {
        self.plus.cov_norm.max(self.minus.cov_norm)
    }

    /// `max (‖μ̂±‖ + Tr(Σ̂±)^{1/2})`.
    pub fn max_mean_plus_spread(&self) -> f64 {
        let f = |s: &SignMoments| s.mean_norm + s.cov_trace.sqrt();
        f(&self.plus).max(f(&self.minus))
    }

    /// `c_n′` with `c_n = c_n′ d^{Δ−1/2}` for a caller-chosen `Δ`.
    pub fn c_n_prime_at(&self, delta: f64) -> f64 {
        self.c_n * (self.d as f64).powf(0.5 - delta)
    }
}

fn sign_moments(rows: &[&[f64]], d: usize) -> SignMoments {
    let count = rows.len();
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(*r).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let cov_trace = rows
        .iter()
        .map(|r| {
            let c = sub(r, &mean);
            crate::linalg::dot(&c, &c)
        })
        .sum::<f64>()
        / (count as f64 - 1.0);
    let power = covariance_operator_norm(rows, &mean, d);
    SignMoments {
        count,
        mean_norm: norm(&mean),
        mean,
        cov_norm: power.value,
        cov_norm_converged: power.converged,
        cov_trace,
        max_sample_norm: rows.iter().map(|r| norm(r)).fold(0.0, f64::max),
    }
}

pub fn estimate_moments(dataset: &BehaviorDataset, behavior_id: &str) -> Result<MomentReport> {
    let behavior = dataset
        .behavior(behavior_id)
        .ok_or_else(|| Error::Domain(format!("unknown behavior {behavior_id}")))?;
    let d = dataset.dim();
    let split = |label| behavior.iter().filter(|(_, l)| *l == label).map(|(x, _)| x).collect::<Vec<_>>();
    let (pos, neg) = (split(Label::Positive), split(Label::Negative));
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "behavior {behavior_id} needs at least 2 samples per sign, has {} / {}",
            pos.len(),
            neg.len()
        )));
    }
    let plus = sign_moments(&pos, d);
    let minus = sign_moments(&neg, d);
    let b = sub(&plus.mean, &minus.mean);
    let b_norm = norm(&b);
    let df = d as f64;
    let sqrt_d = df.sqrt();
    let delta_hat = b_norm.ln() / df.ln();
    let spread = |s: &SignMoments| s.mean_norm + s.cov_trace.sqrt();
    let c_n = spread(&plus).max(spread(&minus)) / sqrt_d;
    let n = behavior.len();
    Ok(MomentReport {
        behavior_id: behavior_id.to_string(),
        d,
        n,
        c_v: plus.cov_norm.max(minus.cov_norm) / sqrt_d,
        c_n,
        c_n_prime: c_n * df.powf(0.5 - delta_hat),
        gamma: n as f64 / sqrt_d,
        plus,
        minus,
        b,
        b_norm,
        delta_hat,
    })
}
