//! Reduced DPO on the two unembedding rows that the preference tokens read from.
//!
//! Only `ΔW = W_U(t)[y₊] − W_U(0)[y₊]` is stored. The `y₋` row always moves by
//! exactly `−ΔW`, so the decision boundary is `W_B + 2ΔW`.

mod loss;
mod metrics;
mod trace;
mod train;

pub use loss::{general_loss, gradient, log_sigmoid, reduced_loss, sigmoid, LossBreakdown, UnembeddingPair, MARGIN_LIMIT};
pub use metrics::{accuracy, boundary_cosine, AccuracyReport};
pub use trace::{TraceRecord, TrainTrace, TRACE_FORMAT};
pub use train::{train, TrainOutcome};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::{stream, STREAM_BOUNDARY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadState {
    pub d: usize,
    pub delta_w: Vec<f64>,
    /// Initial boundary `W_U(0)[y₊] − W_U(0)[y₋]`.
    pub w_b0: Vec<f64>,
    pub step: usize,
}

impl HeadState {
    pub fn zero(d: usize) -> Self {
        Self { d, delta_w: vec![0.0; d], w_b0: vec![0.0; d], step: 0 }
    }

    pub fn with_boundary(w_b0: Vec<f64>) -> Self {
        let d = w_b0.len();
        Self { d, delta_w: vec![0.0; d], w_b0, step: 0 }
    }

    /// Random initial boundary with `‖W_B‖ = norm` and cosine `cosine` to `target`.
    pub fn with_random_boundary(target: &[f64], norm_wb: f64, cosine: f64, seed: u64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&cosine) {
            return Err(Error::Domain(format!("boundary cosine must lie in [-1, 1], got {cosine}")));
        }
        if !(norm_wb >= 0.0 && norm_wb.is_finite()) {
            return Err(Error::Domain(format!("boundary norm must be finite and non-negative, got {norm_wb}")));
        }
        let d = target.len();
        let tn = norm(target);
        if tn == 0.0 {
            return Err(Error::Domain("boundary target direction is zero".into()));
        }
        let u: Vec<f64> = target.iter().map(|x| x / tn).collect();
        // Gram-Schmidt a seeded Gaussian against the target
        let mut rng = stream(seed, STREAM_BOUNDARY);
        let mut ortho = vec![0.0; d];
        for _ in 0..16 {
            ortho.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
            let p = dot(&ortho, &u);
            ortho.iter_mut().zip(&u).for_each(|(o, ui)| *o -= p * ui);
            if norm(&ortho) > 1e-8 {
                break;
            }
        }
        let on = norm(&ortho);
        if on == 0.0 && cosine.abs() < 1.0 {
            return Err(Error::Domain("cannot build an orthogonal component in d = 1".into()));
        }
        let sin = (1.0 - cosine * cosine).max(0.0).sqrt();
        let w_b0 = u
            .iter()
            .zip(&ortho)
            .map(|(ui, oi)| norm_wb * (cosine * ui + if on > 0.0 { sin * oi / on } else { 0.0 }))
            .collect();
        Ok(Self::with_boundary(w_b0))
    }

    /// `W_B + 2ΔW`.
    pub fn boundary(&self) -> Vec<f64> {
        self.w_b0.iter().zip(&self.delta_w).map(|(b, w)| b + 2.0 * w).collect()
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if self.d != d || self.delta_w.len() != d || self.w_b0.len() != d {
            return Err(Error::Shape { expected: self.d, got: d });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    FullBatchGd,
    MinibatchSgd { batch_size: usize },
}

/// How to initialize the boundary `W_B`. Zero when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryInit {
    pub norm: f64,
    pub cosine: f64,
    pub seed: u64,
    /// Direction the cosine is measured against; defaults to the pooled `μ̂₊ − μ̂₋`.
    #[serde(default)]
    pub target: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub beta: f64,
    pub eta: f64,
    pub steps: usize,
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub init: Option<BoundaryInit>,
    /// Keep a copy of `ΔW` at every recorded step.
    #[serde(default)]
    pub record_weights: bool,
}

fn default_mode() -> TrainMode {
    TrainMode::FullBatchGd
}

fn default_record_every() -> usize {
    1
}

impl TrainConfig {
    pub fn full_batch(beta: f64, eta: f64, steps: usize) -> Self {
        Self {
            beta,
            eta,
            steps,
            mode: TrainMode::FullBatchGd,
            seed: 0,
            record_every: 1,
            init: None,
            record_weights: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be non-negative, got {}", self.eta)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if let TrainMode::MinibatchSgd { batch_size } = self.mode {
            if batch_size == 0 || batch_size % 2 != 0 {
                return Err(Error::Config(format!("batch_size must be even and positive, got {batch_size}")));
            }
        }
        Ok(())
    }
}
