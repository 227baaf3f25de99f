//! Closed-form quantities from the learning-dynamics analysis: the weight-change
//! bound, the boundary-cosine lower bound and horizon, the margin threshold
//! for the accuracy floor, and priority levels across behaviors.

mod priority;
mod verify;

pub use priority::{first_step_improvement, priority_levels, FirstStepReport, PriorityReport};
pub use verify::{verify_trace, BoundInputs, BoundReport, CheckSeries, CheckStatus, FloorCheck, BOUND_REPORT_FORMAT};

use serde::{Deserialize, Serialize};

use crate::data::{BehaviorDataset, MomentReport};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Inputs to the weight-change bound. `β = β′ d^{-1/2}` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Params {
    pub beta_prime: f64,
    pub eta: f64,
    pub d: usize,
    pub delta: f64,
    pub c_v: f64,
    pub c_n: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub c_prime: f64,
}

impl Thm1Params {
    /// Constants taken as the smallest values the measured moments allow.
    pub fn from_moments(report: &MomentReport, beta_prime: f64, eta: f64, delta: f64, alpha: f64, c_prime: f64) -> Self {
        Self {
            beta_prime,
            eta,
            d: report.d,
            delta,
            c_v: report.c_v,
            c_n: report.c_n,
            gamma: report.gamma,
            alpha,
            c_prime,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta_prime / (self.d as f64).sqrt()
    }

    pub fn delta_admissible(&self) -> bool {
        self.delta <= 0.5
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Params {
    pub base: Thm1Params,
    pub v: f64,
    pub phi: f64,
    /// `c_n′` with `c_n = c_n′ d^{Δ−1/2}`.
    pub c_n_prime: f64,
    pub w_b_norm: f64,
}

impl Thm2Params {
    pub fn from_moments(base: Thm1Params, report: &MomentReport, v: f64, phi: f64, w_b_norm: f64) -> Self {
        let c_n_prime = report.c_n_prime_at(base.delta);
        Self { base, v, phi, c_n_prime, w_b_norm }
    }

    fn d(&self) -> f64 {
        self.base.d as f64
    }

    /// `(4 log 2)/log d ≤ v ≤ 1/2 − Δ` and `Δ ≤ 1/2 − (4 log 2)/log d`.
    pub fn in_window(&self) -> bool {
        let v_min = 4.0 * std::f64::consts::LN_2 / self.d().ln();
        self.v >= v_min && self.v <= 0.5 - self.base.delta && self.base.delta <= 0.5 - v_min
    }

    /// `1 − 13 d^{−v} − φ`.
    pub fn slack(&self) -> f64 {
        1.0 - 13.0 * self.d().powf(-self.v) - self.phi
    }
}

/// A bound value together with whether its premises hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub applicable: bool,
    /// The bound cannot exceed its starting value (non-positive slope).
    pub vacuous: bool,
}

/// `6 β′ η t d^{Δ−1/2}`.
pub fn thm1_bound(p: &Thm1Params, t: usize) -> f64 {
    6.0 * p.beta_prime * p.eta * t as f64 * (p.d as f64).powf(p.delta - 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probability {
    pub value: f64,
    pub raw: f64,
    pub clamped: bool,
}

/// `1 − 2n exp(−c′ d^{α/4}) − 4 exp(−γ d^{αΔ} / (4 c_v))`, clamped to `[0, 1]`.
pub fn thm1_probability(p: &Thm1Params, n: usize) -> Probability {
    let [first, second] = failure_terms(p, n);
    let raw = 1.0 - first - second;
    let value = raw.clamp(0.0, 1.0);
    Probability { value, raw, clamped: value != raw }
}

/// `[2n exp(−c′ d^{α/4}), 4 exp(−γ d^{αΔ} / (4 c_v))]`.
pub(crate) fn failure_terms(p: &Thm1Params, n: usize) -> [f64; 2] {
    let d = p.d as f64;
    [
        2.0 * n as f64 * (-p.c_prime * d.powf(p.alpha / 4.0)).exp(),
        4.0 * (-p.gamma * d.powf(p.alpha * p.delta) / (4.0 * p.c_v)).exp(),
    ]
}

/// `φ + (1 − 13d^{−v} − φ) β′ η t d^{Δ−1/2} / (8‖W_B‖ + 1/(24 β′ c_n′))`.
pub fn thm2_bound(p: &Thm2Params, t: usize) -> BoundValue {
    let b = &p.base;
    let slope = p.slack() * b.beta_prime * b.eta * p.d().powf(b.delta - 0.5)
        / (8.0 * p.w_b_norm + 1.0 / (24.0 * b.beta_prime * p.c_n_prime));
    BoundValue { value: p.phi + slope * t as f64, applicable: p.in_window(), vacuous: p.slack() <= 0.0 }
}

/// `d^{1/2−Δ−v} / (72 β′² η c_n′)`, unfloored.
pub fn thm2_horizon(p: &Thm2Params) -> f64 {
    let b = &p.base;
    p.d().powf(0.5 - b.delta - p.v) / (72.0 * b.beta_prime * b.beta_prime * b.eta * p.c_n_prime)
}

/// Margin `2c_n′ d^{Δ+v} (576 β′ c_n′ ‖W_B‖ + 3) / (3φ d^v + (1 − 13d^{−v} − φ))`.
pub fn thm3_threshold(p: &Thm2Params) -> BoundValue {
    let b = &p.base;
    let d = p.d();
    let denom = 3.0 * p.phi * d.powf(p.v) + p.slack();
    let value = 2.0 * p.c_n_prime * d.powf(b.delta + p.v) * (576.0 * b.beta_prime * p.c_n_prime * p.w_b_norm + 3.0) / denom;
    let premises = p.in_window() && p.phi >= 0.0 && d.powf(-p.v) < (1.0 - p.phi) / 13.0;
    BoundValue { value, applicable: premises && denom > 0.0, vacuous: denom <= 0.0 }
}

/// Fraction of samples whose signed margin along the unit `direction` is at least `threshold`.
/// Restricted to one behavior when `behavior` is given.
pub fn thm3_floor(dataset: &BehaviorDataset, direction: &[f64], threshold: f64, behavior: Option<&str>) -> Result<f64> {
    if direction.len() != dataset.dim() {
        return Err(Error::Shape { expected: dataset.dim(), got: direction.len() });
    }
    let n = norm(direction);
    if n == 0.0 {
        return Err(Error::Domain("margin direction is zero".into()));
    }
    let unit: Vec<f64> = direction.iter().map(|x| x / n).collect();
    let pool: Vec<_> = match behavior {
        Some(id) => {
            let b = dataset.behavior(id).ok_or_else(|| Error::Domain(format!("unknown behavior {id}")))?;
            b.iter().collect()
        }
        None => dataset.iter().map(|(_, x, l)| (x, l)).collect(),
    };
    let hits = pool.iter().filter(|(x, l)| l.sign() * dot(&unit, x) >= threshold).count();
    Ok(hits as f64 / pool.len() as f64)
}
