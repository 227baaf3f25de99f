use serde::{Deserialize, Serialize};

use super::MomentReport;
use crate::error::{Error, Result};

/// User-chosen quantities the bound hypotheses are checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionParams {
    pub beta_prime: f64,
    pub eta: f64,
    /// Variance exponent of the cosine and accuracy results.
    #[serde(default)]
    pub v: Option<f64>,
    /// Initial cosine between the boundary and `μ₊ − μ₋`.
    #[serde(default)]
    pub phi: Option<f64>,
    /// Probability constant; carried along, never checked.
    #[serde(default = "default_c_prime")]
    pub c_prime: f64,
    /// Distinguishability to test with. Defaults to the measured `Δ̂`.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Optional cap on `c_v`; when set the covariance-norm hypothesis is checked.
    #[serde(default)]
    pub c_v_max: Option<f64>,
}

fn default_c_prime() -> f64 {
    1.0
}

impl AssumptionParams {
    pub fn new(beta_prime: f64, eta: f64) -> Self {
        Self { beta_prime, eta, v: None, phi: None, c_prime: 1.0, delta: None, c_v_max: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub name: String,
    pub measured: f64,
    pub relation: String,
    pub required: f64,
    pub pass: bool,
}

impl Hypothesis {
    fn le(name: &str, measured: f64, required: f64) -> Self {
        Self { name: name.into(), measured, relation: "<=".into(), required, pass: measured <= required }
    }

    fn lt(name: &str, measured: f64, required: f64) -> Self {
        Self { name: name.into(), measured, relation: "<".into(), required, pass: measured < required }
    }

    fn ge(name: &str, measured: f64, required: f64) -> Self {
        Self { name: name.into(), measured, relation: ">=".into(), required, pass: measured >= required }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRanges {
    /// `(4 log 2) / log d`.
    pub v_min: f64,
    /// `1/2 − Δ`.
    pub v_max: f64,
    /// `d^{1/2−Δ−v} / (72 β′² η c_n′)`, when `v` is known.
    pub step_horizon: Option<f64>,
    /// Largest `η` with `β′² η c_n² ≤ 1/4`.
    pub eta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    pub theorem_id: u8,
    pub delta: f64,
    pub hypotheses: Vec<Hypothesis>,
    pub ranges: AdmissibleRanges,
    pub pass: bool,
}

impl AssumptionVerdict {
    pub fn failed(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter().filter(|h| !h.pass)
    }
}

pub fn check_assumptions(report: &MomentReport, theorem_id: u8, params: &AssumptionParams) -> Result<AssumptionVerdict> {
    if !(1..=3).contains(&theorem_id) {
        return Err(Error::Domain(format!("bound id must be 1 (weight change), 2 (cosine) or 3 (accuracy), got {theorem_id}")));
    }
    let d = report.d as f64;
    let ln_d = d.ln();
    let delta = params.delta.unwrap_or(report.delta_hat);
    let bp2 = params.beta_prime * params.beta_prime;
    let step_size = bp2 * params.eta * report.c_n * report.c_n;
    let c_n_prime = report.c_n_prime_at(delta);
    let v_min = 4.0 * std::f64::consts::LN_2 / ln_d;
    let horizon = params.v.map(|v| d.powf(0.5 - delta - v) / (72.0 * bp2 * params.eta * c_n_prime));

    let mut hyps = Vec::new();
    if theorem_id == 1 {
        hyps.push(Hypothesis::le("delta_at_most_half", delta, 0.5));
        hyps.push(Hypothesis::le("step_size", step_size, 0.25));
        if let Some(cap) = params.c_v_max {
            hyps.push(Hypothesis::le("covariance_norm", report.max_cov_norm(), cap * d.sqrt()));
        }
    } else {
        let v = params
            .v
            .ok_or_else(|| Error::Domain(format!("bound {theorem_id} needs the variance exponent v")))?;
        hyps.push(Hypothesis::le("step_size", step_size, 0.25));
        hyps.push(Hypothesis::ge("v_lower", v, v_min));
        hyps.push(Hypothesis::le("v_upper", v, 0.5 - delta));
        hyps.push(Hypothesis::le("delta_window", delta, 0.5 - v_min));
        if let Some(cap) = params.c_v_max {
            hyps.push(Hypothesis::le("covariance_norm", report.max_cov_norm(), cap * d.powf(0.5 - 2.0 * v)));
        }
        hyps.push(Hypothesis::ge("horizon_steps", horizon.unwrap_or(0.0).floor(), 1.0));
        if theorem_id == 3 {
            let phi = params
                .phi
                .ok_or_else(|| Error::Domain("the accuracy floor needs the initial cosine phi".into()))?;
            hyps.push(Hypothesis::ge("phi_nonnegative", phi, 0.0));
            hyps.push(Hypothesis::lt("variance_margin", d.powf(-v), (1.0 - phi) / 13.0));
        }
    }

    let pass = hyps.iter().all(|h| h.pass);
    Ok(AssumptionVerdict {
        theorem_id,
        delta,
        hypotheses: hyps,
        ranges: AdmissibleRanges {
            v_min,
            v_max: 0.5 - delta,
            step_horizon: horizon,
            eta_max: 0.25 / (bp2 * report.c_n * report.c_n),
        },
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SignMoments;

    fn report(d: usize, c_n: f64, delta_hat: f64) -> MomentReport {
        let sm = SignMoments {
            count: 2,
            mean: vec![0.0; d],
            mean_norm: 0.0,
            cov_norm: 1.0,
            cov_norm_converged: true,
            cov_trace: 0.0,
            max_sample_norm: 0.0,
        };
        MomentReport {
            behavior_id: "b".into(),
            d,
            n: 4,
            plus: sm.clone(),
            minus: sm,
            b: vec![0.0; d],
            b_norm: 1.0,
            delta_hat,
            c_v: 1.0,
            c_n,
            c_n_prime: c_n,
            gamma: 1.0,
        }
    }

    #[test]
    fn minimal_v_for_4096_is_one_third() {
        let r = report(4096, 0.01, 0.1);
        let p = AssumptionParams { v: Some(0.35), ..AssumptionParams::new(1.0, 0.01) };
        let v = check_assumptions(&r, 2, &p).unwrap();
        assert!((v.ranges.v_min - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn step_size_equality_passes() {
        let r = report(16, 1.0, 0.2);
        let v = check_assumptions(&r, 1, &AssumptionParams::new(1.0, 0.25)).unwrap();
        let h = v.hypotheses.iter().find(|h| h.name == "step_size").unwrap();
        assert_eq!(h.measured, 0.25);
        assert!(h.pass);
        assert!(v.pass);
        let v = check_assumptions(&r, 1, &AssumptionParams::new(1.0, 0.5)).unwrap();
        assert!(!v.pass);
    }

    #[test]
    fn phi_one_fails_accuracy_floor_for_every_v() {
        let r = report(4096, 0.01, 0.1);
        for v in [0.34, 0.36, 0.39] {
            let p = AssumptionParams { v: Some(v), phi: Some(1.0), ..AssumptionParams::new(1.0, 0.001) };
            let verdict = check_assumptions(&r, 3, &p).unwrap();
            assert!(!verdict.pass);
            assert!(verdict.failed().any(|h| h.name == "variance_margin"));
        }
    }

    #[test]
    fn delta_above_half_fails_weight_bound() {
        let r = report(16, 0.1, 0.6);
        let v = check_assumptions(&r, 1, &AssumptionParams::new(1.0, 0.1)).unwrap();
        assert!(v.failed().any(|h| h.name == "delta_at_most_half"));
    }

    #[test]
    fn rejects_unknown_bound_and_missing_params() {
        let r = report(16, 0.1, 0.2);
        assert!(matches!(check_assumptions(&r, 4, &AssumptionParams::new(1.0, 0.1)), Err(Error::Domain(_))));
        assert!(matches!(check_assumptions(&r, 0, &AssumptionParams::new(1.0, 0.1)), Err(Error::Domain(_))));
        assert!(matches!(check_assumptions(&r, 2, &AssumptionParams::new(1.0, 0.1)), Err(Error::Domain(_))));
    }

    #[test]
    fn overall_is_conjunction() {
        let r = report(4096, 0.01, 0.1);
        let p = AssumptionParams { v: Some(0.35), phi: Some(0.0), ..AssumptionParams::new(1.0, 0.001) };
        let v = check_assumptions(&r, 3, &p).unwrap();
        assert_eq!(v.pass, v.hypotheses.iter().all(|h| h.pass));
        assert!(v.pass, "{:?}", v.failed().collect::<Vec<_>>());
    }
}
