use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{thm1_bound, thm1_probability, thm2_bound, thm2_horizon, Probability, Thm1Params, Thm2Params};
use crate::data::AssumptionVerdict;
use crate::engine::TrainTrace;
use crate::error::{Error, Result};

pub const BOUND_REPORT_FORMAT: &str = "bound-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

/// Per-step comparison of an empirical quantity against a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSeries {
    pub status: CheckStatus,
    pub steps: Vec<usize>,
    pub bound: Vec<f64>,
    /// `None` where the quantity is undefined (zero boundary); such steps are skipped.
    pub empirical: Vec<Option<f64>>,
    pub ok: Vec<bool>,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorCheck {
    pub status: CheckStatus,
    pub floor: f64,
    pub final_step: usize,
    pub final_accuracy: f64,
    pub ok: bool,
}

/// Everything `verify_trace` needs besides the trace itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub thm1: Thm1Params,
    pub thm1_verdict: AssumptionVerdict,
    /// Samples in the behavior, for the failure probability.
    pub n: usize,
    /// Which behavior's cosine and accuracy columns to read.
    pub behavior_index: usize,
    pub thm2: Option<Thm2Params>,
    pub thm2_verdict: Option<AssumptionVerdict>,
    pub thm3_floor: Option<f64>,
    pub thm3_verdict: Option<AssumptionVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub format: String,
    pub hypotheses: Vec<AssumptionVerdict>,
    pub probability: Probability,
    pub weight_change: CheckSeries,
    pub horizon: Option<usize>,
    pub cosine: Option<CheckSeries>,
    pub accuracy_floor: Option<FloorCheck>,
    pub verdict: CheckStatus,
}

impl BoundReport {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn violations(&self) -> usize {
        self.weight_change.violations + self.cosine.as_ref().map_or(0, |c| c.violations)
            + self.accuracy_floor.as_ref().map_or(0, |f| usize::from(!f.ok))
    }
}

fn gate(applicable: bool, violations: usize) -> CheckStatus {
    match (applicable, violations) {
        (false, _) => CheckStatus::NotApplicable,
        (true, 0) => CheckStatus::Pass,
        _ => CheckStatus::Fail,
    }
}

pub fn verify_trace(trace: &TrainTrace, inputs: &BoundInputs) -> Result<BoundReport> {
    let k = inputs.behavior_index;
    if k >= trace.behaviors.len() {
        return Err(Error::Domain(format!("behavior index {k} out of range for {} behaviors", trace.behaviors.len())));
    }
    let mut hypotheses = vec![inputs.thm1_verdict.clone()];

    let mut weight = CheckSeries {
        status: CheckStatus::Pass,
        steps: Vec::new(),
        bound: Vec::new(),
        empirical: Vec::new(),
        ok: Vec::new(),
        violations: 0,
    };
    for r in &trace.records {
        let bound = thm1_bound(&inputs.thm1, r.step);
        let ok = r.norm_matrix <= bound;
        weight.steps.push(r.step);
        weight.bound.push(bound);
        weight.empirical.push(Some(r.norm_matrix));
        weight.ok.push(ok);
        weight.violations += usize::from(!ok);
    }
    weight.status = gate(inputs.thm1_verdict.pass, weight.violations);

    let mut horizon = None;
    let cosine = match (&inputs.thm2, &inputs.thm2_verdict) {
        (Some(p), Some(v)) => {
            hypotheses.push(v.clone());
            let h = thm2_horizon(p).floor().max(0.0) as usize;
            horizon = Some(h);
            let mut s = CheckSeries {
                status: CheckStatus::Pass,
                steps: Vec::new(),
                bound: Vec::new(),
                empirical: Vec::new(),
                ok: Vec::new(),
                violations: 0,
            };
            for r in trace.records.iter().filter(|r| r.step <= h) {
                let bound = thm2_bound(p, r.step).value;
                let c = r.cos_per_behavior[k];
                let ok = c.is_none_or(|c| c >= bound);
                s.steps.push(r.step);
                s.bound.push(bound);
                s.empirical.push(c);
                s.ok.push(ok);
                s.violations += usize::from(!ok);
            }
            s.status = gate(v.pass && p.in_window() && h >= 1, s.violations);
            Some(s)
        }
        (Some(_), None) | (None, Some(_)) => {
            return Err(Error::Domain("cosine check needs both parameters and a hypothesis verdict".into()))
        }
        (None, None) => None,
    };

    let accuracy_floor = match (inputs.thm3_floor, &inputs.thm3_verdict) {
        (Some(floor), Some(v)) => {
            hypotheses.push(v.clone());
            let last = trace.last().ok_or_else(|| Error::Domain("trace has no records".into()))?;
            let acc = last.acc_per_behavior[k];
            let ok = acc >= floor;
            Some(FloorCheck {
                status: gate(v.pass, usize::from(!ok)),
                floor,
                final_step: last.step,
                final_accuracy: acc,
                ok,
            })
        }
        (Some(_), None) | (None, Some(_)) => {
            return Err(Error::Domain("accuracy floor check needs both a floor and a hypothesis verdict".into()))
        }
        (None, None) => None,
    };

    let statuses: Vec<CheckStatus> = std::iter::once(weight.status)
        .chain(cosine.as_ref().map(|c| c.status))
        .chain(accuracy_floor.as_ref().map(|f| f.status))
        .collect();
    let verdict = if statuses.contains(&CheckStatus::Fail) {
        CheckStatus::Fail
    } else if statuses.contains(&CheckStatus::Pass) {
        CheckStatus::Pass
    } else {
        CheckStatus::NotApplicable
    };

    Ok(BoundReport {
        format: BOUND_REPORT_FORMAT.into(),
        hypotheses,
        probability: thm1_probability(&inputs.thm1, inputs.n),
        weight_change: weight,
        horizon,
        cosine,
        accuracy_floor,
        verdict,
    })
}
