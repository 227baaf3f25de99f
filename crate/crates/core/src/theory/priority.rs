use serde::{Deserialize, Serialize};

use crate::data::BehaviorDataset;
use crate::engine::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityReport {
    pub behaviors: Vec<String>,
    /// `b_i = μ̂₊ − μ̂₋` per behavior.
    pub b: Vec<Vec<f64>>,
    pub b_norms: Vec<f64>,
    /// `b̄ = (1/m) Σ b_i`.
    pub b_bar: Vec<f64>,
    pub b_bar_norm: f64,
    /// Index of the largest `‖b_i‖`.
    pub star_index: usize,
    /// Another behavior shares the largest norm.
    pub star_tie: bool,
    /// `P_i = (b̄·b_i) / (‖b̄‖ ‖b_*‖)`.
    pub levels: Vec<f64>,
    /// `b̄·b_i`.
    pub improvement_proxy: Vec<f64>,
}

impl PriorityReport {
    /// Behavior indices sorted by priority, highest first (stable).
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.levels.len()).collect();
        idx.sort_by(|&a, &b| self.levels[b].total_cmp(&self.levels[a]));
        idx
    }
}

pub fn priority_levels(dataset: &BehaviorDataset) -> Result<PriorityReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = dataset.dim();
    let b: Vec<Vec<f64>> = dataset.behaviors().iter().map(|x| x.mean_difference()).collect();
    let m = b.len() as f64;
    let mut b_bar = vec![0.0; d];
    for bi in &b {
        b_bar.iter_mut().zip(bi).for_each(|(s, x)| *s += x);
    }
    b_bar.iter_mut().for_each(|s| *s /= m);
    let b_bar_norm = norm(&b_bar);
    if b_bar_norm == 0.0 {
        return Err(Error::DegeneratePriority);
    }
    let b_norms: Vec<f64> = b.iter().map(|x| norm(x)).collect();
    let mut star_index = 0;
    for (i, n) in b_norms.iter().enumerate() {
        if *n > b_norms[star_index] {
            star_index = i;
        }
    }
    let star_norm = b_norms[star_index];
    let star_tie = b_norms.iter().enumerate().any(|(i, n)| i != star_index && *n == star_norm);
    let improvement_proxy: Vec<f64> = b.iter().map(|bi| dot(&b_bar, bi)).collect();
    let levels = improvement_proxy.iter().map(|p| p / (b_bar_norm * star_norm)).collect();
    Ok(PriorityReport {
        behaviors: dataset.behavior_ids(),
        b,
        b_norms,
        b_bar,
        b_bar_norm,
        star_index,
        star_tie,
        levels,
        improvement_proxy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStepReport {
    /// Mean of `s·2β(ΔW(1)·g)` within each behavior.
    pub improvements: Vec<f64>,
    /// `improvement / (b̄·b_i)`; `None` where `b̄·b_i = 0`.
    pub ratios: Vec<Option<f64>>,
    pub constant: f64,
    /// Behaviors whose ratio is undefined.
    pub undefined: Vec<usize>,
}

/// One full-batch step from zero; checks the per-behavior logit gain is a common multiple of `b̄·b_i`.
pub fn first_step_improvement(dataset: &BehaviorDataset, beta: f64, eta: f64) -> Result<FirstStepReport> {
    let report = priority_levels(dataset)?;
    let out = train(dataset, &TrainConfig::full_batch(beta, eta, 1), None)?;
    let w = &out.head.delta_w;
    let improvements: Vec<f64> = dataset
        .behaviors()
        .iter()
        .map(|b| b.iter().map(|(x, l)| l.sign() * 2.0 * beta * dot(w, x)).sum::<f64>() / b.len() as f64)
        .collect();
    let mut undefined = Vec::new();
    let ratios: Vec<Option<f64>> = improvements
        .iter()
        .zip(&report.improvement_proxy)
        .enumerate()
        .map(|(i, (imp, p))| {
            if *p == 0.0 {
                undefined.push(i);
                None
            } else {
                Some(imp / p)
            }
        })
        .collect();
    let defined: Vec<f64> = ratios.iter().flatten().copied().collect();
    let constant = *defined
        .first()
        .ok_or_else(|| Error::NotProportional("every behavior is orthogonal to the pooled update".into()))?;
    for (i, r) in ratios.iter().enumerate() {
        if let Some(r) = r {
            if (r - constant).abs() > 1e-8 * constant.abs() {
                return Err(Error::NotProportional(format!(
                    "behavior {} has ratio {r}, expected {constant}",
                    report.behaviors[i]
                )));
            }
        }
    }
    Ok(FirstStepReport { improvements, ratios, constant, undefined })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Behavior, Label};

    fn point_pair(id: &str, b: &[f64]) -> Behavior {
        let d = b.len();
        let half: Vec<f64> = b.iter().map(|x| x / 2.0).collect();
        let neg: Vec<f64> = half.iter().map(|x| -x).collect();
        let data = [half.clone(), half, neg.clone(), neg].concat();
        Behavior::new(id, d, data, vec![Label::Positive, Label::Positive, Label::Negative, Label::Negative]).unwrap()
    }

    fn ds(bs: &[(&str, Vec<f64>)]) -> BehaviorDataset {
        let d = bs[0].1.len();
        BehaviorDataset::new(d, bs.iter().map(|(id, b)| point_pair(id, b)).collect()).unwrap()
    }

    #[test]
    fn single_behavior_has_unit_priority() {
        let r = priority_levels(&ds(&[("a", vec![0.3, -1.0, 2.0])])).unwrap();
        assert!((r.levels[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_equal_norms() {
        let r = priority_levels(&ds(&[("a", vec![1.0, 0.0]), ("b", vec![0.0, 1.0])])).unwrap();
        for p in &r.levels {
            assert!((p - 0.5f64.sqrt()).abs() < 1e-12);
        }
        assert!(r.star_tie);
        assert_eq!(r.star_index, 0);
    }

    #[test]
    fn duplicates_have_unit_priority() {
        let r = priority_levels(&ds(&[("a", vec![1.0, 2.0]), ("b", vec![1.0, 2.0])])).unwrap();
        assert!(r.levels.iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn opposite_behaviors_are_degenerate() {
        let e = priority_levels(&ds(&[("a", vec![1.0, 0.0]), ("b", vec![-1.0, 0.0])])).unwrap_err();
        assert!(matches!(e, Error::DegeneratePriority));
    }

    #[test]
    fn proxy_sums_to_m_times_bbar_squared() {
        let r = priority_levels(&ds(&[("a", vec![1.0, 0.5]), ("b", vec![-0.2, 2.0]), ("c", vec![0.7, 0.7])])).unwrap();
        let s: f64 = r.improvement_proxy.iter().sum();
        assert!((s - 3.0 * r.b_bar_norm * r.b_bar_norm).abs() < 1e-12);
    }

    #[test]
    fn first_step_ratio_four_to_one() {
        let data = ds(&[("a", vec![2.0, 0.0]), ("b", vec![0.0, 1.0])]);
        let r = first_step_improvement(&data, 0.5, 0.3).unwrap();
        assert!((r.improvements[0] / r.improvements[1] - 4.0).abs() < 1e-10);
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn first_step_flags_orthogonal_proxy() {
        // b̄ = (2/3, 0, 0): behavior b is orthogonal to it
        let data = ds(&[("a", vec![1.0, 0.0, 0.0]), ("b", vec![0.0, 1.0, 0.0]), ("c", vec![1.0, -1.0, 0.0])]);
        let r = first_step_improvement(&data, 0.5, 0.3).unwrap();
        assert_eq!(r.undefined, vec![1]);
        assert_eq!(r.ratios[1], None);
    }
}
