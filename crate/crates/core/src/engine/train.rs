use std::time::Instant;

use rand::seq::SliceRandom;

use super::loss::gradient_with_margin;
use super::{accuracy, boundary_cosine, reduced_loss, HeadState, TraceRecord, TrainConfig, TrainMode, TrainTrace, MARGIN_LIMIT};
use crate::data::{BehaviorDataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub head: HeadState,
    pub trace: TrainTrace,
}

/// Gradient descent on `ΔW` from zero (and `W_B` per `config.init`).
///
/// `reference` gives one direction per behavior for the boundary-cosine
/// column; each behavior's own `μ̂₊ − μ̂₋` is used when it is absent.
pub fn train(dataset: &BehaviorDataset, config: &TrainConfig, reference: Option<&[Vec<f64>]>) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = dataset.dim();
    let references: Vec<Vec<f64>> = match reference {
        Some(r) => {
            if r.len() != dataset.behaviors().len() {
                return Err(Error::Domain(format!(
                    "{} reference directions for {} behaviors",
                    r.len(),
                    dataset.behaviors().len()
                )));
            }
            if let Some(bad) = r.iter().find(|v| v.len() != d) {
                return Err(Error::Shape { expected: d, got: bad.len() });
            }
            r.to_vec()
        }
        None => dataset.behaviors().iter().map(|b| b.mean_difference()).collect(),
    };

    let mut head = match &config.init {
        None => HeadState::zero(d),
        Some(init) => {
            let target = init.target.clone().unwrap_or_else(|| dataset.pooled_mean_difference());
            if target.len() != d {
                return Err(Error::Shape { expected: d, got: target.len() });
            }
            HeadState::with_random_boundary(&target, init.norm, init.cosine, init.seed)?
        }
    };

    let samples: Vec<(&[f64], Label)> = dataset.iter().map(|(_, x, l)| (x, l)).collect();
    let mut trace = TrainTrace::new(config.clone(), dataset.behavior_ids());
    let started = Instant::now();

    let mut rng = stream(config.seed, 0);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = samples.len();
    let mut batch: Vec<(&[f64], Label)> = Vec::new();

    for t in 0..=config.steps {
        let (grad, margin) = match config.mode {
            TrainMode::FullBatchGd => gradient_with_margin(&head, &samples, config.beta)?,
            TrainMode::MinibatchSgd { batch_size } => {
                if cursor >= order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let end = (cursor + batch_size).min(order.len());
                batch.clear();
                batch.extend(order[cursor..end].iter().map(|&i| samples[i]));
                cursor = end;
                let (g, m) = gradient_with_margin(&head, &batch, config.beta)?;
                let full = if t % config.record_every == 0 || t == config.steps {
                    max_margin(&head, &samples, config.beta)
                } else {
                    m
                };
                (g, m.max(full))
            }
        };
        if margin > MARGIN_LIMIT || !margin.is_finite() {
            return Err(Error::Diverged {
                step: t,
                reason: format!("|2β ΔW·g| reached {margin:.3e} (limit {MARGIN_LIMIT})"),
                trace: Box::new(trace),
            });
        }
        if t % config.record_every == 0 || t == config.steps {
            let rec = record(&head, dataset, config.beta, &references, started)?;
            if !rec.loss.is_finite() {
                return Err(Error::Diverged { step: t, reason: "non-finite loss".into(), trace: Box::new(trace) });
            }
            trace.records.push(rec);
            if config.record_weights {
                trace.weights.push(head.delta_w.clone());
            }
        }
        if t == config.steps {
            break;
        }
        head.delta_w.iter_mut().zip(&grad).for_each(|(w, g)| *w -= config.eta * g);
        head.step += 1;
        if head.delta_w.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { step: t + 1, reason: "non-finite weights".into(), trace: Box::new(trace) });
        }
    }
    Ok(TrainOutcome { head, trace })
}

fn max_margin(head: &HeadState, samples: &[(&[f64], Label)], beta: f64) -> f64 {
    samples.iter().map(|(x, _)| (2.0 * beta * dot(&head.delta_w, x)).abs()).fold(0.0, f64::max)
}

fn record(
    head: &HeadState,
    dataset: &BehaviorDataset,
    beta: f64,
    references: &[Vec<f64>],
    started: Instant,
) -> Result<TraceRecord> {
    let loss = reduced_loss(head, dataset, beta)?;
    let acc = accuracy(head, dataset)?;
    let norm_dw = norm(&head.delta_w);
    Ok(TraceRecord {
        step: head.step,
        loss: loss.overall,
        loss_per_behavior: loss.per_behavior,
        norm_dw,
        norm_matrix: std::f64::consts::SQRT_2 * norm_dw,
        cos_per_behavior: references.iter().map(|r| boundary_cosine(head, r).ok()).collect(),
        acc_per_behavior: acc.per_behavior,
        acc_pooled: acc.pooled,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{flip_labels, generate_dataset, make_spec, CovDescriptor, Direction};

    fn data(seed: u64, sigma2: f64) -> BehaviorDataset {
        let s = make_spec(8, 0.4, 2.0, CovDescriptor::Isotropic(sigma2), CovDescriptor::Isotropic(sigma2), &Direction::Seeded(seed))
            .unwrap();
        generate_dataset(&[("b".into(), s)], 40, seed).unwrap()
    }

    #[test]
    fn first_step_is_quarter_eta_beta_mean_gap() {
        let ds = data(1, 1.0);
        let (beta, eta) = (0.3, 0.7);
        let out = train(&ds, &TrainConfig::full_batch(beta, eta, 1), None).unwrap();
        let b = ds.pooled_mean_difference();
        for (w, bi) in out.head.delta_w.iter().zip(&b) {
            assert!((w - eta * beta / 4.0 * bi).abs() <= 1e-10 * (eta * beta / 4.0 * bi).abs().max(1e-300));
        }
    }

    #[test]
    fn point_mass_is_separated_after_one_step() {
        let ds = data(2, 0.0);
        let out = train(&ds, &TrainConfig::full_batch(0.5, 0.5, 1), None).unwrap();
        assert_eq!(out.trace.records[0].acc_pooled, 0.5);
        assert_eq!(out.trace.records[1].acc_pooled, 1.0);
    }

    #[test]
    fn zero_learning_rate_is_flat() {
        let ds = data(3, 1.0);
        let out = train(&ds, &TrainConfig::full_batch(0.5, 0.0, 5), None).unwrap();
        assert_eq!(out.trace.records.len(), 6);
        for r in &out.trace.records {
            assert!((r.loss - std::f64::consts::LN_2).abs() <= 1e-12);
            assert_eq!(r.norm_dw, 0.0);
        }
    }

    #[test]
    fn record_every_keeps_final_step() {
        let ds = data(4, 1.0);
        let mut c = TrainConfig::full_batch(0.5, 0.1, 7);
        c.record_every = 3;
        let out = train(&ds, &c, None).unwrap();
        let steps: Vec<usize> = out.trace.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 3, 6, 7]);
    }

    #[test]
    fn flip_negates_weights_bitwise() {
        let ds = data(5, 1.0);
        let mut c = TrainConfig::full_batch(0.4, 0.9, 25);
        c.record_weights = true;
        let a = train(&ds, &c, None).unwrap();
        let b = train(&flip_labels(&ds), &c, None).unwrap();
        for (wa, wb) in a.trace.weights.iter().zip(&b.trace.weights) {
            // signed zeros at t=0 are the same starting point
            assert!(wa.iter().zip(wb).all(|(x, y)| x.to_bits() == (-y).to_bits() || (*x == 0.0 && *y == 0.0)));
        }
    }

    #[test]
    fn minibatch_is_seed_deterministic() {
        let ds = data(6, 1.0);
        let mut c = TrainConfig::full_batch(0.4, 0.5, 30);
        c.mode = TrainMode::MinibatchSgd { batch_size: 8 };
        c.seed = 11;
        let a = train(&ds, &c, None).unwrap();
        let b = train(&ds, &c, None).unwrap();
        assert_eq!(a.head, b.head);
        assert_eq!(a.trace.to_csv_string(), b.trace.to_csv_string());
        c.seed = 12;
        let other = train(&ds, &c, None).unwrap();
        assert_ne!(other.head, a.head);
    }

    #[test]
    fn huge_step_diverges_with_partial_trace() {
        let ds = data(7, 1.0);
        let err = train(&ds, &TrainConfig::full_batch(50.0, 1e6, 10), None).unwrap_err();
        match err {
            Error::Diverged { step, trace, .. } => {
                assert!(step >= 1);
                assert!(!trace.records.is_empty());
                assert!(trace.records.iter().all(|r| r.loss.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn loss_decreases_under_full_batch() {
        let ds = data(8, 1.0);
        let out = train(&ds, &TrainConfig::full_batch(0.5, 0.5, 100), None).unwrap();
        for w in out.trace.records.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-12);
        }
    }
}
