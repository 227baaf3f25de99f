use serde::{Deserialize, Serialize};

use super::HeadState;
use crate::data::{BehaviorDataset, Label};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Largest `|2β ΔW·g|` training tolerates before declaring divergence.
pub const MARGIN_LIMIT: f64 = 700.0;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log σ(z)`, accurate in both tails.
#[inline]
pub fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean over every sample.
    pub overall: f64,
    /// Mean within each behavior, in dataset order.
    pub per_behavior: Vec<f64>,
}

/// `mean −log σ(2β s (ΔW·g))` with `s = ±1` from the label.
pub fn reduced_loss(head: &HeadState, dataset: &BehaviorDataset, beta: f64) -> Result<LossBreakdown> {
    head.check_dim(dataset.dim())?;
    let two_beta = 2.0 * beta;
    let mut total = 0.0;
    let mut per_behavior = Vec::with_capacity(dataset.behaviors().len());
    for b in dataset.behaviors() {
        let sum: f64 = b
            .iter()
            .map(|(x, l)| -log_sigmoid(l.sign() * (two_beta * dot(&head.delta_w, x))))
            .sum();
        total += sum;
        per_behavior.push(sum / b.len() as f64);
    }
    Ok(LossBreakdown { overall: total / dataset.len() as f64, per_behavior })
}

/// Gradient of the mean loss over `batch` with respect to the `y₊` row.
/// The `y₋` row receives the negation; every other row receives zero.
pub fn gradient(head: &HeadState, batch: &[(&[f64], Label)], beta: f64) -> Result<Vec<f64>> {
    let (g, _) = gradient_with_margin(head, batch, beta)?;
    Ok(g)
}

/// Same as [`gradient`] but also returns `max |2β ΔW·g|` over the batch.
pub(crate) fn gradient_with_margin(head: &HeadState, batch: &[(&[f64], Label)], beta: f64) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::Domain("gradient of an empty batch".into()));
    }
    let mut grad = vec![0.0; head.d];
    let two_beta = 2.0 * beta;
    let mut max_margin: f64 = 0.0;
    for (x, l) in batch {
        head.check_dim(x.len())?;
        let s = l.sign();
        let m = two_beta * dot(&head.delta_w, x);
        max_margin = max_margin.max(m.abs());
        // positives: −β σ(−2βΔW·g) g ; negatives: +β σ(2βΔW·g) g
        let coeff = -beta * s * sigmoid(-(s * m));
        grad.iter_mut().zip(*x).for_each(|(gi, xi)| *gi += coeff * xi);
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((grad, max_margin))
}

/// A full unembedding matrix before and after training, `vocab x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UnembeddingPair {
    pub vocab: usize,
    pub d: usize,
    pub initial: Vec<f64>,
    pub current: Vec<f64>,
    pub y_plus: usize,
    pub y_minus: usize,
}

impl UnembeddingPair {
    /// Current matrix = `initial` with `+ΔW` on row `y_plus` and `−ΔW` on row `y_minus`.
    pub fn from_head(head: &HeadState, initial: Vec<f64>, vocab: usize, y_plus: usize, y_minus: usize) -> Result<Self> {
        let d = head.d;
        if initial.len() != vocab * d {
            return Err(Error::Shape { expected: vocab * d, got: initial.len() });
        }
        let mut current = initial.clone();
        for j in 0..d {
            current[y_plus * d + j] += head.delta_w[j];
            current[y_minus * d + j] -= head.delta_w[j];
        }
        let pair = Self { vocab, d, initial, current, y_plus, y_minus };
        pair.check()?;
        Ok(pair)
    }

    fn row<'a>(&self, m: &'a [f64], r: usize) -> &'a [f64] {
        &m[r * self.d..(r + 1) * self.d]
    }

    /// Only rows `y₊` and `y₋` may move, and by opposite amounts.
    pub fn check(&self) -> Result<()> {
        if self.vocab < 2 || self.y_plus >= self.vocab || self.y_minus >= self.vocab || self.y_plus == self.y_minus {
            return Err(Error::Contract(format!(
                "need two distinct preference tokens in a vocabulary of {}, got {} and {}",
                self.vocab, self.y_plus, self.y_minus
            )));
        }
        if self.initial.len() != self.vocab * self.d || self.current.len() != self.vocab * self.d {
            return Err(Error::Shape { expected: self.vocab * self.d, got: self.current.len() });
        }
        for r in (0..self.vocab).filter(|&r| r != self.y_plus && r != self.y_minus) {
            if self.row(&self.initial, r) != self.row(&self.current, r) {
                return Err(Error::Contract(format!("row {r} moved but is not a preference token")));
            }
        }
        let dp = crate::linalg::sub(self.row(&self.current, self.y_plus), self.row(&self.initial, self.y_plus));
        let dm = crate::linalg::sub(self.row(&self.current, self.y_minus), self.row(&self.initial, self.y_minus));
        let scale = self.current.iter().chain(&self.initial).fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        if dp.iter().zip(&dm).any(|(p, m)| (p + m).abs() > 1e-12 * scale) {
            return Err(Error::Contract("preference rows did not move by opposite amounts".into()));
        }
        Ok(())
    }

    fn log_softmax_at(&self, m: &[f64], x: &[f64], tokens: [usize; 2]) -> [f64; 2] {
        let logits: Vec<f64> = (0..self.vocab).map(|r| dot(self.row(m, r), x)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        [logits[tokens[0]] - lse, logits[tokens[1]] - lse]
    }
}

/// DPO loss evaluated through explicit softmax policies over the whole vocabulary.
pub fn general_loss(pair: &UnembeddingPair, dataset: &BehaviorDataset, beta: f64) -> Result<f64> {
    pair.check()?;
    if pair.d != dataset.dim() {
        return Err(Error::Shape { expected: pair.d, got: dataset.dim() });
    }
    let mut total = 0.0;
    for (_, x, l) in dataset.iter() {
        let (w, lo) = match l {
            Label::Positive => (pair.y_plus, pair.y_minus),
            Label::Negative => (pair.y_minus, pair.y_plus),
        };
        let [pw, pl] = pair.log_softmax_at(&pair.current, x, [w, lo]);
        let [rw, rl] = pair.log_softmax_at(&pair.initial, x, [w, lo]);
        total -= log_sigmoid(beta * ((pw - pl) - (rw - rl)));
    }
    Ok(total / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{flip_labels, Behavior};

    fn toy() -> BehaviorDataset {
        let b = Behavior::new(
            "t",
            3,
            vec![1.0, 0.5, -0.2, 0.3, 1.0, 0.0, -1.0, 0.1, 0.4, -0.2, -0.8, 0.0],
            vec![Label::Positive, Label::Positive, Label::Negative, Label::Negative],
        )
        .unwrap();
        BehaviorDataset::new(3, vec![b]).unwrap()
    }

    #[test]
    fn sigmoid_branches_agree() {
        for z in [-40.0, -3.0, -1e-9, 0.0, 1e-9, 2.5, 50.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
            assert!((log_sigmoid(z) - sigmoid(z).ln()).abs() < 1e-12);
        }
        assert_eq!(log_sigmoid(0.0), -std::f64::consts::LN_2);
        assert!(log_sigmoid(-800.0).is_finite());
    }

    #[test]
    fn zero_head_loss_is_ln2() {
        let ds = toy();
        let l = reduced_loss(&HeadState::zero(3), &ds, 0.7).unwrap();
        assert!((l.overall - std::f64::consts::LN_2).abs() <= 1e-12);
        assert!((l.per_behavior[0] - std::f64::consts::LN_2).abs() <= 1e-12);
    }

    #[test]
    fn flip_matches_negated_head() {
        let ds = toy();
        let mut h = HeadState::zero(3);
        h.delta_w = vec![0.3, -1.2, 0.8];
        let mut neg = h.clone();
        neg.delta_w.iter_mut().for_each(|x| *x = -*x);
        let a = reduced_loss(&h, &flip_labels(&ds), 0.4).unwrap();
        let b = reduced_loss(&neg, &ds, 0.4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_head_gradient_is_quarter_beta_mean_gap() {
        let ds = toy();
        let beta = 0.6;
        let batch: Vec<(&[f64], Label)> = ds.behaviors()[0].iter().collect();
        let g = gradient(&HeadState::zero(3), &batch, beta).unwrap();
        let b = ds.behaviors()[0].mean_difference();
        for (gi, bi) in g.iter().zip(&b) {
            assert!((gi - (-beta / 4.0) * bi).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_embeddings_give_zero_gradient() {
        let zero = [0.0; 3];
        let batch: Vec<(&[f64], Label)> = vec![(&zero, Label::Positive), (&zero, Label::Negative)];
        let mut h = HeadState::zero(3);
        h.delta_w = vec![1.0, 2.0, 3.0];
        assert!(gradient(&h, &batch, 0.5).unwrap().iter().all(|g| *g == 0.0));
        assert!(matches!(gradient(&h, &[], 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn general_loss_with_two_tokens_and_zero_beta() {
        let ds = toy();
        let mut h = HeadState::zero(3);
        h.delta_w = vec![0.2, -0.4, 0.9];
        let init = vec![0.1, 0.2, 0.3, -0.5, 0.4, 0.0];
        let pair = UnembeddingPair::from_head(&h, init, 2, 0, 1).unwrap();
        let g = general_loss(&pair, &ds, 1.3).unwrap();
        let r = reduced_loss(&h, &ds, 1.3).unwrap().overall;
        assert!((g - r).abs() <= 1e-10);
        let g0 = general_loss(&pair, &ds, 0.0).unwrap();
        assert!((g0 - std::f64::consts::LN_2).abs() <= 1e-15);
    }

    #[test]
    fn general_loss_rejects_foreign_row_motion() {
        let ds = toy();
        let h = HeadState::zero(3);
        let mut pair = UnembeddingPair::from_head(&h, vec![0.0; 9], 3, 0, 1).unwrap();
        pair.current[2 * 3] = 1.0;
        assert!(matches!(general_loss(&pair, &ds, 1.0), Err(Error::Contract(_))));
        let mut pair = UnembeddingPair::from_head(&h, vec![0.0; 9], 3, 0, 1).unwrap();
        pair.current[0] = 1.0;
        assert!(matches!(general_loss(&pair, &ds, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let ds = toy();
        assert!(matches!(reduced_loss(&HeadState::zero(2), &ds, 1.0), Err(Error::Shape { .. })));
    }
}
