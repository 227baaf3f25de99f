//! Labeled preference embeddings grouped by behavior, plus the generative
//! model, moment estimation, assumption checks, transforms and file IO.

mod assumptions;
mod io;
mod moments;
mod spec;
mod transform;

pub use assumptions::{check_assumptions, AdmissibleRanges, AssumptionParams, AssumptionVerdict, Hypothesis};
pub use io::{load_csv, load_dataset, read_dataset, save_dataset, write_dataset, FORMAT_TAG};
pub use moments::{estimate_moments, MomentReport, SignMoments};
pub use spec::{
    generate_dataset, generate_dataset_with_budget, make_spec, CovDescriptor, Direction, SubExpSpec,
    DEFAULT_ELEMENT_BUDGET,
};
pub use transform::{apply_alignment_shift, flip_labels};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which response of the pair the sample is the preferred one for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Label {
    /// `+1.0` for positive, `-1.0` for negative.
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "+",
            Label::Negative => "-",
        }
    }
}

/// One embedding `g(x)` with its preference label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    pub vector: Vec<f64>,
    pub label: Label,
    pub behavior_id: String,
}

/// All samples of one behavior, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    id: String,
    d: usize,
    data: Vec<f64>,
    labels: Vec<Label>,
}

impl Behavior {
    /// Validates dimension, finiteness, `n >= 2` and `|D+| = |D-|`.
    pub fn new(id: impl Into<String>, d: usize, data: Vec<f64>, labels: Vec<Label>) -> Result<Self> {
        let id = id.into();
        if d == 0 {
            return Err(Error::Schema("dimension must be positive".into()));
        }
        if data.len() != labels.len() * d {
            return Err(Error::Schema(format!(
                "behavior {id}: {} coordinates for {} samples of dimension {d}",
                data.len(),
                labels.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Schema(format!("behavior {id}: non-finite coordinate in sample {}", pos / d)));
        }
        if labels.len() < 2 {
            return Err(Error::InsufficientData(format!("behavior {id} has fewer than 2 samples")));
        }
        let pos = labels.iter().filter(|l| **l == Label::Positive).count();
        if 2 * pos != labels.len() {
            return Err(Error::Schema(format!(
                "behavior {id}: {pos} positive vs {} negative samples",
                labels.len() - pos
            )));
        }
        Ok(Self { id, d, data, labels })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], Label)> + '_ {
        self.data.chunks_exact(self.d).zip(self.labels.iter().copied())
    }

    /// Arithmetic mean of the samples carrying `label`.
    pub fn sign_mean(&self, label: Label) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        let mut count = 0usize;
        for (x, l) in self.iter() {
            if l == label {
                mean.iter_mut().zip(x).for_each(|(m, xi)| *m += xi);
                count += 1;
            }
        }
        if count > 0 {
            mean.iter_mut().for_each(|m| *m /= count as f64);
        }
        mean
    }

    /// `b = μ̂₊ − μ̂₋`.
    pub fn mean_difference(&self) -> Vec<f64> {
        crate::linalg::sub(&self.sign_mean(Label::Positive), &self.sign_mean(Label::Negative))
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn with_parts(&self, data: Vec<f64>, labels: Vec<Label>) -> Self {
        Self { id: self.id.clone(), d: self.d, data, labels }
    }
}

/// Labeled embeddings of dimension `d`, grouped by behavior. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorDataset {
    d: usize,
    behaviors: Vec<Behavior>,
}

impl BehaviorDataset {
    pub fn new(d: usize, behaviors: Vec<Behavior>) -> Result<Self> {
        if behaviors.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for b in &behaviors {
            if b.d != d {
                return Err(Error::Shape { expected: d, got: b.d });
            }
        }
        for (i, b) in behaviors.iter().enumerate() {
            if behaviors[..i].iter().any(|o| o.id == b.id) {
                return Err(Error::Schema(format!("duplicate behavior id {}", b.id)));
            }
        }
        Ok(Self { d, behaviors })
    }

    /// Groups samples by behavior in order of first appearance.
    pub fn from_samples(d: usize, samples: Vec<LabeledEmbedding>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut groups: Vec<(String, Vec<f64>, Vec<Label>)> = Vec::new();
        for s in samples {
            if s.vector.len() != d {
                return Err(Error::Shape { expected: d, got: s.vector.len() });
            }
            let slot = match groups.iter().position(|g| g.0 == s.behavior_id) {
                Some(i) => i,
                None => {
                    groups.push((s.behavior_id.clone(), Vec::new(), Vec::new()));
                    groups.len() - 1
                }
            };
            groups[slot].1.extend_from_slice(&s.vector);
            groups[slot].2.push(s.label);
        }
        let behaviors = groups
            .into_iter()
            .map(|(id, data, labels)| Behavior::new(id, d, data, labels))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, behaviors)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn behaviors(&self) -> &[Behavior] {
        &self.behaviors
    }

    pub fn behavior(&self, id: &str) -> Option<&Behavior> {
        self.behaviors.iter().find(|b| b.id == id)
    }

    pub fn behavior_ids(&self) -> Vec<String> {
        self.behaviors.iter().map(|b| b.id.clone()).collect()
    }

    /// Total number of samples over all behaviors.
    pub fn len(&self) -> usize {
        self.behaviors.iter().map(Behavior::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(behavior index, vector, label)` over every sample, behavior-major.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64], Label)> + '_ {
        self.behaviors
            .iter()
            .enumerate()
            .flat_map(|(bi, b)| b.iter().map(move |(x, l)| (bi, x, l)))
    }

    /// Mean of all positives minus mean of all negatives, pooled over behaviors.
    pub fn pooled_mean_difference(&self) -> Vec<f64> {
        let mut plus = vec![0.0; self.d];
        let mut minus = vec![0.0; self.d];
        let (mut np, mut nm) = (0usize, 0usize);
        for (_, x, l) in self.iter() {
            let (acc, n) = match l {
                Label::Positive => (&mut plus, &mut np),
                Label::Negative => (&mut minus, &mut nm),
            };
            acc.iter_mut().zip(x).for_each(|(a, xi)| *a += xi);
            *n += 1;
        }
        plus.iter().zip(&minus).map(|(p, m)| p / np as f64 - m / nm as f64).collect()
    }

    pub fn to_samples(&self) -> Vec<LabeledEmbedding> {
        self.behaviors
            .iter()
            .flat_map(|b| {
                b.iter().map(move |(x, l)| LabeledEmbedding {
                    vector: x.to_vec(),
                    label: l,
                    behavior_id: b.id.clone(),
                })
            })
            .collect()
    }

    pub(crate) fn map_behaviors(&self, f: impl Fn(&Behavior) -> Behavior) -> Self {
        Self { d: self.d, behaviors: self.behaviors.iter().map(f).collect() }
    }

    /// Restrict to a subset of behaviors, keeping the given order.
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let behaviors = ids
            .iter()
            .map(|id| {
                self.behavior(id)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("unknown behavior {id}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.d, behaviors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64], l: Label, b: &str) -> LabeledEmbedding {
        LabeledEmbedding { vector: v.to_vec(), label: l, behavior_id: b.into() }
    }

    #[test]
    fn groups_by_first_appearance() {
        let ds = BehaviorDataset::from_samples(
            2,
            vec![
                sample(&[1.0, 0.0], Label::Positive, "b"),
                sample(&[0.0, 1.0], Label::Positive, "a"),
                sample(&[-1.0, 0.0], Label::Negative, "b"),
                sample(&[0.0, -1.0], Label::Negative, "a"),
            ],
        )
        .unwrap();
        assert_eq!(ds.behavior_ids(), vec!["b", "a"]);
        assert_eq!(ds.behavior("b").unwrap().mean_difference(), vec![2.0, 0.0]);
        assert_eq!(ds.pooled_mean_difference(), vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_unbalanced_and_tiny() {
        let e = Behavior::new("x", 1, vec![1.0, 2.0, 3.0, 4.0], vec![Label::Positive; 4]);
        assert!(matches!(e, Err(Error::Schema(_))));
        let e = Behavior::new("x", 1, vec![1.0], vec![Label::Positive]);
        assert!(matches!(e, Err(Error::InsufficientData(_))));
        let e = Behavior::new("x", 1, vec![f64::NAN, 1.0], vec![Label::Positive, Label::Negative]);
        assert!(matches!(e, Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_dimension_mismatch_and_empty() {
        let e = BehaviorDataset::from_samples(
            2,
            vec![sample(&[1.0, 0.0], Label::Positive, "a"), sample(&[1.0], Label::Negative, "a")],
        );
        assert!(matches!(e, Err(Error::Shape { expected: 2, got: 1 })));
        assert!(matches!(BehaviorDataset::from_samples(2, vec![]), Err(Error::EmptyDataset)));
    }
}
