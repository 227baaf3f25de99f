use serde::{Deserialize, Serialize};

use crate::chart::{ChartKind, ChartSpec, Series};
use crate::data::{BehaviorDataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{dot, sub, top_principal_axes};

/// Center and up to two unit axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    /// Sample variance along each axis.
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub behavior: String,
    pub basis: PcaBasis,
    /// Number of axes with non-negligible variance (0, 1 or 2).
    pub rank: usize,
    pub rank_deficient: bool,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<Label>,
    pub centroid_plus: [f64; 2],
    pub centroid_minus: [f64; 2],
}

impl Projection {
    pub fn centroid_distance(&self) -> f64 {
        let dx = self.centroid_plus[0] - self.centroid_minus[0];
        let dy = self.centroid_plus[1] - self.centroid_minus[1];
        dx.hypot(dy)
    }

    pub fn chart(&self, title: &str) -> ChartSpec {
        let pick = |want: Label| -> (Vec<f64>, Vec<f64>) {
            self.points.iter().zip(&self.labels).filter(|(_, l)| **l == want).map(|(p, _)| (p[0], p[1])).unzip()
        };
        let (px, py) = pick(Label::Positive);
        let (nx, ny) = pick(Label::Negative);
        ChartSpec {
            title: title.into(),
            x_label: "PC1".into(),
            y_label: "PC2".into(),
            log_x: false,
            log_y: false,
            kind: ChartKind::Scatter,
            series: vec![Series::new("+", px, py), Series::new("-", nx, ny)],
        }
    }
}

/// Flips the axis so its largest-magnitude loading is positive (first index on ties).
fn orient(mut v: Vec<f64>) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

/// Projects one behavior onto the top two principal axes of its pooled samples,
/// or onto `basis` when given (for before/after comparisons).
pub fn pca_project(dataset: &BehaviorDataset, behavior_id: &str, basis: Option<&PcaBasis>) -> Result<Projection> {
    let b = dataset
        .behavior(behavior_id)
        .ok_or_else(|| Error::Domain(format!("unknown behavior {behavior_id}")))?;
    if b.len() < 3 {
        return Err(Error::InsufficientData(format!("projection needs at least 3 samples, {behavior_id} has {}", b.len())));
    }
    let d = b.dim();
    let basis = match basis {
        Some(basis) => {
            if basis.mean.len() != d || basis.axes.iter().any(|a| a.len() != d) {
                return Err(Error::Shape { expected: d, got: basis.mean.len() });
            }
            basis.clone()
        }
        None => {
            let mut mean = vec![0.0; d];
            for (x, _) in b.iter() {
                mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= b.len() as f64);
            let centered: Vec<Vec<f64>> = b.iter().map(|(x, _)| sub(x, &mean)).collect();
            let pairs = top_principal_axes(&centered, d, 2);
            let top = pairs.first().map_or(0.0, |p| p.0.max(0.0));
            let kept: Vec<(f64, Vec<f64>)> =
                pairs.into_iter().filter(|(l, _)| top > 0.0 && *l > 1e-10 * top).collect();
            PcaBasis {
                mean,
                variances: kept.iter().map(|p| p.0).collect(),
                axes: kept.into_iter().map(|p| orient(p.1)).collect(),
            }
        }
    };
    let rank = basis.axes.len();
    let mut points = Vec::with_capacity(b.len());
    let mut labels = Vec::with_capacity(b.len());
    let (mut cp, mut cm) = ([0.0; 2], [0.0; 2]);
    let (mut np, mut nm) = (0usize, 0usize);
    for (x, l) in b.iter() {
        let c = sub(x, &basis.mean);
        let mut p = [0.0; 2];
        for (k, a) in basis.axes.iter().enumerate().take(2) {
            p[k] = dot(&c, a);
        }
        let (acc, n) = if l == Label::Positive { (&mut cp, &mut np) } else { (&mut cm, &mut nm) };
        acc[0] += p[0];
        acc[1] += p[1];
        *n += 1;
        points.push(p);
        labels.push(l);
    }
    let avg = |a: [f64; 2], n: usize| [a[0] / n as f64, a[1] / n as f64];
    Ok(Projection {
        behavior: behavior_id.into(),
        rank,
        rank_deficient: rank < 2,
        basis,
        points,
        labels,
        centroid_plus: avg(cp, np),
        centroid_minus: avg(cm, nm),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{apply_alignment_shift, generate_dataset, make_spec, Behavior, CovDescriptor, Direction};
    use crate::linalg::norm;

    #[test]
    fn point_mass_separates_along_first_axis() {
        let b = Behavior::new(
            "p",
            3,
            vec![1.0, 2.0, 0.0, 1.0, 2.0, 0.0, -1.0, 0.0, 0.0, -1.0, 0.0, 0.0],
            vec![Label::Positive, Label::Positive, Label::Negative, Label::Negative],
        )
        .unwrap();
        let ds = BehaviorDataset::new(3, vec![b]).unwrap();
        let p = pca_project(&ds, "p", None).unwrap();
        assert_eq!(p.rank, 1);
        assert!(p.rank_deficient);
        let gap = norm(&ds.behaviors()[0].mean_difference());
        assert!((p.centroid_distance() - gap).abs() < 1e-12);
        assert!(p.points.iter().all(|q| q[1] == 0.0));
    }

    #[test]
    fn fixed_basis_doubles_separation_under_shift() {
        let s = make_spec(6, 0.3, 2.0, CovDescriptor::Isotropic(0.5), CovDescriptor::Isotropic(0.5), &Direction::Seeded(2))
            .unwrap();
        let ds = generate_dataset(&[("b".into(), s)], 40, 1).unwrap();
        let before = pca_project(&ds, "b", None).unwrap();
        let shifted = apply_alignment_shift(&ds, 2.0, 0.5).unwrap();
        let after = pca_project(&shifted, "b", Some(&before.basis)).unwrap();
        assert!((after.centroid_distance() - 2.0 * before.centroid_distance()).abs() <= 1e-9);
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let s = make_spec(5, 0.2, 2.0, CovDescriptor::Isotropic(1.0), CovDescriptor::Isotropic(1.0), &Direction::Seeded(4))
            .unwrap();
        let ds = generate_dataset(&[("b".into(), s)], 30, 3).unwrap();
        let p = pca_project(&ds, "b", None).unwrap();
        for a in &p.basis.axes {
            let m = a.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(m > 0.0);
        }
        assert_eq!(p, pca_project(&ds, "b", None).unwrap());
    }

    #[test]
    fn too_few_samples() {
        let b = Behavior::new("p", 2, vec![1.0, 0.0, -1.0, 0.0], vec![Label::Positive, Label::Negative]).unwrap();
        let ds = BehaviorDataset::new(2, vec![b]).unwrap();
        assert!(matches!(pca_project(&ds, "p", None), Err(Error::InsufficientData(_))));
    }
}
