use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{Behavior, BehaviorDataset, Label};
use crate::error::{Error, Result};
use crate::linalg::{norm, psd_sqrt};
use crate::rng::{stream, STREAM_DIRECTION};

/// Covariance of one sign's distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovDescriptor {
    /// `σ² I`.
    Isotropic(f64),
    /// Per-coordinate variances.
    Diagonal(Vec<f64>),
    /// Row-major `d x d` symmetric PSD matrix.
    Full(Vec<f64>),
}

impl CovDescriptor {
    fn validate(&self, d: usize) -> Result<()> {
        match self {
            CovDescriptor::Isotropic(s) => {
                if !(s.is_finite() && *s >= 0.0) {
                    return Err(Error::InvalidSpec(format!("isotropic variance {s} is not PSD")));
                }
            }
            CovDescriptor::Diagonal(v) => {
                if v.len() != d {
                    return Err(Error::InvalidSpec(format!("diagonal covariance has {} entries, d = {d}", v.len())));
                }
                if v.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::InvalidSpec("diagonal covariance has a negative entry".into()));
                }
            }
            CovDescriptor::Full(m) => {
                if m.len() != d * d {
                    return Err(Error::InvalidSpec(format!("full covariance has {} entries, d = {d}", m.len())));
                }
                if m.iter().any(|x| !x.is_finite()) || psd_sqrt(m, d).is_none() {
                    return Err(Error::InvalidSpec("full covariance is not symmetric PSD".into()));
                }
            }
        }
        Ok(())
    }

    /// `Tr(Σ)`.
    pub fn trace(&self, d: usize) -> f64 {
        match self {
            CovDescriptor::Isotropic(s) => s * d as f64,
            CovDescriptor::Diagonal(v) => v.iter().sum(),
            CovDescriptor::Full(m) => (0..d).map(|i| m[i * d + i]).sum(),
        }
    }

    /// Returns a copy scaled by `factor` (covariance scales quadratically in the
    /// sample spread, so callers pass `κ²` for a spread factor `κ`).
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            CovDescriptor::Isotropic(s) => CovDescriptor::Isotropic(s * factor),
            CovDescriptor::Diagonal(v) => CovDescriptor::Diagonal(v.iter().map(|s| s * factor).collect()),
            CovDescriptor::Full(m) => CovDescriptor::Full(m.iter().map(|s| s * factor).collect()),
        }
    }
}

/// How the mean-difference direction is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Uniform random unit vector from the given seed.
    Seeded(u64),
    /// Standard basis vector `e_i`.
    Axis(usize),
    /// Caller-supplied vector, normalized.
    Vector(Vec<f64>),
}

/// Generative description of one behavior: `D± ~ E_α(μ±, Σ±, K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubExpSpec {
    pub d: usize,
    pub alpha: f64,
    pub mu_plus: Vec<f64>,
    pub mu_minus: Vec<f64>,
    pub sigma_plus: CovDescriptor,
    pub sigma_minus: CovDescriptor,
    /// ψ_α norm of a standardized coordinate. Reported only.
    pub k: f64,
    pub delta: f64,
}

/// Standard deviation of the unit-scale exponential-power law `p(x) ∝ exp(-|x|^α)`.
fn raw_std(alpha: f64) -> f64 {
    (0.5 * (ln_gamma(3.0 / alpha) - ln_gamma(1.0 / alpha))).exp()
}

/// ψ_α Orlicz norm of the standardized coordinate. With `|X|^α ~ Gamma(1/α, 1)`,
/// `E exp(|X|^α / t^α) = (1 - t^{-α})^{-1/α}`, which equals 2 at
/// `t = (1 - 2^{-α})^{-1/α}`; dividing by the standard deviation standardizes it.
pub(crate) fn psi_alpha_norm(alpha: f64) -> f64 {
    let ln_t = -(1.0 - 2f64.powf(-alpha)).ln() / alpha;
    (ln_t - raw_std(alpha).ln()).exp()
}

pub fn make_spec(
    d: usize,
    delta: f64,
    alpha: f64,
    sigma_plus: CovDescriptor,
    sigma_minus: CovDescriptor,
    direction: &Direction,
) -> Result<SubExpSpec> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension must be at least 2, got {d}")));
    }
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 2], got {alpha}")));
    }
    if !delta.is_finite() {
        return Err(Error::Domain("delta must be finite".into()));
    }
    sigma_plus.validate(d)?;
    sigma_minus.validate(d)?;

    let u = unit_direction(d, direction)?;
    let half = 0.5 * (d as f64).powf(delta);
    Ok(SubExpSpec {
        d,
        alpha,
        mu_plus: u.iter().map(|x| half * x).collect(),
        mu_minus: u.iter().map(|x| -half * x).collect(),
        sigma_plus,
        sigma_minus,
        k: psi_alpha_norm(alpha),
        delta,
    })
}

fn unit_direction(d: usize, direction: &Direction) -> Result<Vec<f64>> {
    let mut u = match direction {
        Direction::Axis(i) => {
            if *i >= d {
                return Err(Error::Domain(format!("axis {i} out of range for d = {d}")));
            }
            let mut u = vec![0.0; d];
            u[*i] = 1.0;
            return Ok(u);
        }
        Direction::Seeded(seed) => {
            let mut rng = stream(*seed, STREAM_DIRECTION);
            (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>()
        }
        Direction::Vector(v) => {
            if v.len() != d {
                return Err(Error::Shape { expected: d, got: v.len() });
            }
            v.clone()
        }
    };
    let n = norm(&u);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::Domain("direction vector must be nonzero and finite".into()));
    }
    u.iter_mut().for_each(|x| *x /= n);
    Ok(u)
}

/// Draws unit-variance symmetric coordinates with density `∝ exp(-|x|^α)`
/// (Gaussian at α = 2, Laplace at α = 1).
struct CoordSampler {
    gamma: Gamma<f64>,
    inv_alpha: f64,
    inv_std: f64,
}

impl CoordSampler {
    fn new(alpha: f64) -> Self {
        Self {
            gamma: Gamma::new(1.0 / alpha, 1.0).expect("shape is positive"),
            inv_alpha: 1.0 / alpha,
            inv_std: 1.0 / raw_std(alpha),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let magnitude = self.gamma.sample(rng).powf(self.inv_alpha) * self.inv_std;
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

enum Transform {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<f64>),
}

impl Transform {
    fn new(cov: &CovDescriptor, d: usize) -> Self {
        match cov {
            CovDescriptor::Isotropic(s) => Transform::Scalar(s.sqrt()),
            CovDescriptor::Diagonal(v) => Transform::Diagonal(v.iter().map(|s| s.sqrt()).collect()),
            CovDescriptor::Full(m) => Transform::Full(psd_sqrt(m, d).expect("validated at construction")),
        }
    }

    fn apply(&self, mean: &[f64], z: &[f64], out: &mut [f64]) {
        match self {
            Transform::Scalar(s) => {
                for ((o, m), zi) in out.iter_mut().zip(mean).zip(z) {
                    *o = m + s * zi;
                }
            }
            Transform::Diagonal(s) => {
                for (((o, m), zi), si) in out.iter_mut().zip(mean).zip(z).zip(s) {
                    *o = m + si * zi;
                }
            }
            Transform::Full(root) => {
                let d = mean.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = mean[i] + crate::linalg::dot(&root[i * d..(i + 1) * d], z);
                }
            }
        }
    }
}

/// Coordinates allowed in one generated dataset (1 GiB of f64).
pub const DEFAULT_ELEMENT_BUDGET: usize = 1 << 27;

pub fn generate_dataset(specs: &[(String, SubExpSpec)], n_per_behavior: usize, seed: u64) -> Result<BehaviorDataset> {
    generate_dataset_with_budget(specs, n_per_behavior, seed, DEFAULT_ELEMENT_BUDGET)
}

/// Samples `n/2` positives then `n/2` negatives per behavior. Behavior `i`
/// draws from stream `i` of `seed`, so the result does not depend on the
/// order in which behaviors are generated.
pub fn generate_dataset_with_budget(
    specs: &[(String, SubExpSpec)],
    n_per_behavior: usize,
    seed: u64,
    max_elements: usize,
) -> Result<BehaviorDataset> {
    if specs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_per_behavior < 2 || !n_per_behavior.is_multiple_of(2) {
        return Err(Error::Domain(format!("n_per_behavior must be even and >= 2, got {n_per_behavior}")));
    }
    let d = specs[0].1.d;
    if let Some((id, s)) = specs.iter().find(|(_, s)| s.d != d) {
        return Err(Error::Schema(format!("behavior {id} has dimension {} but {d} expected", s.d)));
    }
    let requested = n_per_behavior
        .checked_mul(d)
        .and_then(|x| x.checked_mul(specs.len()))
        .filter(|&x| x <= max_elements);
    if requested.is_none() {
        return Err(Error::Resource(format!(
            "{} behaviors x {n_per_behavior} samples x {d} dims exceeds budget of {max_elements} coordinates",
            specs.len()
        )));
    }

    let behaviors = specs
        .iter()
        .enumerate()
        .map(|(i, (id, spec))| sample_behavior(id, spec, n_per_behavior, seed, i as u64))
        .collect::<Result<Vec<_>>>()?;
    BehaviorDataset::new(d, behaviors)
}

fn sample_behavior(id: &str, spec: &SubExpSpec, n: usize, seed: u64, stream_id: u64) -> Result<Behavior> {
    let d = spec.d;
    let coords = CoordSampler::new(spec.alpha);
    let mut rng = stream(seed, stream_id);
    let mut data = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    let mut z = vec![0.0; d];
    let halves = [
        (Label::Positive, &spec.mu_plus, Transform::new(&spec.sigma_plus, d)),
        (Label::Negative, &spec.mu_minus, Transform::new(&spec.sigma_minus, d)),
    ];
    let mut row = 0;
    for (label, mean, transform) in &halves {
        for _ in 0..n / 2 {
            z.iter_mut().for_each(|zi| *zi = coords.sample(&mut rng));
            transform.apply(mean, &z, &mut data[row * d..(row + 1) * d]);
            labels.push(*label);
            row += 1;
        }
    }
    Behavior::new(id, d, data, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(s: f64) -> CovDescriptor {
        CovDescriptor::Isotropic(s)
    }

    #[test]
    fn forced_axis_places_means() {
        let s = make_spec(4, 0.5, 2.0, iso(1.0), iso(1.0), &Direction::Axis(0)).unwrap();
        assert_eq!(s.mu_plus, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.mu_minus, vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn separation_is_d_to_the_delta() {
        // 256^0.25 = 4
        let s = make_spec(256, 0.25, 1.0, iso(1.0), iso(1.0), &Direction::Seeded(3)).unwrap();
        let sep = norm(&crate::linalg::sub(&s.mu_plus, &s.mu_minus));
        assert!((sep - 4.0).abs() <= 4.0 * 1e-9);
        for d in [2usize, 17, 300] {
            let s = make_spec(d, 0.0, 2.0, iso(0.0), iso(0.0), &Direction::Seeded(9)).unwrap();
            let sep = norm(&crate::linalg::sub(&s.mu_plus, &s.mu_minus));
            assert!((sep - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            make_spec(4, 0.5, 0.0, iso(1.0), iso(1.0), &Direction::Axis(0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            make_spec(4, 0.5, 2.5, iso(1.0), iso(1.0), &Direction::Axis(0)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            make_spec(2, 0.5, 2.0, CovDescriptor::Full(vec![1.0, 2.0, 2.0, 1.0]), iso(1.0), &Direction::Axis(0)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            make_spec(2, 0.5, 2.0, iso(-1.0), iso(1.0), &Direction::Axis(0)),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            make_spec(1, 0.5, 2.0, iso(1.0), iso(1.0), &Direction::Axis(0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gaussian_psi2_norm() {
        // ψ₂ norm of N(0,1) is sqrt(8/3)
        assert!((psi_alpha_norm(2.0) - (8.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // Laplace standardized: t = 2, std = sqrt(2)
        assert!((psi_alpha_norm(1.0) - 2.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coordinates_have_unit_variance() {
        for alpha in [0.5, 1.0, 2.0] {
            let sampler = CoordSampler::new(alpha);
            let mut rng = stream(11, 0);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!(mean.abs() < 0.02, "alpha {alpha}: mean {mean}");
            assert!((var - 1.0).abs() < 0.05, "alpha {alpha}: var {var}");
        }
    }

    #[test]
    fn zero_covariance_gives_point_mass() {
        let s = make_spec(5, 0.3, 1.0, iso(0.0), CovDescriptor::Diagonal(vec![0.0; 5]), &Direction::Seeded(1))
            .unwrap();
        let ds = generate_dataset(&[("b".into(), s.clone())], 6, 4).unwrap();
        for (x, l) in ds.behaviors()[0].iter() {
            let mu = if l == Label::Positive { &s.mu_plus } else { &s.mu_minus };
            assert_eq!(x, mu.as_slice());
        }
    }

    #[test]
    fn pooled_mean_within_four_sigma() {
        let s = make_spec(64, 0.0, 2.0, iso(1.0), iso(1.0), &Direction::Seeded(0)).unwrap();
        let s = SubExpSpec { mu_plus: vec![0.0; 64], mu_minus: vec![0.0; 64], ..s };
        let ds = generate_dataset(&[("b".into(), s)], 4000, 21).unwrap();
        let b = &ds.behaviors()[0];
        let bound = 4.0 / (4000f64).sqrt();
        for j in 0..64 {
            let m = b.iter().map(|(x, _)| x[j]).sum::<f64>() / 4000.0;
            assert!(m.abs() <= bound, "coordinate {j}: {m}");
        }
    }

    #[test]
    fn generation_is_deterministic_and_order_free() {
        let s1 = make_spec(8, 0.2, 1.5, iso(1.0), iso(0.5), &Direction::Seeded(1)).unwrap();
        let s2 = make_spec(8, 0.4, 1.0, iso(2.0), iso(0.5), &Direction::Seeded(2)).unwrap();
        let specs = vec![("a".to_string(), s1.clone()), ("b".to_string(), s2)];
        let d1 = generate_dataset(&specs, 10, 5).unwrap();
        let d2 = generate_dataset(&specs, 10, 5).unwrap();
        assert_eq!(d1, d2);
        // behavior 0 alone draws the same stream
        let solo = generate_dataset(&specs[..1], 10, 5).unwrap();
        assert_eq!(solo.behaviors()[0], d1.behaviors()[0]);
        let other = generate_dataset(&specs, 10, 6).unwrap();
        assert_ne!(other, d1);
    }

    #[test]
    fn full_covariance_sampling() {
        let cov = vec![2.0, 0.8, 0.8, 1.0];
        let s = make_spec(2, 0.0, 2.0, CovDescriptor::Full(cov.clone()), CovDescriptor::Full(cov.clone()), &Direction::Axis(0))
            .unwrap();
        let ds = generate_dataset(&[("b".into(), s.clone())], 40_000, 8).unwrap();
        let b = &ds.behaviors()[0];
        let mu = b.sign_mean(Label::Positive);
        let pos: Vec<&[f64]> = b.iter().filter(|(_, l)| *l == Label::Positive).map(|(x, _)| x).collect();
        let n = pos.len() as f64;
        let c01 = pos.iter().map(|x| (x[0] - mu[0]) * (x[1] - mu[1])).sum::<f64>() / (n - 1.0);
        let c00 = pos.iter().map(|x| (x[0] - mu[0]).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((c01 - 0.8).abs() < 0.05, "{c01}");
        assert!((c00 - 2.0).abs() < 0.1, "{c00}");
    }

    #[test]
    fn enforces_budget_and_parity() {
        let s = make_spec(16, 0.1, 2.0, iso(1.0), iso(1.0), &Direction::Axis(0)).unwrap();
        let specs = vec![("a".to_string(), s)];
        assert!(matches!(generate_dataset_with_budget(&specs, 100, 0, 1000), Err(Error::Resource(_))));
        assert!(matches!(generate_dataset(&specs, 3, 0), Err(Error::Domain(_))));
        assert!(matches!(generate_dataset(&specs, 0, 0), Err(Error::Domain(_))));
    }
}
