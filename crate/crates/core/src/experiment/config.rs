use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{generate_dataset, load_dataset, make_spec, BehaviorDataset, CovDescriptor, Direction, SubExpSpec};
use crate::engine::TrainConfig;
use crate::error::{Error, Result};
use crate::linalg::sub;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Sweep,
    Priority,
    Misalign,
    Bounds,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Priority => "priority",
            ExperimentKind::Misalign => "misalign",
            ExperimentKind::Bounds => "bounds",
        }
    }
}

/// A single JSON experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Required by the recipe subcommands; `generate`, `train` and `project` ignore it.
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    pub data: DataSource,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    /// One job per seed. Seeds drive data generation and minibatch order.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub misalign: Option<MisalignConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
    #[serde(default)]
    pub project: Option<ProjectConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Exactly one of `{"generate": {...}}` or `{"path": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generate(GenerateSpec),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub d: usize,
    pub n_per_behavior: usize,
    pub behaviors: Vec<BehaviorSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorSpec {
    pub id: String,
    pub delta: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_cov")]
    pub sigma_plus: CovDescriptor,
    /// Same as `sigma_plus` when absent.
    #[serde(default)]
    pub sigma_minus: Option<CovDescriptor>,
    /// `axis` equal to the behavior's index when absent.
    #[serde(default)]
    pub direction: Option<Direction>,
}

fn default_alpha() -> f64 {
    2.0
}

fn default_cov() -> CovDescriptor {
    CovDescriptor::Isotropic(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Delta,
    Beta,
    Eta,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::Beta => "beta",
            SweepAxis::Eta => "eta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisalignConfig {
    pub kappa_sep: f64,
    pub kappa_var: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_threshold() -> f64 {
    0.2
}

/// Direction the boundary cosine and margins are measured against.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// Generating `μ₊ − μ₋`; falls back to the empirical gap for loaded data.
    #[default]
    Population,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub beta_prime: f64,
    /// Fixed step size. When absent, `eta_fraction / (4 β′² c_n²)` on each dataset.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_eta_fraction")]
    pub eta_fraction: f64,
    /// Distinguishability fed to the bounds; defaults to the generating value, else the measured one.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub v: Option<f64>,
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default = "default_one")]
    pub c_prime: f64,
    #[serde(default)]
    pub c_v_max: Option<f64>,
    /// Tail exponent for the probability expression of loaded data.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Defaults to the floored horizon when `v` is set, else 200.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub behavior: Option<String>,
    #[serde(default)]
    pub w_b_norm: f64,
    #[serde(default)]
    pub reference: Reference,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

fn default_eta_fraction() -> f64 {
    0.8
}

fn default_one() -> f64 {
    1.0
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub behavior: Option<String>,
    /// `[kappa_sep, kappa_var]`: also project the shifted data in the original basis.
    #[serde(default)]
    pub shift: Option<[f64; 2]>,
}

/// A dataset plus the generating mean differences when known.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: BehaviorDataset,
    pub population_gap: Option<Vec<Vec<f64>>>,
    pub specs: Option<Vec<SubExpSpec>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a relative data path is taken relative to the file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let DataSource::Path(p) = &mut cfg.data {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if let DataSource::Generate(g) = &self.data {
            if g.behaviors.is_empty() {
                return Err(Error::Config("generate block lists no behaviors".into()));
            }
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        let Some(kind) = self.kind else { return Ok(()) };
        let need_train = || self.train.as_ref().ok_or_else(|| Error::Config(format!("{} needs a train block", kind.as_str())));
        match kind {
            ExperimentKind::Sweep => {
                need_train()?;
                let s = self.sweep.as_ref().ok_or_else(|| Error::Config("sweep needs a sweep block".into()))?;
                if s.values.is_empty() {
                    return Err(Error::Config("sweep values must not be empty".into()));
                }
                if s.axis == SweepAxis::Delta && !matches!(self.data, DataSource::Generate(_)) {
                    return Err(Error::Config("a delta sweep needs generated data".into()));
                }
            }
            ExperimentKind::Priority => {
                need_train()?;
            }
            ExperimentKind::Misalign => {
                need_train()?;
                let m = self.misalign.as_ref().ok_or_else(|| Error::Config("misalign needs a misalign block".into()))?;
                if m.threshold.is_nan() || m.threshold <= 0.0 {
                    return Err(Error::Config("misalign threshold must be positive".into()));
                }
            }
            ExperimentKind::Bounds => {
                let b = self.bounds.as_ref().ok_or_else(|| Error::Config("bounds needs a bounds block".into()))?;
                if b.beta_prime.is_nan() || b.beta_prime <= 0.0 {
                    return Err(Error::Config("beta_prime must be positive".into()));
                }
                if b.record_every == 0 {
                    return Err(Error::Config("record_every must be at least 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn require_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.kind {
            Some(k) if k == kind => self.validate(),
            Some(k) => Err(Error::Config(format!("config is for {}, not {}", k.as_str(), kind.as_str()))),
            None => Err(Error::Config(format!("config needs \"kind\": \"{}\"", kind.as_str()))),
        }
    }

    pub fn train_config(&self) -> Result<&TrainConfig> {
        self.train.as_ref().ok_or_else(|| Error::Config("config has no train block".into()))
    }

    /// Loads or generates the dataset for one seed, optionally overriding every behavior's `Δ`.
    pub fn load(&self, seed: u64, delta_override: Option<f64>) -> Result<LoadedData> {
        match &self.data {
            DataSource::Path(p) => {
                Ok(LoadedData { dataset: load_dataset(p)?, population_gap: None, specs: None })
            }
            DataSource::Generate(g) => {
                let specs = g
                    .behaviors
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let minus = b.sigma_minus.clone().unwrap_or_else(|| b.sigma_plus.clone());
                        let dir = b.direction.clone().unwrap_or(Direction::Axis(i));
                        make_spec(g.d, delta_override.unwrap_or(b.delta), b.alpha, b.sigma_plus.clone(), minus, &dir)
                            .map(|s| (b.id.clone(), s))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dataset = generate_dataset(&specs, g.n_per_behavior, seed)?;
                let gaps = specs.iter().map(|(_, s)| sub(&s.mu_plus, &s.mu_minus)).collect();
                Ok(LoadedData {
                    dataset,
                    population_gap: Some(gaps),
                    specs: Some(specs.into_iter().map(|(_, s)| s).collect()),
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SWEEP: &str = r#"{
        "kind": "sweep",
        "data": {"generate": {"d": 8, "n_per_behavior": 20, "behaviors": [{"id": "a", "delta": 0.3}]}},
        "train": {"beta": 0.5, "eta": 0.5, "steps": 10},
        "sweep": {"axis": "delta", "values": [0.1, 0.2]}
    }"#;

    #[test]
    fn parses_and_validates() {
        let c = ExperimentConfig::from_json(SWEEP).unwrap();
        c.require_kind(ExperimentKind::Sweep).unwrap();
        assert_eq!(c.seeds, vec![0]);
        assert!(c.require_kind(ExperimentKind::Bounds).is_err());
    }

    #[test]
    fn unknown_keys_fail_closed() {
        let bad = SWEEP.replace("\"seeds\"", "\"x\"").replace("\"kind\"", "\"kindd\"");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = SWEEP.replace("\"steps\": 10", "\"steps\": 10, \"stepz\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn two_data_sources_rejected() {
        let bad = SWEEP.replace(r#""data": {"generate""#, r#""data": {"path": "x", "generate""#);
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn empty_sweep_rejected() {
        let c = ExperimentConfig::from_json(&SWEEP.replace("[0.1, 0.2]", "[]")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn generated_load_is_seeded() {
        let c = ExperimentConfig::from_json(SWEEP).unwrap();
        let a = c.load(1, None).unwrap();
        let b = c.load(1, None).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(c.load(2, None).unwrap().dataset, a.dataset);
        let gap = &a.population_gap.unwrap()[0];
        assert!((gap[0] - 8f64.powf(0.3)).abs() < 1e-12);
    }
}
