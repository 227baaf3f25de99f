//! Experiment recipes driven by a JSON config: distinguishability sweeps,
//! priority pairs, misalignment comparison, bound certification and PCA views.

mod config;
mod project;

pub use config::{
    BehaviorSpec, BoundsConfig, DataSource, ExperimentConfig, ExperimentKind, GenerateSpec, LoadedData, MisalignConfig,
    ProjectConfig, Reference, SweepAxis, SweepConfig,
};
pub use project::{pca_project, PcaBasis, Projection};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chart::{render_chart, render_chart_string, ChartSpec, Series};
use crate::data::{apply_alignment_shift, check_assumptions, estimate_moments, flip_labels, AssumptionParams, BehaviorDataset};
use crate::engine::{train, TrainConfig, TrainTrace};
use crate::error::{Error, Result};
use crate::theory::{
    priority_levels, thm2_horizon, thm3_floor, thm3_threshold, verify_trace, BoundInputs, BoundReport, CheckStatus,
    PriorityReport, Thm1Params, Thm2Params,
};

/// Environment variable holding the number of parallel jobs (default 1).
pub const JOBS_ENV: &str = "DPODYN_JOBS";

pub fn jobs() -> usize {
    std::env::var(JOBS_ENV).ok().and_then(|s| s.trim().parse().ok()).filter(|&n| n >= 1).unwrap_or(1)
}

/// Ordered parallel map; results come back in input order for any job count.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    let n = jobs();
    if n <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    #[default]
    Csv,
    Json,
}

/// Where recipe outputs go. With no directory nothing is written.
#[derive(Debug, Clone, Default)]
pub struct OutputSink {
    pub dir: Option<PathBuf>,
    pub format: TraceFormat,
}

impl OutputSink {
    pub fn new(dir: impl Into<PathBuf>, format: TraceFormat) -> Self {
        Self { dir: Some(dir.into()), format }
    }

    pub fn none() -> Self {
        Self::default()
    }

    fn path(&self, name: &str) -> Result<Option<PathBuf>> {
        match &self.dir {
            None => Ok(None),
            Some(d) => {
                std::fs::create_dir_all(d)?;
                Ok(Some(d.join(name)))
            }
        }
    }

    /// Writes `<stem>.csv` or `<stem>.json`; returns the file name.
    pub fn trace(&self, stem: &str, trace: &TrainTrace) -> Result<String> {
        let name = match self.format {
            TraceFormat::Csv => format!("{stem}.csv"),
            TraceFormat::Json => format!("{stem}.json"),
        };
        if let Some(p) = self.path(&name)? {
            let f = std::io::BufWriter::new(std::fs::File::create(p)?);
            match self.format {
                TraceFormat::Csv => trace.write_csv(f)?,
                TraceFormat::Json => trace.write_json(f)?,
            }
        }
        Ok(name)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        if let Some(p) = self.path(name)? {
            let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::from)?;
            text.push('\n');
            std::fs::write(p, text)?;
        }
        Ok(())
    }

    pub fn chart(&self, name: &str, spec: &ChartSpec) -> Result<()> {
        match self.path(name)? {
            Some(p) => render_chart(spec, p),
            None => render_chart_string(spec).map(|_| ()),
        }
    }
}

fn value_tag(v: f64) -> String {
    format!("{v}")
}

fn loss_chart(title: &str, series: Vec<Series>) -> ChartSpec {
    ChartSpec::line(title, "step", "loss", series)
}

fn trace_series(label: String, trace: &TrainTrace, y: impl Fn(&crate::engine::TraceRecord) -> f64) -> Series {
    Series::new(
        label,
        trace.records.iter().map(|r| r.step as f64).collect(),
        trace.records.iter().map(y).collect(),
    )
}

/// Runs training, turning divergence into a partial trace plus the failing step.
fn train_tolerant(ds: &BehaviorDataset, cfg: &TrainConfig, reference: Option<&[Vec<f64>]>) -> Result<(TrainTrace, Option<usize>)> {
    match train(ds, cfg, reference) {
        Ok(out) => Ok((out.trace, None)),
        Err(Error::Diverged { step, trace, .. }) => Ok((*trace, Some(step))),
        Err(e) => Err(e),
    }
}

// ---------------------------------------------------------------- sweep

#[derive(Debug, Clone)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub trace: TrainTrace,
    pub diverged_at: Option<usize>,
    pub bound: Option<BoundReport>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub runs: Vec<SweepRun>,
}

#[derive(Serialize)]
struct SweepRunSummary<'a> {
    value: f64,
    seed: u64,
    status: &'a str,
    diverged_at: Option<usize>,
    final_loss: Option<f64>,
    final_norm_dw: Option<f64>,
    trace_file: String,
    weight_bound: Option<CheckStatus>,
    weight_bound_violations: Option<usize>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    format: &'a str,
    axis: SweepAxis,
    runs: Vec<SweepRunSummary<'a>>,
}

/// Weight-change certificate for a single-behavior run.
fn weight_certificate(loaded: &LoadedData, cfg: &TrainConfig, trace: &TrainTrace) -> Result<Option<BoundReport>> {
    let ds = &loaded.dataset;
    if ds.behaviors().len() != 1 {
        return Ok(None);
    }
    let id = ds.behaviors()[0].id().to_string();
    let rep = estimate_moments(ds, &id)?;
    let d = ds.dim() as f64;
    let beta_prime = cfg.beta * d.sqrt();
    let (delta, alpha) = match &loaded.specs {
        Some(s) => (s[0].delta, s[0].alpha),
        None => (rep.delta_hat, 2.0),
    };
    let mut ap = AssumptionParams::new(beta_prime, cfg.eta);
    ap.delta = Some(delta);
    let verdict = check_assumptions(&rep, 1, &ap)?;
    let inputs = BoundInputs {
        thm1: Thm1Params::from_moments(&rep, beta_prime, cfg.eta, delta, alpha, 1.0),
        thm1_verdict: verdict,
        n: rep.n,
        behavior_index: 0,
        thm2: None,
        thm2_verdict: None,
        thm3_floor: None,
        thm3_verdict: None,
    };
    verify_trace(trace, &inputs).map(Some)
}

pub fn run_sweep(config: &ExperimentConfig, sink: &OutputSink) -> Result<SweepOutcome> {
    config.require_kind(ExperimentKind::Sweep)?;
    let sweep = config.sweep.as_ref().expect("validated");
    let base = config.train_config()?;
    let jobs: Vec<(f64, u64)> =
        sweep.values.iter().flat_map(|v| config.seeds.iter().map(move |s| (*v, *s))).collect();
    let runs = par_map(&jobs, |&(value, seed)| -> Result<SweepRun> {
        let mut cfg = base.clone();
        cfg.seed = seed;
        let delta = match sweep.axis {
            SweepAxis::Delta => Some(value),
            SweepAxis::Beta => {
                cfg.beta = value;
                None
            }
            SweepAxis::Eta => {
                cfg.eta = value;
                None
            }
        };
        cfg.validate()?;
        let loaded = config.load(seed, delta)?;
        let (trace, diverged_at) = train_tolerant(&loaded.dataset, &cfg, None)?;
        let bound = match diverged_at {
            None => weight_certificate(&loaded, &cfg, &trace)?,
            Some(_) => None,
        };
        Ok(SweepRun { value, seed, trace, diverged_at, bound })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let axis = sweep.axis.as_str();
    let mut summaries = Vec::new();
    for r in &runs {
        let file = sink.trace(&format!("sweep_{axis}_{}_seed{}", value_tag(r.value), r.seed), &r.trace)?;
        summaries.push(SweepRunSummary {
            value: r.value,
            seed: r.seed,
            status: if r.diverged_at.is_some() { "diverged" } else { "ok" },
            diverged_at: r.diverged_at,
            final_loss: r.trace.last().map(|x| x.loss),
            final_norm_dw: r.trace.last().map(|x| x.norm_dw),
            trace_file: file,
            weight_bound: r.bound.as_ref().map(|b| b.verdict),
            weight_bound_violations: r.bound.as_ref().map(|b| b.weight_change.violations),
        });
    }
    sink.json("sweep_summary.json", &SweepSummary { format: "sweep-summary/1", axis: sweep.axis, runs: summaries })?;

    let first_seed = config.seeds[0];
    let shown: Vec<&SweepRun> = runs.iter().filter(|r| r.seed == first_seed && !r.trace.records.is_empty()).collect();
    if !shown.is_empty() {
        let loss = shown.iter().map(|r| trace_series(format!("{axis}={}", value_tag(r.value)), &r.trace, |x| x.loss)).collect();
        sink.chart("sweep_loss.svg", &loss_chart(&format!("Training loss by {axis}"), loss))?;
        let norms = shown
            .iter()
            .map(|r| trace_series(format!("{axis}={}", value_tag(r.value)), &r.trace, |x| x.norm_matrix))
            .collect();
        sink.chart("sweep_norm.svg", &ChartSpec::line(&format!("Weight change by {axis}"), "step", "||W_U(t) - W_U(0)||", norms))?;
    }
    Ok(SweepOutcome { axis: sweep.axis, runs })
}

// ---------------------------------------------------------------- priority

#[derive(Debug, Clone, Serialize)]
pub struct PriorityOutcome {
    pub seed: u64,
    #[serde(skip)]
    pub trace: TrainTrace,
    /// `None` when the mean update direction is zero.
    pub report: Option<PriorityReport>,
    pub final_losses: Vec<f64>,
    /// Final per-behavior losses ordered opposite to priority (higher priority, lower loss).
    pub ordering_consistent: Option<bool>,
}

pub fn run_priority(config: &ExperimentConfig, sink: &OutputSink) -> Result<Vec<PriorityOutcome>> {
    config.require_kind(ExperimentKind::Priority)?;
    let base = config.train_config()?;
    let outcomes = par_map(&config.seeds, |&seed| -> Result<PriorityOutcome> {
        let loaded = config.load(seed, None)?;
        let ds = &loaded.dataset;
        if ds.behaviors().len() < 2 {
            return Err(Error::Config(format!("priority needs at least 2 behaviors, dataset has {}", ds.behaviors().len())));
        }
        let mut cfg = base.clone();
        cfg.seed = seed;
        let trace = train(ds, &cfg, None)?.trace;
        let report = match priority_levels(ds) {
            Ok(r) => Some(r),
            Err(Error::DegeneratePriority) => None,
            Err(e) => return Err(e),
        };
        let final_losses = trace.last().map(|r| r.loss_per_behavior.clone()).unwrap_or_default();
        let ordering_consistent = report.as_ref().map(|r| {
            let m = r.levels.len();
            (0..m).all(|i| (0..m).all(|j| r.levels[i] <= r.levels[j] || final_losses[i] <= final_losses[j]))
        });
        Ok(PriorityOutcome { seed, trace, report, final_losses, ordering_consistent })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    for o in &outcomes {
        sink.trace(&format!("priority_seed{}", o.seed), &o.trace)?;
        sink.json(&format!("priority_seed{}.json", o.seed), o)?;
        let series = o
            .trace
            .behaviors
            .iter()
            .enumerate()
            .map(|(i, b)| trace_series(b.clone(), &o.trace, |x| x.loss_per_behavior[i]))
            .collect();
        sink.chart(&format!("priority_seed{}.svg", o.seed), &loss_chart("Per-behavior loss under joint training", series))?;
    }
    Ok(outcomes)
}

// ---------------------------------------------------------------- misalign

#[derive(Debug, Clone, Serialize)]
pub struct MisalignOutcome {
    pub seed: u64,
    #[serde(skip)]
    pub base: TrainTrace,
    #[serde(skip)]
    pub aligned: TrainTrace,
    pub threshold: f64,
    /// First recorded step with pooled loss at or below the threshold; `None` if never reached.
    pub base_steps: Option<usize>,
    pub aligned_steps: Option<usize>,
}

impl MisalignOutcome {
    /// Aligned surrogate reached the threshold strictly earlier (never-reached counts as infinite).
    pub fn aligned_faster(&self) -> bool {
        match (self.aligned_steps, self.base_steps) {
            (Some(a), Some(b)) => a < b,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

pub fn steps_to_threshold(trace: &TrainTrace, threshold: f64) -> Option<usize> {
    trace.records.iter().find(|r| r.loss <= threshold).map(|r| r.step)
}

pub fn run_misalign(config: &ExperimentConfig, sink: &OutputSink) -> Result<Vec<MisalignOutcome>> {
    config.require_kind(ExperimentKind::Misalign)?;
    let m = config.misalign.as_ref().expect("validated");
    let base_cfg = config.train_config()?;
    let outcomes = par_map(&config.seeds, |&seed| -> Result<MisalignOutcome> {
        let loaded = config.load(seed, None)?;
        let shifted = apply_alignment_shift(&loaded.dataset, m.kappa_sep, m.kappa_var)?;
        let mut cfg = base_cfg.clone();
        cfg.seed = seed;
        cfg.init = None;
        let base = train(&flip_labels(&loaded.dataset), &cfg, None)?.trace;
        let aligned = train(&flip_labels(&shifted), &cfg, None)?.trace;
        Ok(MisalignOutcome {
            seed,
            base_steps: steps_to_threshold(&base, m.threshold),
            aligned_steps: steps_to_threshold(&aligned, m.threshold),
            threshold: m.threshold,
            base,
            aligned,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    for o in &outcomes {
        sink.trace(&format!("misalign_base_seed{}", o.seed), &o.base)?;
        sink.trace(&format!("misalign_aligned_seed{}", o.seed), &o.aligned)?;
        let series = vec![
            trace_series("base".into(), &o.base, |x| x.loss),
            trace_series("aligned".into(), &o.aligned, |x| x.loss),
        ];
        sink.chart(&format!("misalign_seed{}.svg", o.seed), &loss_chart("Flipped-label training", series))?;
    }
    sink.json("misalign_summary.json", &outcomes)?;
    Ok(outcomes)
}

// ---------------------------------------------------------------- bounds

#[derive(Debug, Clone)]
pub struct BoundsRun {
    pub seed: u64,
    pub trace: TrainTrace,
    pub report: BoundReport,
    /// Margin threshold used for the accuracy floor.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct BoundsSummary {
    format: &'static str,
    seeds: Vec<u64>,
    verdicts: Vec<CheckStatus>,
    violations: Vec<usize>,
    total_violations: usize,
}

/// Generates, trains and verifies one seed of a bounds recipe.
pub fn bounds_run(config: &ExperimentConfig, seed: u64) -> Result<BoundsRun> {
    let b = config.bounds.as_ref().ok_or_else(|| Error::Config("bounds needs a bounds block".into()))?;
    let loaded = config.load(seed, None)?;
    let ids = loaded.dataset.behavior_ids();
    let id = b.behavior.clone().unwrap_or_else(|| ids[0].clone());
    let index = ids
        .iter()
        .position(|x| *x == id)
        .ok_or_else(|| Error::Config(format!("unknown behavior {id}")))?;
    let ds = loaded.dataset.select(&[id.as_str()])?;
    let rep = estimate_moments(&ds, &id)?;
    let d = ds.dim();

    let spec = loaded.specs.as_ref().map(|s| &s[index]);
    let delta = b.delta.or(spec.map(|s| s.delta)).unwrap_or(rep.delta_hat);
    let alpha = b.alpha.or(spec.map(|s| s.alpha)).unwrap_or(2.0);
    let eta = b.eta.unwrap_or(b.eta_fraction * 0.25 / (b.beta_prime * b.beta_prime * rep.c_n * rep.c_n));
    let reference = match (b.reference, &loaded.population_gap) {
        (Reference::Population, Some(g)) => g[index].clone(),
        _ => rep.b.clone(),
    };
    let phi = b.phi.unwrap_or(0.0);

    let ap = AssumptionParams {
        beta_prime: b.beta_prime,
        eta,
        v: b.v,
        phi: Some(phi),
        c_prime: b.c_prime,
        delta: Some(delta),
        c_v_max: b.c_v_max,
    };
    let p1 = Thm1Params::from_moments(&rep, b.beta_prime, eta, delta, alpha, b.c_prime);
    let mut inputs = BoundInputs {
        thm1: p1.clone(),
        thm1_verdict: check_assumptions(&rep, 1, &ap)?,
        n: rep.n,
        behavior_index: 0,
        thm2: None,
        thm2_verdict: None,
        thm3_floor: None,
        thm3_verdict: None,
    };
    let mut threshold = None;
    let mut steps = b.steps.unwrap_or(200);
    if let Some(v) = b.v {
        let p2 = Thm2Params::from_moments(p1.clone(), &rep, v, phi, b.w_b_norm);
        if b.steps.is_none() {
            steps = thm2_horizon(&p2).floor().max(0.0) as usize;
        }
        let thr = thm3_threshold(&p2);
        inputs.thm3_floor = Some(thm3_floor(&ds, &reference, thr.value, None)?);
        inputs.thm3_verdict = Some(check_assumptions(&rep, 3, &ap)?);
        threshold = Some(thr.value);
        inputs.thm2_verdict = Some(check_assumptions(&rep, 2, &ap)?);
        inputs.thm2 = Some(p2);
    }

    let mut cfg = TrainConfig::full_batch(p1.beta(), eta, steps);
    cfg.seed = seed;
    cfg.record_every = b.record_every;
    if b.w_b_norm > 0.0 {
        cfg.init = Some(crate::engine::BoundaryInit {
            norm: b.w_b_norm,
            cosine: phi,
            seed,
            target: Some(reference.clone()),
        });
    }
    if d != reference.len() {
        return Err(Error::Shape { expected: d, got: reference.len() });
    }
    let trace = train(&ds, &cfg, Some(std::slice::from_ref(&reference)))?.trace;
    let report = verify_trace(&trace, &inputs)?;
    Ok(BoundsRun { seed, trace, report, threshold })
}

pub fn run_bounds(config: &ExperimentConfig, sink: &OutputSink) -> Result<Vec<BoundsRun>> {
    config.require_kind(ExperimentKind::Bounds)?;
    let runs = par_map(&config.seeds, |&seed| bounds_run(config, seed)).into_iter().collect::<Result<Vec<_>>>()?;
    for r in &runs {
        sink.trace(&format!("bounds_seed{}", r.seed), &r.trace)?;
        sink.json(&format!("bounds_seed{}.json", r.seed), &r.report)?;
    }
    let violations: Vec<usize> = runs.iter().map(|r| r.report.violations()).collect();
    sink.json(
        "bounds_summary.json",
        &BoundsSummary {
            format: "bounds-summary/1",
            seeds: runs.iter().map(|r| r.seed).collect(),
            verdicts: runs.iter().map(|r| r.report.verdict).collect(),
            total_violations: violations.iter().sum(),
            violations,
        },
    )?;
    if let Some(first) = runs.first() {
        let w = &first.report.weight_change;
        let x: Vec<f64> = w.steps.iter().map(|s| *s as f64).collect();
        let series = vec![
            Series::new("bound", x.clone(), w.bound.clone()),
            Series::new("empirical", x, w.empirical.iter().map(|e| e.unwrap_or(0.0)).collect()),
        ];
        sink.chart("bounds_weight.svg", &ChartSpec::line("Weight change against its bound", "step", "norm", series))?;
    }
    Ok(runs)
}

// ---------------------------------------------------------------- project

pub fn run_project(config: &ExperimentConfig, sink: &OutputSink) -> Result<Vec<Projection>> {
    config.validate()?;
    let seed = config.seeds[0];
    let loaded = config.load(seed, None)?;
    let p = config.project.clone().unwrap_or(ProjectConfig { behavior: None, shift: None });
    let id = p.behavior.clone().unwrap_or_else(|| loaded.dataset.behavior_ids()[0].clone());
    let before = pca_project(&loaded.dataset, &id, None)?;
    sink.json("projection.json", &before)?;
    sink.chart("projection.svg", &before.chart(&format!("PCA of {id}")))?;
    let mut out = vec![before];
    if let Some([ks, kv]) = p.shift {
        let shifted = apply_alignment_shift(&loaded.dataset, ks, kv)?;
        let after = pca_project(&shifted, &id, Some(&out[0].basis))?;
        sink.json("projection_shifted.json", &after)?;
        sink.chart("projection_shifted.svg", &after.chart(&format!("PCA of {id} after shift")))?;
        out.push(after);
    }
    Ok(out)
}

/// Output directory: explicit override, else the config's `out`, else none.
pub fn resolve_out(config: &ExperimentConfig, cli: Option<&Path>) -> Option<PathBuf> {
    cli.map(Path::to_path_buf).or_else(|| config.out.clone())
}
