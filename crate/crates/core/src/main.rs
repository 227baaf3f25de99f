use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use dpodyn::chart::{render_chart, ChartSpec};
use dpodyn::data::{estimate_moments, save_dataset};
use dpodyn::engine::train;
use dpodyn::experiment::{
    resolve_out, run_bounds, run_misalign, run_priority, run_project, run_sweep, ExperimentConfig, OutputSink,
    TraceFormat,
};
use dpodyn::Error;

#[derive(Parser)]
#[command(name = "dpodyn", version, about = "Preference-learning dynamics of a linear DPO head")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON). For `render`, a chart spec.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory. Overrides the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the config's list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Trace file format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and its moment report.
    Generate,
    /// Train on the configured data and write the trace.
    Train,
    /// Distinguishability sweep over delta, beta or eta.
    Sweep,
    /// Joint training on several behaviors with priority levels.
    Priority,
    /// Flipped-label training before and after an alignment shift.
    Misalign,
    /// Certify traces against the closed-form bounds.
    Bounds,
    /// PCA scatter of one behavior.
    Project,
    /// Render a chart spec to SVG.
    Render,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Diverged { .. } => 3,
        Error::Io(_) | Error::Parse { .. } | Error::Schema(_) | Error::EmptyDataset => 4,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::from_path(path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
        other => other,
    })?;
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(cli: &Cli, cfg: &ExperimentConfig) -> OutputSink {
    let format = match cli.format {
        Format::Csv => TraceFormat::Csv,
        Format::Json => TraceFormat::Json,
    };
    OutputSink { dir: resolve_out(cfg, cli.out.as_deref()), format }
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Command::Render = cli.command {
        let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config <chart spec> is required".into()))?;
        let text = std::fs::read_to_string(path)?;
        let spec: ChartSpec = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
        let file = if out.extension().is_some_and(|e| e == "svg") {
            out
        } else {
            std::fs::create_dir_all(&out)?;
            out.join("chart.svg")
        };
        render_chart(&spec, &file)?;
        println!("wrote {}", file.display());
        return Ok(());
    }

    let cfg = load_config(cli)?;
    let sink = sink(cli, &cfg);
    match cli.command {
        Command::Generate => {
            let dir = sink.dir.clone().ok_or_else(|| Error::Config("generate needs --out or \"out\"".into()))?;
            std::fs::create_dir_all(&dir)?;
            for &seed in &cfg.seeds {
                let loaded = cfg.load(seed, None)?;
                let name = if cfg.seeds.len() == 1 { "dataset.jsonl".to_string() } else { format!("dataset_seed{seed}.jsonl") };
                save_dataset(&loaded.dataset, dir.join(&name))?;
                let moments = loaded
                    .dataset
                    .behavior_ids()
                    .iter()
                    .map(|id| estimate_moments(&loaded.dataset, id))
                    .collect::<Result<Vec<_>, _>>()?;
                sink.json(&name.replace(".jsonl", "_moments.json"), &moments)?;
                println!("{name}: {} samples, d = {}", loaded.dataset.len(), loaded.dataset.dim());
            }
        }
        Command::Train => {
            let tc = cfg.train_config()?;
            for &seed in &cfg.seeds {
                let loaded = cfg.load(seed, None)?;
                let mut c = tc.clone();
                c.seed = seed;
                let stem = if cfg.seeds.len() == 1 { "trace".to_string() } else { format!("trace_seed{seed}") };
                match train(&loaded.dataset, &c, None) {
                    Ok(out) => {
                        let file = sink.trace(&stem, &out.trace)?;
                        sink.json(&format!("{stem}_head.json"), &out.head)?;
                        let last = out.trace.last().expect("at least the initial record");
                        println!("{file}: step {} loss {} acc {}", last.step, last.loss, last.acc_pooled);
                    }
                    Err(Error::Diverged { step, reason, trace }) => {
                        sink.trace(&stem, &trace)?;
                        return Err(Error::Diverged { step, reason, trace });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Command::Sweep => {
            let out = run_sweep(&cfg, &sink)?;
            for r in &out.runs {
                let status = r.diverged_at.map_or("ok".to_string(), |s| format!("diverged at {s}"));
                let loss = r.trace.last().map_or(f64::NAN, |x| x.loss);
                println!("{}={} seed {}: final loss {loss} ({status})", out.axis.as_str(), r.value, r.seed);
            }
        }
        Command::Priority => {
            for o in run_priority(&cfg, &sink)? {
                match &o.report {
                    Some(r) => println!("seed {}: priorities {:?}, ordering consistent: {:?}", o.seed, r.levels, o.ordering_consistent),
                    None => println!("seed {}: degenerate priority, no ordering claim", o.seed),
                }
            }
        }
        Command::Misalign => {
            for o in run_misalign(&cfg, &sink)? {
                let show = |s: Option<usize>| s.map_or("not reached".to_string(), |v| v.to_string());
                println!(
                    "seed {}: steps to loss {}: base {}, aligned {}",
                    o.seed,
                    o.threshold,
                    show(o.base_steps),
                    show(o.aligned_steps)
                );
            }
        }
        Command::Bounds => {
            for r in run_bounds(&cfg, &sink)? {
                println!("seed {}: {:?}, {} violations", r.seed, r.report.verdict, r.report.violations());
            }
        }
        Command::Project => {
            for p in run_project(&cfg, &sink)? {
                println!("{}: rank {}, centroid distance {}", p.behavior, p.rank, p.centroid_distance());
            }
        }
        Command::Render => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpodyn: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

