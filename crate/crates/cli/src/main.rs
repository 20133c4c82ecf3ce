use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde_json::Value;

use dualsim::harness::{
    evaluate_acceptance, replay, run_manifest, run_sweep, single_manifest, ChannelSuiteConfig, SweepOptions, SweepRow,
};
use dualsim::nominal::{build_map, map_paths, save_map};
use dualsim::scenario::{
    apply_overrides, expand_sweep, load_scenario, read_scenario_text, ScenarioSpec, DEFAULT_SWEEP_CAP,
};

const OUT_ENV: &str = "ADEYE_OUT";

#[derive(Parser)]
#[command(name = "dualsim", version, about = "Deterministic dual-channel driving co-simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario document and print its sweep size.
    Validate { scenario: PathBuf },
    /// Build the map artifacts for a scenario's world.
    Map {
        scenario: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Boundary sampling distance, meters.
        #[arg(long, default_value_t = dualsim::nominal::DEFAULT_MAP_SPACING)]
        spacing: f64,
    },
    /// Execute a single run (sweep variables keep their base values).
    Run {
        scenario: PathBuf,
        /// Override a value, e.g. `--set actors.ego.state.speed=8`.
        #[arg(long = "set", value_name = "PATH=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Channel suite configuration file.
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// Execute every run of the scenario's sweep.
    Sweep {
        scenario: PathBuf,
        #[arg(short = 'j', long, default_value_t = 1)]
        jobs: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Skip runs whose report already exists.
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        channels: Option<PathBuf>,
    },
    /// Re-execute a recorded trace.
    Replay {
        trace: PathBuf,
        /// Verify the digest and trace invariants.
        #[arg(long)]
        check: bool,
    },
    /// Print a scenario in canonical form.
    Fmt {
        scenario: PathBuf,
        /// Rewrite the file in place.
        #[arg(long)]
        write: bool,
    },
}

enum Failure {
    Validation(anyhow::Error),
    Run(anyhow::Error),
    Acceptance(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Run(_) => 2,
            Failure::Acceptance(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn scenario(path: &Path) -> Result<ScenarioSpec, Failure> {
    load_scenario(path)
        .with_context(|| format!("{}", path.display()))
        .map_err(Failure::Validation)
}

fn suite(path: Option<&Path>) -> Result<ChannelSuiteConfig, Failure> {
    match path {
        Some(p) => ChannelSuiteConfig::load(p)
            .with_context(|| format!("{}", p.display()))
            .map_err(Failure::Validation),
        None => Ok(ChannelSuiteConfig::default()),
    }
}

fn parse_set(s: &str) -> anyhow::Result<(String, Value)> {
    let (path, raw) = s.split_once('=').ok_or_else(|| anyhow!("`{s}` is not PATH=VALUE"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path.trim().to_string(), value))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(Failure::Run)?;
    }
    std::fs::write(path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(Failure::Run)
}

fn acceptance_summary(rows: &[SweepRow], spec: &ScenarioSpec) -> Outcome {
    let agg = evaluate_acceptance(rows, &spec.acceptance);
    for p in &agg.acceptance {
        println!("{} {}: {}", if p.passed { "PASS" } else { "FAIL" }, p.predicate, p.detail);
    }
    if agg.errored > 0 {
        let first = rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Failure::Run(anyhow!("{} runs errored; first: {first}", agg.errored)));
    }
    if agg.passed {
        Ok(())
    } else {
        Err(Failure::Acceptance(format!("scenario `{}` failed acceptance", spec.name)))
    }
}

fn cmd_validate(path: &Path) -> Outcome {
    let spec = scenario(path)?;
    let runs: u128 = spec.sweep.iter().map(|v| v.values.len() as u128).product();
    println!("{}: ok ({} runs, {} ticks each)", spec.name, runs, spec.max_ticks());
    Ok(())
}

fn cmd_map(path: &Path, out: Option<PathBuf>, spacing: f64) -> Outcome {
    let spec = scenario(path)?;
    let world = spec.build_world().map_err(|e| Failure::Validation(e.into()))?;
    let (points, lanes) = build_map(&world.statics, spacing).map_err(|e| Failure::Validation(e.into()))?;
    let dir = out_dir(out);
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::Run)?;
    let (pp, lp) = map_paths(&dir, &spec.name);
    save_map(&points, &lanes, &pp, &lp).map_err(|e| Failure::Run(e.into()))?;
    println!("{} ({} points)", pp.display(), points.points.len());
    println!("{} ({} lanes)", lp.display(), lanes.lanes.len());
    Ok(())
}

fn cmd_run(path: &Path, sets: &[String], seed: Option<u64>, out: Option<PathBuf>, channels: Option<PathBuf>) -> Outcome {
    let base = scenario(path)?;
    let overrides = sets
        .iter()
        .map(|s| parse_set(s))
        .collect::<anyhow::Result<Vec<_>>>()
        .map_err(Failure::Validation)?;
    let mut spec = apply_overrides(&base, &overrides).map_err(|e| Failure::Validation(e.into()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let suite = suite(channels.as_deref())?;
    let manifest = single_manifest(&spec);
    let (trace, report) = run_manifest(&manifest, &suite).map_err(|e| Failure::Run(e.into()))?;
    let dir = out_dir(out).join(&spec.name);
    write(&dir.join("trace.ndjson"), trace.as_bytes())?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    write(&dir.join("report.json"), json.as_bytes())?;
    println!("outcome {} digest {}", report.outcome, report.digest);
    println!("wrote {}", dir.display());
    let row: SweepRow = serde_json::from_value(serde_json::to_value(&report).expect("serializes")).expect("row shape");
    acceptance_summary(&[row], &spec)
}

fn cmd_sweep(path: &Path, jobs: usize, out: Option<PathBuf>, resume: bool, channels: Option<PathBuf>) -> Outcome {
    let spec = scenario(path)?;
    let plan = expand_sweep(&spec, DEFAULT_SWEEP_CAP).map_err(|e| Failure::Validation(e.into()))?;
    let suite = suite(channels.as_deref())?;
    let dir = out_dir(out).join(&spec.name);
    let opts = SweepOptions {
        parallelism: jobs,
        out_dir: Some(dir.clone()),
        resume,
    };
    let report = run_sweep(&plan, &spec.acceptance, &suite, &opts).map_err(|e| Failure::Run(e.into()))?;
    write(&dir.join("report.json"), report.to_json().as_bytes())?;
    write(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    println!(
        "{} runs, {} collisions, {} safety triggers; wrote {}",
        report.aggregates.runs,
        report.aggregates.collisions,
        report.aggregates.safety_triggers,
        dir.display()
    );
    acceptance_summary(&report.rows, &spec)
}

fn cmd_replay(path: &Path, check: bool) -> Outcome {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Run)?;
    let r = replay(&bytes).map_err(|e| Failure::Run(e.into()))?;
    println!("recorded {}", r.recorded);
    println!("replayed {}", r.replayed);
    for v in &r.violations {
        println!("violation: {v}");
    }
    if check && !r.ok() {
        return Err(Failure::Run(anyhow!(
            "replay check failed: identical={}, {} violations",
            r.identical,
            r.violations.len()
        )));
    }
    Ok(())
}

fn cmd_fmt(path: &Path, write_back: bool) -> Outcome {
    // Full validation first, then format the document with grid file references intact.
    scenario(path)?;
    let (_, spec) = read_scenario_text(path)
        .with_context(|| format!("{}", path.display()))
        .map_err(Failure::Validation)?;
    let text = spec.to_canonical_json();
    if write_back {
        write(path, text.as_bytes())
    } else {
        print!("{text}");
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Map { scenario, out, spacing } => cmd_map(&scenario, out, spacing),
        Command::Run {
            scenario,
            sets,
            seed,
            out,
            channels,
        } => cmd_run(&scenario, &sets, seed, out, channels),
        Command::Sweep {
            scenario,
            jobs,
            out,
            resume,
            channels,
        } => cmd_sweep(&scenario, jobs, out, resume, channels),
        Command::Replay { trace, check } => cmd_replay(&trace, check),
        Command::Fmt { scenario, write } => cmd_fmt(&scenario, write),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Validation(e) => eprintln!("validation error: {e:#}"),
                Failure::Run(e) => eprintln!("run error: {e:#}"),
                Failure::Acceptance(m) => eprintln!("acceptance failure: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
