use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use uavmed_core::batch::{run_batch, seed_jobs, EpisodeJob};
use uavmed_core::episode::EpisodeResult;
use uavmed_core::policies::PolicyKind;
use uavmed_core::scenario::{load_scenario, ScenarioConfig};
use uavmed_core::summary::summarize;
use uavmed_core::trace::{replay_verify, ReplayReport};

#[derive(Parser)]
#[command(name = "uavmed", version, about = "Multi-agent UAV medical-supply delivery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run episodes at a single fleet size.
    Run(RunArgs),
    /// Run the full fleet-size x policy grid.
    Sweep(SweepArgs),
    /// Validate a config and print it with defaults filled in.
    Validate(ConfigArg),
    /// Re-simulate a trace and report the first divergence.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Config file, or a built-in name (`brussels`, `reference`).
    #[arg(long, default_value = "brussels")]
    config: String,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    config: ConfigArg,
    /// Base seed; episode i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    trace: Toggle,
    /// Worker threads; 1 forces sequential execution.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    workers: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the config's fleet size.
    #[arg(long)]
    fleet_size: Option<u32>,
    #[arg(long, default_value = "greedy")]
    policy: PolicyKind,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated fleet sizes.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    fleet_size: Vec<u32>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', default_value = "greedy")]
    policy: Vec<PolicyKind>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    config: ConfigArg,
    trace: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(e.into())
    }
}

fn load_config(name: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(name);
    let loaded = if path.exists() {
        load_scenario(path).with_context(|| format!("loading {}", path.display()))
    } else if let Some(builtin) = ScenarioConfig::builtin(name) {
        builtin.with_context(|| format!("built-in config `{name}`"))
    } else {
        Err(anyhow::anyhow!("config `{name}` is neither a file nor a built-in name"))
    };
    loaded.map_err(Failure::Config)
}

fn with_fleet(mut cfg: ScenarioConfig, n: u32) -> Result<ScenarioConfig, Failure> {
    cfg.fleet_size = n;
    cfg.validate().context("--fleet-size").map_err(Failure::Config)?;
    Ok(cfg)
}

fn execute(common: &Common, jobs: Vec<EpisodeJob>) -> Result<(), Failure> {
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display())).map_err(Failure::runtime)?;
    let trace_dir = (common.trace == Toggle::On).then(|| common.out.join("traces"));
    if let Some(dir) = &trace_dir {
        fs::create_dir_all(dir).map_err(Failure::runtime)?;
    }
    let workers = common.workers.map(|w| w as usize);
    let results = run_batch(&jobs, workers, trace_dir.as_deref()).map_err(Failure::runtime)?;
    write_results(&common.out, &results).map_err(Failure::runtime)?;
    let summary = summarize(&results).map_err(Failure::runtime)?;
    summary.write_csv(&common.out.join("summary.csv")).map_err(Failure::runtime)?;
    summary.write_plot_data(&common.out).map_err(Failure::runtime)?;
    for row in &summary.rows {
        println!(
            "N={:<3} {:<8} episodes={:<4} mission_time_s={:.1}±{:.1} success_rate={:.3}",
            row.fleet_size, row.policy, row.episodes, row.mission_time_mean_s, row.mission_time_std_s, row.success_rate
        );
    }
    Ok(())
}

fn write_results(out: &Path, results: &[EpisodeResult]) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(out.join("results.jsonl"))?);
    for r in results {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load_config(&args.common.config.config)?;
    if let Some(n) = args.fleet_size {
        cfg = with_fleet(cfg, n)?;
    }
    let jobs = seed_jobs(Arc::new(cfg), args.policy, args.common.seed, args.common.episodes);
    execute(&args.common, jobs)
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let base = load_config(&args.common.config.config)?;
    let mut jobs = Vec::new();
    for &n in &args.fleet_size {
        let cfg = Arc::new(with_fleet(base.clone(), n)?);
        for &policy in &args.policy {
            jobs.extend(seed_jobs(cfg.clone(), policy, args.common.seed, args.common.episodes));
        }
    }
    execute(&args.common, jobs)
}

fn cmd_validate(args: ConfigArg) -> Result<(), Failure> {
    let cfg = load_config(&args.config)?;
    print!("{}", cfg.to_toml_string());
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), Failure> {
    let cfg = load_config(&args.config.config)?;
    let file = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display())).map_err(Failure::runtime)?;
    match replay_verify(BufReader::new(file), &cfg).map_err(Failure::runtime)? {
        ReplayReport::Ok { steps } => {
            println!("replay ok: {steps} steps match");
            Ok(())
        }
        ReplayReport::Divergence { step, line, field, expected, found } => Err(Failure::Runtime(anyhow::anyhow!(
            "divergence at step {step} (line {line}): field `{field}` expected {expected}, found {found}"
        ))),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
