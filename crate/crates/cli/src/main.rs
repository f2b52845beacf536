use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use mirrorbus_bridge::{BridgeOptions, BridgeServer};
use mirrorbus_core::config::{Config, ConfigError};
use mirrorbus_core::harness::{
    self, audit, log_to_jsonl, read_log, write_log, write_outputs, ExperimentId, ExperimentSpec, Metrics,
};
use mirrorbus_core::interlocutor::{load_trace, template};

#[derive(Parser)]
#[command(name = "mirrorbus", version, about = "Rapport mirroring simulator: experiments, live bridge, audit, replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every condition of a scripted experiment and write logs, traces and metrics.
    Run {
        #[arg(long)]
        experiment: ExperimentId,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve the live pipeline over the WebSocket bridge until Ctrl-C.
    Serve {
        /// Defaults to `bus.bridge_port` from the config.
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write every envelope to this JSONL file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Re-check a condition log and recompute its metrics.
    Audit { logfile: PathBuf },
    /// Re-run one condition from a recorded trace.
    Replay {
        trace: PathBuf,
        #[arg(long)]
        experiment: ExperimentId,
        /// Condition number, 1-based, in experiment order.
        #[arg(long)]
        condition: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output log; defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration as TOML.
    Defaults,
    /// Print the 68-point face template as JSON, in metres.
    Template,
}

/// An audit found broken invariants.
#[derive(Debug)]
struct Violations(usize);

impl std::fmt::Display for Violations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} invariant violation(s)", self.0)
    }
}

impl std::error::Error for Violations {}

fn load_config(path: Option<&Path>) -> Result<Config, ConfigError> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn print_metrics(label: &str, m: &Metrics) {
    let opt = |v: Option<f64>| v.map_or("-".to_owned(), |v| format!("{v:.4}"));
    println!(
        "{label:<28} err {:>7.3} p95 {:>7.3}  latency {:>7}  sat {:.3}  uptime {:.3}  emotion {:>6}  duty {:.3}",
        m.mean_tracking_error,
        m.p95_tracking_error,
        opt(m.command_latency),
        m.clamp_saturation_fraction,
        m.detection_uptime,
        opt(m.emotion_match_rate),
        m.mirror_duty,
    );
}

fn cmd_run(experiment: ExperimentId, seed: u64, config: Option<&Path>, out: &Path) -> Result<()> {
    let config = load_config(config)?;
    let spec = ExperimentSpec::standard(experiment, &config, seed);
    let runs = harness::run(&spec, &config)?;
    let mut violations = 0;
    for run in &runs {
        let outcome = audit(&run.log);
        for v in &outcome.violations {
            eprintln!("{}: {v}", run.info.condition);
        }
        violations += outcome.violations.len();
        if outcome.metrics.as_ref() != Some(&run.metrics) {
            eprintln!("{}: audit metrics differ from live metrics", run.info.condition);
            violations += 1;
        }
        print_metrics(&run.info.condition, &run.metrics);
    }
    for path in write_outputs(out, &spec, &runs)? {
        info!("wrote {}", path.display());
    }
    println!("wrote {} condition logs to {}", runs.len(), out.display());
    if violations > 0 {
        return Err(Violations(violations).into());
    }
    Ok(())
}

fn cmd_audit(path: &Path) -> Result<()> {
    let log = read_log(path)?;
    let outcome = audit(&log);
    if let Some(info) = &outcome.info {
        println!("{} / {} (seed {})", info.experiment, info.condition, info.seed);
    }
    if let Some(m) = &outcome.metrics {
        println!("{}", serde_json::to_string_pretty(m)?);
    }
    for v in &outcome.violations {
        eprintln!("violation: {v}");
    }
    if !outcome.is_clean() {
        return Err(Violations(outcome.violations.len()).into());
    }
    println!("ok: {} envelopes, no violations", log.len());
    Ok(())
}

fn cmd_replay(
    trace: &Path,
    experiment: ExperimentId,
    condition: usize,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let config = load_config(config)?;
    let trace = load_trace(trace).with_context(|| format!("loading {}", trace.display()))?;
    let spec = ExperimentSpec::standard(experiment, &config, trace.header.seed);
    if condition == 0 {
        bail!("conditions are numbered from 1");
    }
    let run = harness::replay(trace, &spec, condition - 1, &config)?;
    match out {
        Some(path) => {
            write_log(path, &run.log)?;
            eprintln!("wrote {} envelopes to {}", run.log.len(), path.display());
        }
        None => print!("{}", log_to_jsonl(&run.log)),
    }
    Ok(())
}

fn cmd_serve(port: Option<u16>, config: Option<&Path>, seed: u64, log: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let mut options = BridgeOptions::new(port.unwrap_or(config.bus.bridge_port), config);
    options.seed = seed;
    if let Some(path) = log {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        options.log = Some(Box::new(BufWriter::new(file)));
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let server = BridgeServer::start(options).await?;
        println!("serving on ws://{}", server.local_addr());
        tokio::signal::ctrl_c().await?;
        let summary = server.shutdown().await?;
        println!("stopped after {} ticks, {} connection(s)", summary.ticks, summary.connections);
        Ok::<_, anyhow::Error>(())
    })
}

/// 1 for invariant violations; config errors and anything else that stops
/// the command from running give 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Violations>().is_some() {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            experiment,
            seed,
            config,
            out,
        } => cmd_run(*experiment, *seed, config.as_deref(), out),
        Command::Serve {
            port,
            config,
            seed,
            log,
        } => cmd_serve(*port, config.as_deref(), *seed, log.as_deref()),
        Command::Audit { logfile } => cmd_audit(logfile),
        Command::Replay {
            trace,
            experiment,
            condition,
            config,
            out,
        } => cmd_replay(trace, *experiment, *condition, config.as_deref(), out.as_deref()),
        Command::Defaults => {
            print!("{}", Config::default().to_toml_string());
            Ok(())
        }
        Command::Template => {
            let points: Vec<[f64; 2]> = template::offsets_m().map(|(x, y)| [x, y]).collect();
            println!(
                "{}",
                serde_json::json!({ "version": template::TEMPLATE_VERSION, "units": "m", "points": points })
            );
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
