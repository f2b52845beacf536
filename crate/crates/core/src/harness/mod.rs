//! Scripted experiments, deterministic logs, metrics and the log audit.

pub mod audit;
pub mod metrics;
mod pipeline;

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use audit::{audit, AuditOutcome};
pub use metrics::{tracking_error, Metrics};
pub use pipeline::Pipeline;

use crate::bus::{BusError, Envelope};
use crate::config::{Config, ConfigError};
use crate::interlocutor::{
    FrameSource, ReplaySource, Scenario, ScriptedSource, Trace, TraceError, TraceHeader,
};
use crate::mimicry::{MimicryMode, Posture};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("log line {line}: {source}")]
    LogParse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("condition index {index} out of range, {id} has {count}")]
    NoSuchCondition {
        id: ExperimentId,
        index: usize,
        count: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    Exp1,
    Exp2,
    Exp3,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 3] = [ExperimentId::Exp1, ExperimentId::Exp2, ExperimentId::Exp3];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::Exp1 => "exp1",
            ExperimentId::Exp2 => "exp2",
            ExperimentId::Exp3 => "exp3",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}` (expected exp1, exp2 or exp3)"))
    }
}

/// Published at t = 0 on `/run/info` in every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    /// `exp1`..`exp3`, or `live` for the bridge server.
    pub experiment: String,
    pub condition: String,
    pub mode: MimicryMode,
    pub seed: u64,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub conditions: Vec<MimicryMode>,
    /// Seconds per condition.
    pub duration: f64,
    pub scenario: Scenario,
    pub seed: u64,
}

impl ExperimentSpec {
    pub fn standard(id: ExperimentId, config: &Config, seed: u64) -> Self {
        let depth = config.interlocutor.depth;
        let h = &config.harness;
        let (conditions, duration, scenario) = match id {
            ExperimentId::Exp1 => (
                vec![
                    MimicryMode::new(Posture::EcaOnly, false),
                    MimicryMode::new(Posture::HeadOnly, false),
                    MimicryMode::new(Posture::Both, false),
                ],
                h.exp1_duration,
                Scenario::exp1(depth, seed),
            ),
            ExperimentId::Exp2 => (
                vec![
                    MimicryMode::new(Posture::None, false),
                    MimicryMode::new(Posture::None, true),
                ],
                h.exp2_duration,
                Scenario::exp2(depth, h.exp2_segment, seed),
            ),
            ExperimentId::Exp3 => (
                vec![
                    MimicryMode::new(Posture::None, false),
                    MimicryMode::new(Posture::Both, true),
                ],
                h.exp3_duration,
                Scenario::exp3(
                    depth,
                    h.exp3_duration,
                    (h.exp3_change_min, h.exp3_change_max),
                    config.interlocutor.walk_reach,
                    seed,
                ),
            ),
        };
        Self {
            id,
            conditions,
            duration,
            scenario,
            seed,
        }
    }

    /// Number of camera ticks in one condition.
    pub fn ticks(&self, config: &Config) -> u64 {
        (self.duration * config.perception.camera.rate).round() as u64
    }

    pub fn run_info(&self, index: usize, config: &Config) -> RunInfo {
        let mode = self.conditions[index];
        RunInfo {
            experiment: self.id.name().to_owned(),
            condition: mode.label(),
            mode,
            seed: self.seed,
            config: config.clone(),
        }
    }
}

/// Everything one condition produced.
#[derive(Debug, Clone)]
pub struct ConditionRun {
    pub info: RunInfo,
    pub log: Vec<Envelope>,
    pub trace: Trace,
    pub metrics: Metrics,
}

impl ConditionRun {
    /// File stem such as `exp1-2-head_only`.
    pub fn stem(&self, index: usize) -> String {
        let label: String = self
            .info
            .condition
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '-' })
            .collect();
        format!("{}-{}-{}", self.info.experiment, index + 1, label)
    }
}

fn run_with_source(
    info: RunInfo,
    config: &Config,
    ticks: u64,
    source: Box<dyn FrameSource>,
) -> Result<ConditionRun, HarnessError> {
    let seed = info.seed;
    let mut pipeline = Pipeline::new(config, info.clone(), Some(source))?;
    pipeline.run_ticks(ticks)?;
    let mut trace = Trace::new(TraceHeader::new(seed, 1.0 / config.perception.camera.rate));
    trace.entries = pipeline.take_trace();
    Ok(ConditionRun {
        info,
        metrics: pipeline.metrics(),
        log: pipeline.take_log(),
        trace,
    })
}

pub fn run_condition(spec: &ExperimentSpec, index: usize, config: &Config) -> Result<ConditionRun, HarnessError> {
    config.validate()?;
    if index >= spec.conditions.len() {
        return Err(HarnessError::NoSuchCondition {
            id: spec.id,
            index,
            count: spec.conditions.len(),
        });
    }
    let source = Box::new(ScriptedSource::new(spec.scenario.clone()));
    run_with_source(spec.run_info(index, config), config, spec.ticks(config), source)
}

/// Every condition in order, each on a fresh pipeline.
pub fn run(spec: &ExperimentSpec, config: &Config) -> Result<Vec<ConditionRun>, HarnessError> {
    config.validate()?;
    (0..spec.conditions.len())
        .map(|i| run_condition(spec, i, config))
        .collect()
}

/// Re-runs one condition with recorded frames in place of the scenario.
pub fn replay(
    trace: Trace,
    spec: &ExperimentSpec,
    index: usize,
    config: &Config,
) -> Result<ConditionRun, HarnessError> {
    config.validate()?;
    if index >= spec.conditions.len() {
        return Err(HarnessError::NoSuchCondition {
            id: spec.id,
            index,
            count: spec.conditions.len(),
        });
    }
    let mut info = spec.run_info(index, config);
    info.seed = trace.header.seed;
    let ticks = trace.entries.len() as u64;
    run_with_source(info, config, ticks, Box::new(ReplaySource::new(trace)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub mode: MimicryMode,
    pub log: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub experiment: String,
    pub seed: u64,
    pub note: String,
    pub conditions: Vec<ConditionReport>,
}

pub const SURROGATE_NOTE: &str = "objective surrogates computed in simulation; not measures of comfort, naturalness or engagement";

impl MetricsReport {
    pub fn new(spec: &ExperimentSpec, runs: &[ConditionRun]) -> Self {
        Self {
            experiment: spec.id.name().to_owned(),
            seed: spec.seed,
            note: SURROGATE_NOTE.to_owned(),
            conditions: runs
                .iter()
                .enumerate()
                .map(|(i, r)| ConditionReport {
                    condition: r.info.condition.clone(),
                    mode: r.info.mode,
                    log: format!("{}.jsonl", r.stem(i)),
                    metrics: r.metrics.clone(),
                })
                .collect(),
        }
    }
}

pub fn log_to_jsonl(log: &[Envelope]) -> String {
    let mut out = String::new();
    for env in log {
        out.push_str(&env.to_json_line());
        out.push('\n');
    }
    out
}

pub fn write_log(path: &Path, log: &[Envelope]) -> Result<(), HarnessError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for env in log {
        writeln!(w, "{}", env.to_json_line()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_log(path: &Path) -> Result<Vec<Envelope>, HarnessError> {
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut log = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        log.push(
            Envelope::from_json_line(&line).map_err(|source| HarnessError::LogParse { line: i + 1, source })?,
        );
    }
    Ok(log)
}

/// Writes `<stem>.jsonl` and `<stem>.trace.jsonl` per condition, plus
/// `<exp>-metrics.json`. Returns the paths written.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, runs: &[ConditionRun]) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    for (i, r) in runs.iter().enumerate() {
        let log = dir.join(format!("{}.jsonl", r.stem(i)));
        write_log(&log, &r.log)?;
        let trace = dir.join(format!("{}.trace.jsonl", r.stem(i)));
        crate::interlocutor::record_trace(&trace, &r.trace)?;
        written.extend([log, trace]);
    }
    let report = dir.join(format!("{}-metrics.json", spec.id));
    let json = serde_json::to_string_pretty(&MetricsReport::new(spec, runs)).expect("report serializes");
    std::fs::write(&report, json + "\n").map_err(io_err(&report))?;
    written.push(report);
    Ok(written)
}
