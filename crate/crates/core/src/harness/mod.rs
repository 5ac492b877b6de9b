//! Scenario files, single runs, experiment suites and report output.

mod suite;
mod verify;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use suite::{
    overhead_suite, threshold_suite, Calibration, OverheadReport, OverheadRow, OverheadSuiteConfig, SchemeSpec,
    TableRow, ThresholdReport, ThresholdSuiteConfig, DEFAULT_SUITE_SKEW,
};
pub use verify::{verify, Check, VerifyReport};

use crate::adversary::{evaluate, AttackOutcome, AttackPlan};
use crate::aggnet::{
    run_scenario, Reconstruction, RunMetrics, SimError, SimOutcome, SimParams, Topology, TopologyError,
    DEFAULT_KEY_SEED, DEFAULT_LINK_DELAY, DEFAULT_MAX_READING, DEFAULT_SENSE_INTERVAL, DEFAULT_TIMEOUT,
};
use crate::adma::DEFAULT_SUBSET_BUDGET;
use crate::gfp::PrimeField;
use crate::share::{NodeId, Scheme};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Topology {
        path: PathBuf,
        #[source]
        source: TopologyError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("cannot write report: {0}")]
    Report(String),
}

impl HarnessError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Invariant(_) => 3,
            HarnessError::Report(_) => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// `p` per `1`, `t` or `t - 1` readings, as `(shares, readings)`.
pub fn codec_ratio(scheme: Scheme, t: usize, p: usize) -> (u64, u64) {
    match scheme {
        Scheme::Tree => (1, 1),
        Scheme::Sma => (p as u64, 1),
        Scheme::Dma => (p as u64, t as u64),
        Scheme::Adma => (p as u64, t as u64 - 1),
    }
}

/// Extra messages per reading relative to the plaintext tree.
pub fn closed_form_overhead(scheme: Scheme, t: usize, p: usize) -> f64 {
    let (shares, readings) = codec_ratio(scheme, t, p);
    shares as f64 / readings as f64 - 1.0
}

pub fn gen_topology(nodes: usize, paths: usize, seed: u64) -> Result<String, TopologyError> {
    Ok(Topology::generate(nodes, paths, seed)?.to_text())
}

/// Reads a TOML file into any config type, suite configs included.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    toml::from_str(&text).map_err(|e| HarnessError::Config {
        path: path.to_path_buf(),
        message: e.to_string().trim_end().to_string(),
    })
}

pub fn load_topology(path: &Path) -> Result<Topology, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Topology::parse(&text).map_err(|source| HarnessError::Topology {
        path: path.to_path_buf(),
        source,
    })
}

mod defaults {
    use super::*;

    pub fn t() -> usize {
        8
    }
    pub fn p() -> usize {
        12
    }
    pub fn modulus() -> u64 {
        PrimeField::DEFAULT_MODULUS
    }
    pub fn sense_interval() -> u64 {
        DEFAULT_SENSE_INTERVAL
    }
    pub fn duration() -> u64 {
        1000
    }
    pub fn timeout() -> u64 {
        DEFAULT_TIMEOUT
    }
    pub fn link_delay() -> u64 {
        DEFAULT_LINK_DELAY
    }
    pub fn max_reading() -> u64 {
        DEFAULT_MAX_READING
    }
    pub fn subset_budget() -> usize {
        DEFAULT_SUBSET_BUDGET
    }
    pub fn key_seed() -> u64 {
        DEFAULT_KEY_SEED
    }
    pub fn report() -> PathBuf {
        "report.json".into()
    }
    pub fn table() -> PathBuf {
        "metrics.csv".into()
    }
    pub fn log() -> PathBuf {
        "reconstructions.json".into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default = "defaults::report")]
    pub report: PathBuf,
    #[serde(default = "defaults::table")]
    pub table: PathBuf,
    #[serde(default = "defaults::log")]
    pub log: PathBuf,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            report: defaults::report(),
            table: defaults::table(),
            log: defaults::log(),
        }
    }
}

/// One scenario, as read from a TOML file. Everything but `scheme` and
/// `topology` has a default; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub topology: PathBuf,
    #[serde(default = "defaults::t")]
    pub t: usize,
    #[serde(default = "defaults::p")]
    pub p: usize,
    #[serde(default = "defaults::modulus")]
    pub modulus: u64,
    #[serde(default = "defaults::sense_interval")]
    pub sense_interval: u64,
    #[serde(default = "defaults::duration")]
    pub duration: u64,
    #[serde(default = "defaults::timeout")]
    pub timeout: u64,
    #[serde(default = "defaults::link_delay")]
    pub link_delay: u64,
    #[serde(default)]
    pub skew: u64,
    #[serde(default = "defaults::max_reading")]
    pub max_reading: u64,
    #[serde(default = "defaults::subset_budget")]
    pub subset_budget: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::key_seed", skip_serializing)]
    pub key_seed: u64,
    /// Per-node keys, indexed by node id. Never written to reports.
    #[serde(default, skip_serializing)]
    pub keys: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackPlan>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ScenarioConfig {
    pub fn new(scheme: Scheme, topology: impl Into<PathBuf>) -> Self {
        Self {
            scheme,
            topology: topology.into(),
            t: defaults::t(),
            p: defaults::p(),
            modulus: defaults::modulus(),
            sense_interval: defaults::sense_interval(),
            duration: defaults::duration(),
            timeout: defaults::timeout(),
            link_delay: defaults::link_delay(),
            skew: 0,
            max_reading: defaults::max_reading(),
            subset_budget: defaults::subset_budget(),
            horizon: None,
            seed: 0,
            key_seed: defaults::key_seed(),
            keys: BTreeMap::new(),
            attack: None,
            output: OutputPaths::default(),
        }
    }

    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config {
            path: origin.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.sim_params().map_err(|e| HarnessError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Reads a config file; a relative topology path is taken relative to
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text, path)?;
        if cfg.topology.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.topology = dir.join(&cfg.topology);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sim_params(&self) -> Result<SimParams, SimError> {
        let field = PrimeField::new(self.modulus).map_err(|e| SimError::Config(format!("modulus: {e}")))?;
        let mut keys = BTreeMap::new();
        for (node, &key) in &self.keys {
            let id: NodeId = node
                .parse()
                .map_err(|_| SimError::Config(format!("keys: `{node}` is not a node id")))?;
            keys.insert(id, key);
        }
        let (t, p) = match self.scheme {
            Scheme::Tree => (1, 1),
            _ => (self.t, self.p),
        };
        let params = SimParams {
            field,
            sense_interval: self.sense_interval,
            duration: self.duration,
            timeout: self.timeout,
            link_delay: self.link_delay,
            skew: self.skew,
            max_reading: self.max_reading,
            subset_budget: self.subset_budget,
            horizon: self.horizon,
            key_seed: self.key_seed,
            keys,
            ..SimParams::new(self.scheme, t, p)
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub nodes: usize,
    pub paths: usize,
    pub path_lengths: Vec<usize>,
}

impl TopologySummary {
    pub fn of(t: &Topology) -> Self {
        Self {
            nodes: t.nodes().len(),
            paths: t.path_count(),
            path_lengths: t.paths().iter().map(|p| p.len()).collect(),
        }
    }
}

/// Sequences decided exactly once (ignoring repeats), each accepted and
/// equal to the sum of every source's readings.
pub fn conservation_holds(params: &SimParams, out: &SimOutcome) -> bool {
    let first = out.first_decisions();
    let firsts = out.log.iter().filter(|r| !r.repeat).count();
    firsts == first.len()
        && first.len() == out.sense_log.0.len()
        && out.sense_log.sequences().all(|s| {
            first.get(&s).is_some_and(|r| {
                r.verdict.is_accepted()
                    && r.contributors.len() == out.sense_log.0[&s].len()
                    && out.sense_log.aggregate(s, params.field).as_deref() == Some(&r.values[..])
            })
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub topology: TopologySummary,
    pub metrics: RunMetrics,
    /// Plaintext tree messages for the same topology and duration.
    pub baseline_messages: u64,
    pub closed_form_overhead: f64,
    /// Honest runs only: every sequence reconstructed once and correctly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conservation: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackOutcome>,
}

/// The plaintext tree under the same timing, without skew: one message
/// per node per round.
pub fn baseline_params(params: &SimParams) -> SimParams {
    SimParams {
        scheme: Scheme::Tree,
        threshold: 1,
        paths: 1,
        skew: 0,
        horizon: None,
        ..params.clone()
    }
}

/// Runs a scenario plus its plaintext baseline.
pub fn run_config(cfg: &ScenarioConfig, topology: &Topology) -> Result<(RunReport, Vec<Reconstruction>), HarnessError> {
    let params = cfg.sim_params()?;
    let out = run_scenario(topology, &params, cfg.seed, cfg.attack.as_ref())?;
    let tree = run_scenario(topology, &baseline_params(&params), cfg.seed, None)?;
    let base = tree.metrics.messages_sent;
    let mut metrics = out.metrics.clone();
    metrics.overhead = (base > 0).then(|| metrics.messages_sent as f64 / base as f64 - 1.0);

    let attack = cfg.attack.as_ref().map(|plan| evaluate(plan, &params, &out));
    let conservation = cfg.attack.is_none().then(|| conservation_holds(&params, &out));
    let (t, p) = (params.threshold, params.paths);
    Ok((
        RunReport {
            config: cfg.clone(),
            topology: TopologySummary::of(topology),
            metrics,
            baseline_messages: base,
            closed_form_overhead: closed_form_overhead(cfg.scheme, t, p),
            conservation,
            attack,
        },
        out.log,
    ))
}

/// Flat one-row view of a run for the CSV table.
#[derive(Debug, Clone, Serialize)]
struct RunRow<'a> {
    scheme: Scheme,
    t: usize,
    p: usize,
    modulus: u64,
    sense_interval: u64,
    duration: u64,
    timeout: u64,
    link_delay: u64,
    skew: u64,
    seed: u64,
    topology: String,
    attack: &'a str,
    attack_paths: usize,
    messages_sent: u64,
    baseline_messages: u64,
    overhead: Option<f64>,
    closed_form_overhead: f64,
    source_shares: u64,
    readings_sensed: u64,
    sequences: u64,
    authentic: u64,
    ambiguous: u64,
    failed: u64,
    missed_aggregation_count: u64,
    timer_flushes: u64,
    adversarial_drops: u64,
    anomalies: u64,
    replays_rejected: u64,
    attack_success: Option<bool>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Report(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Report(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Report(e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

/// Loads, runs and writes the three outputs under `out_dir`.
pub fn cmd_run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<RunReport, HarnessError> {
    let topology = load_topology(&cfg.topology)?;
    let (report, log) = run_config(cfg, &topology)?;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_json(&out_dir.join(&cfg.output.report), &report)?;
    write_json(&out_dir.join(&cfg.output.log), &log)?;
    let row = RunRow {
        scheme: cfg.scheme,
        t: report.config.t,
        p: report.config.p,
        modulus: cfg.modulus,
        sense_interval: cfg.sense_interval,
        duration: cfg.duration,
        timeout: cfg.timeout,
        link_delay: cfg.link_delay,
        skew: cfg.skew,
        seed: cfg.seed,
        topology: cfg.topology.display().to_string(),
        attack: cfg.attack.as_ref().map(|a| a.kind.name()).unwrap_or("none"),
        attack_paths: cfg.attack.as_ref().map(|a| a.paths + a.nodes.len()).unwrap_or(0),
        messages_sent: report.metrics.messages_sent,
        baseline_messages: report.baseline_messages,
        overhead: report.metrics.overhead,
        closed_form_overhead: report.closed_form_overhead,
        source_shares: report.metrics.source_shares,
        readings_sensed: report.metrics.readings_sensed,
        sequences: report.metrics.sequences,
        authentic: report.metrics.reconstructions.authentic,
        ambiguous: report.metrics.reconstructions.ambiguous,
        failed: report.metrics.reconstructions.failed,
        missed_aggregation_count: report.metrics.missed_aggregation_count,
        timer_flushes: report.metrics.timer_flushes,
        adversarial_drops: report.metrics.adversarial_drops,
        anomalies: report.metrics.anomalies,
        replays_rejected: report.metrics.replays_rejected,
        attack_success: report.attack.as_ref().map(|a| a.success),
    };
    write_csv(&out_dir.join(&cfg.output.table), &[row])?;
    Ok(report)
}
