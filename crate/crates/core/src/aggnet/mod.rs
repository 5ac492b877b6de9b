//! Discrete-event simulation of a sink-rooted sensor network running one
//! of the aggregation schemes (or the plaintext tree baseline).
//!
//! Time is an integer tick. Every source senses once per sense interval,
//! splits its reading (or, for the dispersal schemes, each full block of
//! readings) and hands share `q` to the routing tree of the path carrying
//! `q`. Aggregators sum same-path, same-sequence shares and forward one
//! message upstream; the sink groups what arrives by sequence and
//! contributor set and reconstructs.

mod node;
mod sim;
mod sink;
pub mod topology;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use node::{AggStep, AggregatorState, RouteSlot, ShareMessage};
pub use sim::run_scenario;
pub use sink::{Reconstruction, SinkConfig, SinkState, SinkStep, SinkVerdict};
pub use topology::{RouteTree, Topology, TopologyError};

use crate::adma::DEFAULT_SUBSET_BUDGET;
use crate::gfp::PrimeField;
use crate::share::{Contributors, NodeId, Scheme, SchemeError};

pub const DEFAULT_SENSE_INTERVAL: u64 = 10;
pub const DEFAULT_TIMEOUT: u64 = 4;
pub const DEFAULT_LINK_DELAY: u64 = 1;
pub const DEFAULT_MAX_READING: u64 = 1 << 16;
pub const DEFAULT_KEY_SEED: u64 = 0x6b65_7973;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

/// Share index `q` (1-based) travels on path `(q - 1) mod paths`
/// (0-based). With fewer shares than paths the surplus paths stay idle.
pub fn assign_shares_to_paths(shares: usize, paths: usize) -> Vec<usize> {
    assert!(paths > 0, "at least one path is required");
    (0..shares).map(|i| i % paths).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimParams {
    pub scheme: Scheme,
    pub threshold: usize,
    pub paths: usize,
    pub field: PrimeField,
    pub sense_interval: u64,
    /// Sensing happens at ticks `0, m, 2m, ...` strictly below this.
    pub duration: u64,
    pub timeout: u64,
    pub link_delay: u64,
    /// Extra per-transmission delay drawn uniformly from `0..=skew`.
    pub skew: u64,
    /// Readings are uniform in `0..max_reading`.
    pub max_reading: u64,
    pub subset_budget: usize,
    /// Sink group expiry; defaults to `3 * m * t`.
    pub horizon: Option<u64>,
    pub key_seed: u64,
    /// Explicit keys; other sources get keys derived from `key_seed`.
    pub keys: BTreeMap<NodeId, u64>,
}

impl SimParams {
    pub fn new(scheme: Scheme, threshold: usize, paths: usize) -> Self {
        Self {
            scheme,
            threshold,
            paths,
            field: PrimeField::default(),
            sense_interval: DEFAULT_SENSE_INTERVAL,
            duration: DEFAULT_SENSE_INTERVAL,
            timeout: DEFAULT_TIMEOUT,
            link_delay: DEFAULT_LINK_DELAY,
            skew: 0,
            max_reading: DEFAULT_MAX_READING,
            subset_budget: DEFAULT_SUBSET_BUDGET,
            horizon: None,
            key_seed: DEFAULT_KEY_SEED,
            keys: BTreeMap::new(),
        }
    }

    /// Duration covering exactly `rounds` sensing rounds.
    pub fn with_rounds(mut self, rounds: u64) -> Self {
        self.duration = rounds * self.sense_interval;
        self
    }

    /// Readings per split: 1, `t` or `t - 1`.
    pub fn block_len(&self) -> usize {
        match self.scheme {
            Scheme::Tree | Scheme::Sma => 1,
            Scheme::Dma => self.threshold,
            Scheme::Adma => self.threshold - 1,
        }
    }

    /// Shares emitted per split.
    pub fn shares_per_split(&self) -> usize {
        match self.scheme {
            Scheme::Tree => 1,
            _ => self.paths,
        }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon.unwrap_or(3 * self.sense_interval * self.threshold.max(1) as u64)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.sense_interval == 0 {
            return bad("sense_interval must be positive".into());
        }
        if self.timeout == 0 || self.link_delay == 0 {
            return bad("timeout and link_delay must be positive".into());
        }
        if self.max_reading == 0 || self.max_reading > self.field.modulus() {
            return bad(format!("max_reading must lie in 1..={}", self.field.modulus()));
        }
        if self.scheme == Scheme::Tree {
            return Ok(());
        }
        if self.threshold == 0 || self.threshold > self.paths {
            return bad(format!("need 1 <= t <= p, got t = {}, p = {}", self.threshold, self.paths));
        }
        if self.paths as u64 >= self.field.modulus() {
            return bad(format!("p = {} needs a larger field than {}", self.paths, self.field));
        }
        if self.scheme == Scheme::Adma && self.threshold < 2 {
            return bad("a-dma needs t >= 2 (one slot carries the tag)".into());
        }
        if self.subset_budget == 0 && self.scheme == Scheme::Adma {
            return bad("subset_budget must be positive".into());
        }
        Ok(())
    }
}

/// Counts of sink decisions by outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconstructionCounts {
    pub authentic: u64,
    pub ambiguous: u64,
    pub failed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub messages_sent: u64,
    pub messages_per_node: BTreeMap<NodeId, u64>,
    /// Shares created by sources; equals `messages_sent` when every
    /// aggregation opportunity is taken and nothing is dropped.
    pub source_shares: u64,
    pub readings_sensed: u64,
    pub sequences: u64,
    pub reconstructions: ReconstructionCounts,
    pub missed_aggregation_count: u64,
    pub timer_flushes: u64,
    pub adversarial_drops: u64,
    pub anomalies: u64,
    pub replays_rejected: u64,
    /// `messages / tree messages - 1`, filled in by suites that run the
    /// baseline alongside.
    pub overhead: Option<f64>,
    pub final_tick: u64,
    pub trace_digest: u64,
}

/// One share observed by a compromised node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capture {
    pub node: NodeId,
    pub tick: u64,
    pub outgoing: bool,
    pub sequence: u64,
    pub path: usize,
    pub payload: u64,
    pub contributors: Contributors,
}

/// Readings per sequence per source.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseLog(pub BTreeMap<u64, BTreeMap<NodeId, Vec<u64>>>);

impl SenseLog {
    pub fn sequences(&self) -> impl Iterator<Item = u64> + '_ {
        self.0.keys().copied()
    }

    /// Slot-wise field sum of the given sources' readings for `sequence`.
    pub fn truth(&self, sequence: u64, contributors: &Contributors, field: PrimeField) -> Option<Vec<u64>> {
        let per_node = self.0.get(&sequence)?;
        let width = per_node.values().next()?.len();
        let mut acc = vec![field.zero(); width];
        for node in contributors {
            let readings = per_node.get(node)?;
            for (a, &r) in acc.iter_mut().zip(readings) {
                *a += field.element(r);
            }
        }
        Some(acc.iter().map(|x| x.value()).collect())
    }

    /// Sum over every source that sensed in `sequence`.
    pub fn aggregate(&self, sequence: u64, field: PrimeField) -> Option<Vec<u64>> {
        let who: Contributors = self.0.get(&sequence)?.keys().copied().collect();
        self.truth(sequence, &who, field)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub metrics: RunMetrics,
    pub log: Vec<Reconstruction>,
    pub sense_log: SenseLog,
    pub captures: Vec<Capture>,
    pub compromised: BTreeSet<NodeId>,
}

impl SimOutcome {
    /// First (non-repeat) decision for each sequence.
    pub fn first_decisions(&self) -> BTreeMap<u64, &Reconstruction> {
        let mut out = BTreeMap::new();
        for r in &self.log {
            if !r.repeat {
                out.entry(r.sequence).or_insert(r);
            }
        }
        out
    }
}
