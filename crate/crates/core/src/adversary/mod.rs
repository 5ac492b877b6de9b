//! Attacker models run inside the simulator, and scoring of their effect
//! from the resulting trace.
//!
//! Compromised nodes misbehave in their relay role: they act on the
//! aggregates they forward along the path(s) they sit on. Their own
//! readings on other paths are still reported honestly. An attacker that
//! knows the topology takes the node next to the sink on the lowest
//! numbered paths, which sees every source's contribution to that path.

mod sweep;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sweep::{
    expected_threshold, first_success, threshold_sweep, tradeoff_sweep, SweepConfig, ThresholdRow, TradeoffRow,
};

use crate::aggnet::{Capture, SimOutcome, SimParams, Topology};
use crate::dma::{self, DispersalMatrix};
use crate::gfp::PrimeField;
use crate::share::{Contributors, NodeId, PathShare, Scheme};
use crate::sma::{self, SmaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Eavesdrop,
    Tamper,
    NoDataDos,
    GarbageDos,
    Replay,
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::Eavesdrop => "eavesdrop",
            AttackKind::Tamper => "tamper",
            AttackKind::NoDataDos => "no-data-dos",
            AttackKind::GarbageDos => "garbage-dos",
            AttackKind::Replay => "replay",
        }
    }
}

impl std::fmt::Display for AttackKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TamperPolicy {
    /// Add `delta` to the first reading slot, consistently on every share.
    #[default]
    Shift,
    /// Add an independent random value to each forwarded share.
    Random,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    /// Re-send the first forwarded share later under its own sequence.
    #[default]
    Resend,
    /// Forward the first share's payload under every later sequence.
    Relabel,
}

fn default_true() -> bool {
    true
}

fn default_delta() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPlan {
    pub kind: AttackKind,
    /// Explicitly compromised nodes.
    #[serde(default)]
    pub nodes: Vec<NodeId>,
    /// Additionally compromise this many paths (or random nodes when the
    /// attacker does not know the topology).
    #[serde(default)]
    pub paths: usize,
    #[serde(default = "default_true")]
    pub knows_topology: bool,
    #[serde(default)]
    pub activation: u64,
    #[serde(default)]
    pub policy: TamperPolicy,
    #[serde(default = "default_delta")]
    pub delta: u64,
    #[serde(default)]
    pub replay: ReplayMode,
    /// Ticks between capture and re-send; defaults past the sink horizon.
    #[serde(default)]
    pub replay_delay: Option<u64>,
}

impl AttackPlan {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            nodes: Vec::new(),
            paths: 0,
            knows_topology: true,
            activation: 0,
            policy: TamperPolicy::default(),
            delta: default_delta(),
            replay: ReplayMode::default(),
            replay_delay: None,
        }
    }

    pub fn on_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn on_nodes(mut self, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        self.nodes = nodes.into_iter().collect();
        self
    }

    /// The set of compromised nodes for this topology and seed.
    pub fn resolve(&self, topology: &Topology, seed: u64) -> Result<BTreeSet<NodeId>, AttackError> {
        let mut out = BTreeSet::new();
        for &n in &self.nodes {
            if n == topology.sink() {
                return Err(AttackError::Sink(n));
            }
            if !topology.nodes().contains(&n) {
                return Err(AttackError::UnknownNode(n));
            }
            out.insert(n);
        }
        if self.paths == 0 {
            return Ok(out);
        }
        if self.knows_topology {
            if self.paths > topology.path_count() {
                return Err(AttackError::TooManyPaths {
                    wanted: self.paths,
                    available: topology.path_count(),
                });
            }
            for path in &topology.paths()[..self.paths] {
                out.insert(*path.last().expect("paths are nonempty"));
            }
        } else {
            if self.paths > topology.source_count() {
                return Err(AttackError::TooManyPaths {
                    wanted: self.paths,
                    available: topology.source_count(),
                });
            }
            // one shuffle per seed, so larger budgets extend smaller ones
            let mut order: Vec<NodeId> = topology.sources().collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xA77A_C4ED));
            out.extend(&order[..self.paths]);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttackError {
    #[error("attack names node {0}, which is not in the topology")]
    UnknownNode(NodeId),
    #[error("the sink ({0}) cannot be compromised")]
    Sink(NodeId),
    #[error("cannot compromise {wanted} paths, only {available} available")]
    TooManyPaths { wanted: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveredSecret {
    pub sequence: u64,
    pub contributors: Contributors,
    pub values: Vec<u64>,
    /// Matches the sense log.
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub compromised: Vec<NodeId>,
    pub secrets_recovered: Vec<RecoveredSecret>,
    /// Every capture group too small to reconstruct was certified to
    /// reveal nothing (SMA only; vacuously true otherwise).
    pub secrecy_certified: bool,
    pub reconstruction_dos_count: u64,
    pub sink_accepted_forgery: bool,
    /// Some delivered value equals the honest aggregate plus the
    /// attacker's shift on the first slot.
    pub meaning_controlled: bool,
    pub replay_accepted: bool,
    pub success: bool,
}

/// Runs each scheme's own reconstruction over captured shares that share a
/// sequence and contributor set. Groups made only of compromised nodes'
/// own readings are skipped.
pub fn eavesdrop_attempt(
    captures: &[Capture],
    compromised: &BTreeSet<NodeId>,
    params: &SimParams,
) -> (Vec<RecoveredSecret>, bool) {
    let mut groups: BTreeMap<(u64, Contributors), BTreeMap<usize, u64>> = BTreeMap::new();
    for c in captures {
        if c.contributors.is_subset(compromised) {
            continue;
        }
        groups
            .entry((c.sequence, c.contributors.clone()))
            .or_default()
            .entry(c.path)
            .or_insert(c.payload);
    }

    let f = params.field;
    let t = if params.scheme == Scheme::Tree { 1 } else { params.threshold };
    let sma_params = (params.scheme == Scheme::Sma)
        .then(|| SmaParams::new(params.paths, params.threshold, f).ok())
        .flatten();
    let matrix = matches!(params.scheme, Scheme::Dma | Scheme::Adma)
        .then(|| DispersalMatrix::vandermonde(params.threshold, params.paths, f).ok())
        .flatten();

    let mut recovered = Vec::new();
    let mut certified = true;
    for ((sequence, contributors), by_path) in groups {
        let shares: Vec<PathShare> = by_path.iter().map(|(&q, &v)| PathShare::new(q, f.element(v))).collect();
        let values = if shares.len() < t {
            if let Some(prm) = &sma_params {
                certified &= sma::leaks_nothing(&shares, prm).unwrap_or(false);
            }
            None
        } else {
            match params.scheme {
                Scheme::Tree => Some(vec![shares[0].value.value()]),
                Scheme::Sma => sma_params
                    .as_ref()
                    .and_then(|prm| sma::reconstruct(&shares, prm).ok())
                    .map(|v| vec![v.value()]),
                Scheme::Dma | Scheme::Adma => matrix.as_ref().and_then(|m| dma::reconstruct(&shares, m).ok()).map(|b| {
                    let keep = if params.scheme == Scheme::Adma { b.len() - 1 } else { b.len() };
                    b.values()[..keep].iter().map(|x| x.value()).collect()
                }),
            }
        };
        if let Some(values) = values {
            recovered.push(RecoveredSecret {
                sequence,
                contributors,
                values,
                correct: false,
            });
        }
    }
    (recovered, certified)
}

/// Tick at which sequence `s` is split and sent.
fn sequence_tick(params: &SimParams, s: u64) -> u64 {
    let l = params.block_len() as u64;
    ((s + 1) * l - 1) * params.sense_interval
}

/// Scores an attack from the run's trace, using the sense log as ground
/// truth where the definition of success needs it.
pub fn evaluate(plan: &AttackPlan, params: &SimParams, outcome: &SimOutcome) -> AttackOutcome {
    let f: PrimeField = params.field;
    let sense = &outcome.sense_log;
    let targeted: Vec<u64> = sense
        .sequences()
        .filter(|&s| sequence_tick(params, s) >= plan.activation)
        .collect();
    let first = outcome.first_decisions();

    let (mut secrets, certified) = eavesdrop_attempt(&outcome.captures, &outcome.compromised, params);
    for s in &mut secrets {
        s.correct = sense.truth(s.sequence, &s.contributors, f).as_deref() == Some(&s.values[..]);
    }

    let mut dos = 0;
    let mut forgery = false;
    let mut meaning = false;
    for &s in &targeted {
        let Some(rec) = first.get(&s) else {
            dos += 1;
            continue;
        };
        let truth = sense.truth(s, &rec.contributors, f);
        let honest = truth.as_deref() == Some(&rec.values[..]);
        if !(rec.verdict.is_accepted() && honest) {
            dos += 1;
        }
        if rec.verdict.is_accepted() && !honest {
            forgery = true;
        }
        if let Some(mut shifted) = truth.filter(|_| rec.verdict.has_value()) {
            if let Some(slot) = shifted.first_mut() {
                *slot = (f.element(*slot) + f.element(plan.delta)).value();
            }
            meaning |= shifted == rec.values;
        }
    }
    let replay = outcome.log.iter().any(|r| {
        r.verdict.is_accepted()
            && (r.repeat || sense.truth(r.sequence, &r.contributors, f).as_deref() != Some(&r.values[..]))
    });

    let success = match plan.kind {
        AttackKind::Eavesdrop => secrets.iter().any(|s| s.correct),
        AttackKind::Tamper => match plan.policy {
            TamperPolicy::Shift => meaning,
            TamperPolicy::Random => forgery,
        },
        AttackKind::NoDataDos | AttackKind::GarbageDos => dos > 0,
        AttackKind::Replay => replay,
    };
    AttackOutcome {
        kind: plan.kind,
        compromised: outcome.compromised.iter().copied().collect(),
        secrets_recovered: secrets,
        secrecy_certified: certified,
        reconstruction_dos_count: dos,
        sink_accepted_forgery: forgery,
        meaning_controlled: meaning,
        replay_accepted: replay,
        success,
    }
}
