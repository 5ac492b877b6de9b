//! Cross-run experiment suites.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_params, closed_form_overhead, HarnessError, TopologySummary};
use crate::adversary::{expected_threshold, threshold_sweep, AttackKind, SweepConfig, ThresholdRow};
use crate::aggnet::{run_scenario, SimParams, Topology, DEFAULT_LINK_DELAY, DEFAULT_SENSE_INTERVAL, DEFAULT_TIMEOUT};
use crate::share::Scheme;

/// Per-transmission jitter bound used to reproduce missed aggregations.
pub const DEFAULT_SUITE_SKEW: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    pub t: usize,
    pub p: usize,
}

impl SchemeSpec {
    pub const fn new(scheme: Scheme, t: usize, p: usize) -> Self {
        Self { scheme, t, p }
    }

    pub fn label(&self) -> String {
        match self.scheme {
            Scheme::Tree => "tree".into(),
            s => format!("{s}({},{})", self.p, self.t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OverheadSuiteConfig {
    pub nodes: usize,
    /// Path count of each generated topology.
    pub paths: Vec<usize>,
    pub topology_seed: u64,
    /// Divisible by every block length in the grid, so no readings are
    /// left unsent at the end.
    pub rounds: u64,
    pub sense_interval: u64,
    pub timeout: u64,
    pub link_delay: u64,
    pub skews: Vec<u64>,
    pub seed: u64,
    pub grid: Vec<SchemeSpec>,
}

impl Default for OverheadSuiteConfig {
    fn default() -> Self {
        Self {
            nodes: 40,
            paths: vec![3, 4, 4, 6, 8],
            topology_seed: 1,
            rounds: 1848,
            sense_interval: DEFAULT_SENSE_INTERVAL,
            timeout: DEFAULT_TIMEOUT,
            link_delay: DEFAULT_LINK_DELAY,
            skews: vec![0, DEFAULT_SUITE_SKEW],
            seed: 0,
            grid: vec![
                SchemeSpec::new(Scheme::Tree, 1, 1),
                SchemeSpec::new(Scheme::Sma, 3, 4),
                SchemeSpec::new(Scheme::Dma, 8, 12),
                SchemeSpec::new(Scheme::Adma, 8, 12),
                SchemeSpec::new(Scheme::Dma, 12, 12),
                SchemeSpec::new(Scheme::Adma, 12, 12),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadRow {
    pub topology: usize,
    pub paths: usize,
    pub scheme: Scheme,
    pub t: usize,
    pub p: usize,
    pub skew: u64,
    pub rounds: u64,
    pub messages: u64,
    pub tree_messages: u64,
    pub source_shares: u64,
    pub missed_aggregation_count: u64,
    pub simulated_overhead: f64,
    pub closed_form: f64,
    pub gap: f64,
    /// `messages == source_shares + missed_aggregation_count`.
    pub gap_explained: bool,
}

/// Suite-wide overhead for one scheme at one skew, summed over topologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scheme: Scheme,
    pub t: usize,
    pub p: usize,
    pub skew: u64,
    pub messages: u64,
    pub tree_messages: u64,
    pub simulated_overhead: f64,
    pub closed_form: f64,
    /// The value the original measurements reported, where there is one.
    pub observed_reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub config: OverheadSuiteConfig,
    pub topologies: Vec<TopologySummary>,
    pub rows: Vec<OverheadRow>,
    pub totals: Vec<Calibration>,
}

impl OverheadReport {
    pub fn total(&self, spec: SchemeSpec, skew: u64) -> Option<&Calibration> {
        self.totals
            .iter()
            .find(|c| c.scheme == spec.scheme && c.t == spec.t && c.p == spec.p && c.skew == skew)
    }

    pub fn rows_for(&self, topology: usize, skew: u64) -> impl Iterator<Item = &OverheadRow> {
        self.rows
            .iter()
            .filter(move |r| r.topology == topology && r.skew == skew)
    }
}

fn observed_reference(spec: SchemeSpec) -> Option<f64> {
    match (spec.scheme, spec.t, spec.p) {
        (Scheme::Adma, 8, 12) => Some(1.0),
        (Scheme::Adma, 12, 12) => Some(0.25),
        _ => None,
    }
}

/// Runs every grid entry at every skew on every generated topology and
/// compares the measured overhead with the closed form.
pub fn overhead_suite(cfg: &OverheadSuiteConfig) -> Result<OverheadReport, HarnessError> {
    let topologies: Vec<Topology> = cfg
        .paths
        .iter()
        .enumerate()
        .map(|(i, &k)| Topology::generate(cfg.nodes, k, cfg.topology_seed + i as u64))
        .collect::<Result<_, _>>()
        .map_err(crate::aggnet::SimError::from)?;

    let base = |spec: SchemeSpec, skew: u64| SimParams {
        sense_interval: cfg.sense_interval,
        timeout: cfg.timeout,
        link_delay: cfg.link_delay,
        skew,
        ..SimParams::new(spec.scheme, spec.t, spec.p).with_rounds(0)
    };

    let tree_counts: Vec<u64> = topologies
        .par_iter()
        .map(|topo| {
            let params = baseline_params(&SimParams {
                duration: cfg.rounds * cfg.sense_interval,
                ..base(SchemeSpec::new(Scheme::Tree, 1, 1), 0)
            });
            run_scenario(topo, &params, cfg.seed, None).map(|o| o.metrics.messages_sent)
        })
        .collect::<Result<_, _>>()?;

    let jobs: Vec<(usize, SchemeSpec, u64)> = (0..topologies.len())
        .flat_map(|i| {
            cfg.skews
                .iter()
                .flat_map(move |&skew| cfg.grid.iter().map(move |&spec| (i, spec, skew)))
        })
        .collect();

    let rows: Vec<OverheadRow> = jobs
        .par_iter()
        .map(|&(i, spec, skew)| {
            let params = SimParams {
                duration: cfg.rounds * cfg.sense_interval,
                ..base(spec, skew)
            };
            let m = run_scenario(&topologies[i], &params, cfg.seed, None)?.metrics;
            let tree = tree_counts[i];
            let simulated = m.messages_sent as f64 / tree as f64 - 1.0;
            let closed = closed_form_overhead(spec.scheme, spec.t, spec.p);
            Ok(OverheadRow {
                topology: i,
                paths: topologies[i].path_count(),
                scheme: spec.scheme,
                t: spec.t,
                p: spec.p,
                skew,
                rounds: cfg.rounds,
                messages: m.messages_sent,
                tree_messages: tree,
                source_shares: m.source_shares,
                missed_aggregation_count: m.missed_aggregation_count,
                simulated_overhead: simulated,
                closed_form: closed,
                gap: simulated - closed,
                gap_explained: m.messages_sent == m.source_shares + m.missed_aggregation_count,
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut totals = Vec::new();
    for &skew in &cfg.skews {
        for &spec in &cfg.grid {
            let (messages, tree) = rows
                .iter()
                .filter(|r| r.skew == skew && r.scheme == spec.scheme && r.t == spec.t && r.p == spec.p)
                .fold((0, 0), |(m, t), r| (m + r.messages, t + r.tree_messages));
            totals.push(Calibration {
                scheme: spec.scheme,
                t: spec.t,
                p: spec.p,
                skew,
                messages,
                tree_messages: tree,
                simulated_overhead: messages as f64 / tree as f64 - 1.0,
                closed_form: closed_form_overhead(spec.scheme, spec.t, spec.p),
                observed_reference: observed_reference(spec),
            });
        }
    }

    Ok(OverheadReport {
        config: cfg.clone(),
        topologies: topologies.iter().map(TopologySummary::of).collect(),
        rows,
        totals,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSuiteConfig {
    /// `(t, p)` pairs.
    pub configs: Vec<(usize, usize)>,
    pub schemes: Vec<Scheme>,
    pub attacks: Vec<AttackKind>,
    pub sweep: SweepConfig,
}

impl Default for ThresholdSuiteConfig {
    fn default() -> Self {
        Self {
            configs: vec![(2, 3), (2, 4), (3, 8)],
            schemes: vec![Scheme::Sma, Scheme::Dma, Scheme::Adma],
            attacks: vec![
                AttackKind::Eavesdrop,
                AttackKind::Tamper,
                AttackKind::NoDataDos,
                AttackKind::GarbageDos,
            ],
            sweep: SweepConfig::default(),
        }
    }
}

/// One line of the compromise-bound table: measured minimum (and the
/// expected value) per attack.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub scheme: Scheme,
    pub t: usize,
    pub p: usize,
    pub eavesdrop: Option<usize>,
    pub tamper: Option<usize>,
    pub dos: Option<usize>,
    pub garbage_dos: Option<usize>,
    pub expected: [Option<usize>; 4],
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub config: ThresholdSuiteConfig,
    pub rows: Vec<ThresholdRow>,
    pub table: Vec<TableRow>,
}

pub fn threshold_suite(cfg: &ThresholdSuiteConfig) -> Result<ThresholdReport, HarnessError> {
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &(t, p) in &cfg.configs {
        for &scheme in &cfg.schemes {
            if scheme == Scheme::Adma && t < 2 {
                continue;
            }
            let mut found = Vec::new();
            for &kind in &cfg.attacks {
                let row = threshold_sweep(scheme, t, p, kind, &cfg.sweep)?;
                found.push(row.clone());
                rows.push(row);
            }
            let pick = |k: AttackKind| found.iter().find(|r| r.attack == k);
            let expect = |k: AttackKind| expected_threshold(scheme, t, p, k);
            table.push(TableRow {
                scheme,
                t,
                p,
                eavesdrop: pick(AttackKind::Eavesdrop).and_then(|r| r.min),
                tamper: pick(AttackKind::Tamper).and_then(|r| r.min),
                dos: pick(AttackKind::NoDataDos).and_then(|r| r.min),
                garbage_dos: pick(AttackKind::GarbageDos).and_then(|r| r.min),
                expected: [
                    expect(AttackKind::Eavesdrop),
                    expect(AttackKind::Tamper),
                    expect(AttackKind::NoDataDos),
                    expect(AttackKind::GarbageDos),
                ],
                exact: found.iter().all(|r| r.exact()),
            });
        }
    }
    Ok(ThresholdReport {
        config: cfg.clone(),
        rows,
        table,
    })
}
