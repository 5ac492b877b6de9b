//! Compromise sweeps: for each seed, the smallest number of compromised
//! paths (or random nodes) at which an attack succeeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, AttackKind, AttackPlan};
use crate::aggnet::{run_scenario, SimError, SimParams, Topology};
use crate::share::Scheme;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub seeds: u64,
    pub nodes: usize,
    pub base_seed: u64,
    pub knows_topology: bool,
    /// Splits per source in each run.
    pub blocks: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: 100,
            nodes: 40,
            base_seed: 0,
            knows_topology: true,
            blocks: 2,
        }
    }
}

/// The bound each attack should hit on a topology with one path per share.
pub fn expected_threshold(scheme: Scheme, t: usize, p: usize, kind: AttackKind) -> Option<usize> {
    match (scheme, kind) {
        (_, AttackKind::Replay) => None,
        (Scheme::Tree, _) => Some(1),
        (_, AttackKind::Eavesdrop | AttackKind::Tamper) => Some(t),
        (_, AttackKind::NoDataDos) => Some(p - t + 1),
        (Scheme::Sma | Scheme::Dma, AttackKind::GarbageDos) => Some(1),
        (Scheme::Adma, AttackKind::GarbageDos) => Some(p - t + 1),
    }
}

/// Smallest compromise budget at which `kind` succeeds on the topology
/// generated from `seed`, or `None` if even the largest budget fails.
pub fn first_success(
    scheme: Scheme,
    t: usize,
    p: usize,
    kind: AttackKind,
    seed: u64,
    cfg: &SweepConfig,
) -> Result<Option<usize>, SimError> {
    let topology = Topology::generate(cfg.nodes, p, seed)?;
    let mut params = SimParams::new(scheme, t, p);
    params = params.clone().with_rounds(cfg.blocks * params.block_len() as u64);
    let limit = if cfg.knows_topology { p } else { topology.source_count() };
    for c in 0..=limit {
        let mut plan = AttackPlan::new(kind).on_paths(c);
        plan.knows_topology = cfg.knows_topology;
        let out = run_scenario(&topology, &params, seed, Some(&plan))?;
        if evaluate(&plan, &params, &out).success {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub scheme: Scheme,
    pub t: usize,
    pub p: usize,
    pub attack: AttackKind,
    pub knows_topology: bool,
    pub expected: Option<usize>,
    pub min: Option<usize>,
    pub median: Option<usize>,
    pub max: Option<usize>,
    /// Seeds where no budget succeeded.
    pub never: u64,
    pub seeds: u64,
}

impl ThresholdRow {
    /// Every seed's boundary equals the expected bound.
    pub fn exact(&self) -> bool {
        self.never == 0 && self.expected.is_some() && self.min == self.expected && self.max == self.expected
    }
}

pub fn threshold_sweep(
    scheme: Scheme,
    t: usize,
    p: usize,
    kind: AttackKind,
    cfg: &SweepConfig,
) -> Result<ThresholdRow, SimError> {
    let results: Vec<Option<usize>> = (0..cfg.seeds)
        .into_par_iter()
        .map(|i| first_success(scheme, t, p, kind, cfg.base_seed.wrapping_add(i), cfg))
        .collect::<Result<_, _>>()?;
    let mut hits: Vec<usize> = results.iter().flatten().copied().collect();
    hits.sort_unstable();
    Ok(ThresholdRow {
        scheme,
        t,
        p,
        attack: kind,
        knows_topology: cfg.knows_topology,
        expected: expected_threshold(scheme, t, p, kind),
        min: hits.first().copied(),
        median: hits.get(hits.len().saturating_sub(1) / 2).copied(),
        max: hits.last().copied(),
        never: results.iter().filter(|r| r.is_none()).count() as u64,
        seeds: cfg.seeds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub t: usize,
    pub p: usize,
    pub eavesdrop: Option<usize>,
    pub dos: Option<usize>,
}

/// Sweeps `t` for fixed `p`: eavesdropping gets harder as `t` grows while
/// no-data DoS gets easier. The crossover is where the two meet.
pub fn tradeoff_sweep(scheme: Scheme, p: usize, cfg: &SweepConfig) -> Result<Vec<TradeoffRow>, SimError> {
    let lo = if scheme == Scheme::Adma { 2 } else { 1 };
    (lo..=p)
        .map(|t| {
            let e = threshold_sweep(scheme, t, p, AttackKind::Eavesdrop, cfg)?;
            let d = threshold_sweep(scheme, t, p, AttackKind::NoDataDos, cfg)?;
            Ok(TradeoffRow {
                t,
                p,
                eavesdrop: e.min,
                dos: d.min,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_bounds() {
        assert_eq!(expected_threshold(Scheme::Adma, 3, 8, AttackKind::NoDataDos), Some(6));
        assert_eq!(expected_threshold(Scheme::Dma, 3, 8, AttackKind::GarbageDos), Some(1));
        assert_eq!(expected_threshold(Scheme::Adma, 3, 8, AttackKind::GarbageDos), Some(6));
        assert_eq!(expected_threshold(Scheme::Sma, 2, 3, AttackKind::Tamper), Some(2));
        assert_eq!(expected_threshold(Scheme::Adma, 2, 3, AttackKind::Replay), None);
    }

    #[test]
    fn small_sweep_hits_bounds() {
        let cfg = SweepConfig {
            seeds: 3,
            nodes: 12,
            ..SweepConfig::default()
        };
        for kind in [AttackKind::Eavesdrop, AttackKind::Tamper, AttackKind::NoDataDos, AttackKind::GarbageDos] {
            for scheme in [Scheme::Sma, Scheme::Dma, Scheme::Adma] {
                let row = threshold_sweep(scheme, 2, 3, kind, &cfg).unwrap();
                assert!(row.exact(), "{row:?}");
            }
        }
    }
}
