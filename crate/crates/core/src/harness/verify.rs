//! Invariant checks over one scenario configuration.

use serde::{Deserialize, Serialize};

use super::{conservation_holds, load_topology, run_config, HarnessError, ScenarioConfig};
use crate::aggnet::{run_scenario, SimParams};
use crate::share::Scheme;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config: ScenarioConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

/// Runs the invariant suite for `cfg`. The configured attack, if any, is
/// only reported; the invariants are checked on honest runs.
pub fn verify(cfg: &ScenarioConfig) -> Result<VerifyReport, HarnessError> {
    let topology = load_topology(&cfg.topology)?;
    let params = cfg.sim_params()?;
    let mut checks = Vec::new();

    let honest = run_scenario(&topology, &params, cfg.seed, None)?;
    checks.push(check(
        "conservation",
        conservation_holds(&params, &honest),
        format!(
            "{} sequences sensed, {} decisions",
            honest.sense_log.0.len(),
            honest.log.len()
        ),
    ));

    let m = &honest.metrics;
    checks.push(check(
        "missed-aggregation-accounting",
        m.messages_sent == m.source_shares + m.missed_aggregation_count,
        format!(
            "{} sent = {} shares + {} missed",
            m.messages_sent, m.source_shares, m.missed_aggregation_count
        ),
    ));

    let per_split = params.shares_per_split() as u64;
    let splits = m.sequences * topology.source_count() as u64;
    checks.push(check(
        "codec-ratio",
        m.source_shares == splits * per_split,
        format!(
            "{} shares for {} splits of {} reading(s)",
            m.source_shares,
            splits,
            params.block_len()
        ),
    ));

    let honest_cfg = ScenarioConfig {
        attack: None,
        ..cfg.clone()
    };
    let (a, la) = run_config(&honest_cfg, &topology)?;
    let (b, lb) = run_config(&honest_cfg, &topology)?;
    let ja = serde_json::to_string(&(&a, &la)).map_err(|e| HarnessError::Report(e.to_string()))?;
    let jb = serde_json::to_string(&(&b, &lb)).map_err(|e| HarnessError::Report(e.to_string()))?;
    checks.push(check(
        "determinism",
        ja == jb,
        format!("trace digest {:016x}", a.metrics.trace_digest),
    ));

    if cfg.scheme != Scheme::Tree && cfg.t >= 2 {
        // whole blocks for both dispersal variants
        let rounds = (cfg.t * (cfg.t - 1)) as u64;
        let count = |scheme: Scheme| -> Result<u64, HarnessError> {
            let p = SimParams {
                skew: 0,
                ..SimParams {
                    scheme,
                    ..params.clone()
                }
                .with_rounds(rounds)
            };
            let p = if scheme == Scheme::Tree {
                super::baseline_params(&p)
            } else {
                p
            };
            Ok(run_scenario(&topology, &p, cfg.seed, None)?.metrics.messages_sent)
        };
        let (sma, adma, dma, tree) = (
            count(Scheme::Sma)?,
            count(Scheme::Adma)?,
            count(Scheme::Dma)?,
            count(Scheme::Tree)?,
        );
        checks.push(check(
            "scheme-ordering",
            sma >= adma && adma >= dma && dma >= tree,
            format!("sma {sma} >= adma {adma} >= dma {dma} >= tree {tree}"),
        ));
    }

    let topo_ok = topology.validate().is_ok();
    checks.push(check(
        "topology",
        topo_ok,
        format!("{} nodes, {} paths", topology.nodes().len(), topology.path_count()),
    ));

    if cfg.attack.is_some() {
        let (report, _) = run_config(cfg, &topology)?;
        let outcome = report.attack.expect("attack configured");
        checks.push(check(
            "attack-outcome",
            true,
            format!(
                "{} on {:?}: success = {}",
                outcome.kind, outcome.compromised, outcome.success
            ),
        ));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        config: cfg.clone(),
        checks,
        passed,
    })
}
