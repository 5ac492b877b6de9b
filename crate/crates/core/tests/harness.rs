use std::fs;
use std::path::Path;

use mpagg::adversary::SweepConfig;
use mpagg::harness::{
    cmd_run, gen_topology, load_topology, overhead_suite, threshold_suite, verify, HarnessError,
    OverheadSuiteConfig, ScenarioConfig, SchemeSpec, ThresholdSuiteConfig,
};
use mpagg::{AttackKind, AttackPlan, Scheme, Topology};

fn topology_file(dir: &Path, n: usize, k: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(format!("topo-{n}-{k}-{seed}.txt"));
    fs::write(&path, gen_topology(n, k, seed).unwrap()).unwrap();
    path
}

fn scenario(dir: &Path, scheme: Scheme, t: usize, p: usize) -> ScenarioConfig {
    ScenarioConfig {
        t,
        p,
        duration: 24 * 10 * 8,
        ..ScenarioConfig::new(scheme, topology_file(dir, 40, 4, 1))
    }
}

#[test]
fn tree_overhead_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_run(&scenario(dir.path(), Scheme::Tree, 1, 1), dir.path()).unwrap();
    assert_eq!(r.metrics.overhead, Some(0.0));
    assert_eq!(r.closed_form_overhead, 0.0);
    assert_eq!(r.conservation, Some(true));
}

#[test]
fn sma_overhead_is_p_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_run(&scenario(dir.path(), Scheme::Sma, 2, 4), dir.path()).unwrap();
    assert_eq!(r.metrics.overhead, Some(3.0));
    assert_eq!(r.closed_form_overhead, 3.0);
}

#[test]
fn dma_overhead_is_redundancy_minus_one() {
    let dir = tempfile::tempdir().unwrap();
    let r = cmd_run(&scenario(dir.path(), Scheme::Dma, 8, 12), dir.path()).unwrap();
    assert_eq!(r.metrics.overhead, Some(0.5));
    assert_eq!(r.closed_form_overhead, 0.5);
    assert_eq!(r.conservation, Some(true));
}

#[test]
fn run_writes_report_table_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = scenario(dir.path(), Scheme::Adma, 3, 5);
    cmd_run(&cfg, &out).unwrap();
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["scheme"], "adma");
    assert!(report["config"].get("keys").is_none());
    let log: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(out.join("reconstructions.json")).unwrap()).unwrap();
    assert_eq!(log.len(), 24 * 8 / 2);
    let mut csv = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let header = csv.headers().unwrap().clone();
    assert!(header.iter().any(|h| h == "missed_aggregation_count"));
    assert_eq!(csv.records().count(), 1);

    let first = fs::read(out.join("report.json")).unwrap();
    cmd_run(&cfg, &out).unwrap();
    assert_eq!(first, fs::read(out.join("report.json")).unwrap());
}

#[test]
fn configs_load_relative_to_their_directory() {
    let dir = tempfile::tempdir().unwrap();
    topology_file(dir.path(), 12, 3, 4);
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "scheme = \"dma\"\ntopology = \"topo-12-3-4.txt\"\nt = 2\np = 3\n\n[attack]\nkind = \"no-data-dos\"\npaths = 2\n",
    )
    .unwrap();
    let cfg = ScenarioConfig::load(&path).unwrap();
    assert_eq!(cfg.attack, Some(AttackPlan::new(AttackKind::NoDataDos).on_paths(2)));
    let r = cmd_run(&cfg, &dir.path().join("out")).unwrap();
    assert!(r.attack.unwrap().success);
    assert_eq!(r.conservation, None);
}

#[test]
fn config_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "scheme = \"dma\"\ntopology = \"x\"\nsurprise = 1\n").unwrap();
    let err = ScenarioConfig::load(&path).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("bad.toml"), "{err}");
    assert!(err.to_string().contains("surprise"), "{err}");

    fs::write(&path, "topology = \"x\"\n").unwrap();
    assert!(ScenarioConfig::load(&path).is_err());

    fs::write(&path, "scheme = \"dma\"\ntopology = \"x\"\nt = 9\np = 4\n").unwrap();
    assert!(matches!(ScenarioConfig::load(&path), Err(HarnessError::Config { .. })));
}

#[test]
fn topology_errors_carry_file_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = topology_file(dir.path(), 12, 3, 4);
    let text = fs::read_to_string(&path).unwrap().replace("[sink]\n0", "[sink]\nzero");
    fs::write(&path, text).unwrap();
    let err = load_topology(&path).unwrap_err().to_string();
    assert!(err.contains("topo-12-3-4.txt") && err.contains("line"), "{err}");
    assert!(load_topology(&dir.path().join("missing.txt")).is_err());
}

#[test]
fn generated_topologies() {
    for k in [3, 4, 6, 8] {
        let t = Topology::parse(&gen_topology(40, k, 9).unwrap()).unwrap();
        assert_eq!((t.nodes().len(), t.path_count()), (40, k));
        assert!(t.is_disjoint());
    }
    let chain = Topology::parse(&gen_topology(6, 1, 2).unwrap()).unwrap();
    assert_eq!(chain.path_count(), 1);
    assert_eq!(gen_topology(40, 6, 5).unwrap(), gen_topology(40, 6, 5).unwrap());
    assert!(gen_topology(4, 4, 0).is_err());
}

#[test]
fn verify_passes_on_honest_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = scenario(dir.path(), Scheme::Adma, 4, 6);
    cfg.skew = 5;
    cfg.attack = Some(AttackPlan::new(AttackKind::Eavesdrop).on_paths(1));
    let report = verify(&cfg).unwrap();
    assert!(report.passed, "{:#?}", report.checks);
    assert!(report.checks.iter().any(|c| c.name == "scheme-ordering"));
}

#[test]
fn small_overhead_suite() {
    let cfg = OverheadSuiteConfig {
        nodes: 20,
        paths: vec![3, 5],
        rounds: 168,
        skews: vec![0, 6],
        grid: vec![
            SchemeSpec::new(Scheme::Tree, 1, 1),
            SchemeSpec::new(Scheme::Dma, 8, 12),
            SchemeSpec::new(Scheme::Adma, 8, 12),
        ],
        ..OverheadSuiteConfig::default()
    };
    let report = overhead_suite(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2 * 2 * 3);
    assert!(report.rows.iter().all(|r| r.gap_explained));
    for r in report.rows.iter().filter(|r| r.skew == 0) {
        assert!((r.simulated_overhead - r.closed_form).abs() < 1e-12, "{r:?}");
    }
    let adma = report.total(SchemeSpec::new(Scheme::Adma, 8, 12), 6).unwrap();
    assert!(adma.simulated_overhead >= adma.closed_form);
    assert_eq!(adma.observed_reference, Some(1.0));
}

#[test]
fn small_threshold_suite() {
    let cfg = ThresholdSuiteConfig {
        configs: vec![(2, 3)],
        sweep: SweepConfig {
            seeds: 4,
            nodes: 16,
            ..SweepConfig::default()
        },
        ..ThresholdSuiteConfig::default()
    };
    let report = threshold_suite(&cfg).unwrap();
    assert_eq!(report.table.len(), 3);
    assert!(report.table.iter().all(|r| r.exact), "{:#?}", report.table);
    let dma = report.table.iter().find(|r| r.scheme == Scheme::Dma).unwrap();
    assert_eq!((dma.eavesdrop, dma.tamper, dma.dos, dma.garbage_dos), (Some(2), Some(2), Some(2), Some(1)));
}
