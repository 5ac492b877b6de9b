use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mpagg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpagg"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = mpagg(
        dir.path(),
        &["--seed", "3", "gen-topology", "--nodes", "20", "--paths", "4", "-o", "topo.txt"],
    );
    assert!(out.status.success(), "{out:?}");
    dir
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn gen_topology_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = mpagg(dir.path(), &["--seed", "9", "gen-topology", "--paths", "6"]);
    let b = mpagg(dir.path(), &["gen-topology", "--paths", "6", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).starts_with("mpagg-topology 1\n"));
    let c = mpagg(dir.path(), &["--seed", "10", "gen-topology", "--paths", "6"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn infeasible_topology_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = mpagg(dir.path(), &["gen-topology", "--nodes", "3", "--paths", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_outputs() {
    let dir = setup();
    write(
        dir.path(),
        "run.toml",
        "scheme = \"adma\"\ntopology = \"topo.txt\"\nt = 3\np = 4\nduration = 600\n",
    );
    let out = mpagg(dir.path(), &["run", "run.toml", "--out-dir", "out"]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("conservation: true"), "{stdout}");
    for name in ["report.json", "metrics.csv", "reconstructions.json"] {
        assert!(dir.path().join("out").join(name).is_file(), "{name}");
    }
    let quiet = mpagg(dir.path(), &["--quiet", "run", "run.toml", "--out-dir", "out2"]);
    assert!(quiet.status.success());
    assert!(quiet.stdout.is_empty());
    assert_eq!(
        fs::read(dir.path().join("out/report.json")).unwrap(),
        fs::read(dir.path().join("out2/report.json")).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let dir = setup();
    write(
        dir.path(),
        "run.toml",
        "scheme = \"dma\"\ntopology = \"topo.txt\"\nt = 2\np = 3\nduration = 200\n",
    );
    mpagg(dir.path(), &["run", "run.toml", "--out-dir", "a"]);
    mpagg(dir.path(), &["--seed", "77", "run", "run.toml", "--out-dir", "b"]);
    let a = fs::read_to_string(dir.path().join("a/report.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/report.json")).unwrap();
    assert!(b.contains("\"seed\": 77"));
    assert_ne!(a, b);
}

#[test]
fn config_errors_exit_2() {
    let dir = setup();
    write(dir.path(), "bad.toml", "scheme = \"dma\"\ntopology = \"topo.txt\"\nwhat = 1\n");
    let out = mpagg(dir.path(), &["run", "bad.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml") && err.contains("what"), "{err}");

    assert_eq!(mpagg(dir.path(), &["run", "missing.toml"]).status.code(), Some(2));
    assert_eq!(mpagg(dir.path(), &["frobnicate"]).status.code(), Some(2));

    write(dir.path(), "topo.txt", "mpagg-topology 1\n[nodes]\n0 1\n[sink]\n5\n");
    write(dir.path(), "run.toml", "scheme = \"dma\"\ntopology = \"topo.txt\"\nt = 2\np = 3\n");
    let out = mpagg(dir.path(), &["run", "run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("topo.txt"));
}

#[test]
fn verify_passes_and_fails() {
    let dir = setup();
    write(
        dir.path(),
        "good.toml",
        "scheme = \"adma\"\ntopology = \"topo.txt\"\nt = 3\np = 4\nduration = 600\nskew = 6\n",
    );
    let out = mpagg(dir.path(), &["verify", "good.toml", "--out-dir", "v"]);
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("v/verify.json").is_file());

    // a sink that gives up after one tick cannot wait for skewed paths
    write(
        dir.path(),
        "bad.toml",
        "scheme = \"dma\"\ntopology = \"topo.txt\"\nt = 3\np = 4\nduration = 600\nhorizon = 1\nskew = 6\n",
    );
    let out = mpagg(dir.path(), &["verify", "bad.toml", "--out-dir", "v"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL conservation"));
}

#[test]
fn overhead_suite_from_config() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "suite.toml",
        "nodes = 16\npaths = [3]\nrounds = 56\nskews = [0]\ngrid = [\n  { scheme = \"tree\", t = 1, p = 1 },\n  { scheme = \"dma\", t = 8, p = 12 },\n]\n",
    );
    let out = mpagg(dir.path(), &["overhead", "--config", "suite.toml", "--out-dir", "o"]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("dma(12,8)") && stdout.contains("0.5000"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("o/overhead.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("o/overhead.json").is_file());
}

#[test]
fn threshold_suite_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "t.toml", "configs = [[2, 3]]\nschemes = [\"adma\"]\n[sweep]\nnodes = 12\n");
    let out = mpagg(
        dir.path(),
        &["thresholds", "--config", "t.toml", "--seeds", "3", "--out-dir", "t"],
    );
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("adma(3,2)") && stdout.contains("true"), "{stdout}");
    let report = fs::read_to_string(dir.path().join("t/thresholds.json")).unwrap();
    assert!(report.contains("\"seeds\": 3"));
}
