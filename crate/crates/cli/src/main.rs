use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpagg::harness::{
    cmd_run, gen_topology, load_toml, overhead_suite, threshold_suite, verify, write_csv, write_json, HarnessError,
    OverheadSuiteConfig, ScenarioConfig, SchemeSpec, ThresholdSuiteConfig,
};

#[derive(Debug, Parser)]
#[command(name = "mpagg", version, about = "Multipath secure aggregation simulator")]
struct Cli {
    /// Overrides the seed of the scenario or suite.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for report files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Only print errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its report, table and reconstruction log.
    Run { config: PathBuf },
    /// Compare simulated message overhead with the closed forms.
    Overhead {
        /// Suite config (TOML); defaults reproduce the five-topology grid.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Replace the skew values.
        #[arg(long, value_delimiter = ',')]
        skews: Option<Vec<u64>>,
    },
    /// Measure the minimum compromised paths per attack.
    Thresholds {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds per sweep.
        #[arg(long)]
        seeds: Option<u64>,
        /// Compromise random nodes instead of chosen paths.
        #[arg(long)]
        blind: bool,
    },
    /// Generate a node-disjoint multipath topology.
    GenTopology {
        #[arg(long, default_value_t = 40)]
        nodes: usize,
        #[arg(long)]
        paths: usize,
        /// Write here instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check a scenario's invariants; exits 3 if any fails.
    Verify { config: PathBuf },
}

fn prepare(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let say = |line: String| {
        if !cli.quiet {
            println!("{line}");
        }
    };
    match &cli.command {
        Command::Run { config } => {
            let mut cfg = ScenarioConfig::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let r = cmd_run(&cfg, &cli.out_dir)?;
            let m = &r.metrics;
            say(format!(
                "{}: {} messages ({} tree), overhead {} (closed form {:.4})",
                cfg.scheme,
                m.messages_sent,
                r.baseline_messages,
                m.overhead.map_or("n/a".into(), |o| format!("{o:.4}")),
                r.closed_form_overhead
            ));
            say(format!(
                "{} sequences, {} authentic, {} ambiguous, {} failed, {} missed aggregations",
                m.sequences,
                m.reconstructions.authentic,
                m.reconstructions.ambiguous,
                m.reconstructions.failed,
                m.missed_aggregation_count
            ));
            if let Some(c) = r.conservation {
                say(format!("conservation: {c}"));
            }
            if let Some(a) = &r.attack {
                say(format!("{} on {:?}: success = {}", a.kind, a.compromised, a.success));
            }
        }
        Command::Overhead { config, skews } => {
            let mut cfg: OverheadSuiteConfig = match config {
                Some(path) => load_toml(path)?,
                None => OverheadSuiteConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(skews) = skews {
                cfg.skews = skews.clone();
            }
            let report = overhead_suite(&cfg)?;
            prepare(&cli.out_dir)?;
            write_json(&cli.out_dir.join("overhead.json"), &report)?;
            write_csv(&cli.out_dir.join("overhead.csv"), &report.rows)?;
            say(format!(
                "{:<14} {:>5} {:>10} {:>11} {:>9}",
                "scheme", "skew", "simulated", "closed form", "observed"
            ));
            for c in &report.totals {
                let label = SchemeSpec::new(c.scheme, c.t, c.p).label();
                say(format!(
                    "{label:<14} {:>5} {:>10.4} {:>11.4} {:>9}",
                    c.skew,
                    c.simulated_overhead,
                    c.closed_form,
                    c.observed_reference.map_or("-".into(), |o| format!("{o:.2}"))
                ));
            }
        }
        Command::Thresholds { config, seeds, blind } => {
            let mut cfg: ThresholdSuiteConfig = match config {
                Some(path) => load_toml(path)?,
                None => ThresholdSuiteConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.sweep.base_seed = seed;
            }
            if let Some(n) = seeds {
                cfg.sweep.seeds = *n;
            }
            if *blind {
                cfg.sweep.knows_topology = false;
            }
            let report = threshold_suite(&cfg)?;
            prepare(&cli.out_dir)?;
            write_json(&cli.out_dir.join("thresholds.json"), &report)?;
            write_csv(&cli.out_dir.join("thresholds.csv"), &report.rows)?;
            say(format!(
                "{:<10} {:>9} {:>7} {:>4} {:>8} {:>6}",
                "scheme", "eavesdrop", "tamper", "dos", "garbage", "exact"
            ));
            let show = |x: Option<usize>| x.map_or("-".to_string(), |v| v.to_string());
            for row in &report.table {
                say(format!(
                    "{:<10} {:>9} {:>7} {:>4} {:>8} {:>6}",
                    format!("{}({},{})", row.scheme, row.p, row.t),
                    show(row.eavesdrop),
                    show(row.tamper),
                    show(row.dos),
                    show(row.garbage_dos),
                    row.exact
                ));
            }
        }
        Command::GenTopology { nodes, paths, output } => {
            let text = gen_topology(*nodes, *paths, cli.seed.unwrap_or(0)).map_err(|e| HarnessError::Config {
                path: output.clone().unwrap_or_else(|| "<stdout>".into()),
                message: e.to_string(),
            })?;
            match output {
                Some(path) => fs::write(path, text).map_err(|source| HarnessError::Io {
                    path: path.clone(),
                    source,
                })?,
                None => {
                    let _ = std::io::stdout().write_all(text.as_bytes());
                }
            }
        }
        Command::Verify { config } => {
            let mut cfg = ScenarioConfig::load(config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let report = verify(&cfg)?;
            prepare(&cli.out_dir)?;
            write_json(&cli.out_dir.join("verify.json"), &report)?;
            for c in &report.checks {
                say(format!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail));
            }
            if !report.passed {
                let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                return Err(HarnessError::Invariant(failed.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpagg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
