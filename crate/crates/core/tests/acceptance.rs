//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mpagg::adma::{encode, verify_reconstruct, AuthKey, ContributedShare, KeyTable, Verdict, DEFAULT_SUBSET_BUDGET};
use mpagg::adversary::evaluate;
use mpagg::dma::{self, DispersalMatrix, DmaShareSet, ReadingBlock, EXHAUSTIVE_SUBSET_LIMIT};
use mpagg::harness::{
    cmd_run, codec_ratio, closed_form_overhead, gen_topology, overhead_suite, threshold_suite, OverheadReport,
    OverheadSuiteConfig, ScenarioConfig, SchemeSpec, ThresholdSuiteConfig, DEFAULT_SUITE_SKEW,
};
use mpagg::share::{binomial, Combinations};
use mpagg::sma::{self, SmaParams};
use mpagg::{
    run_scenario, AttackKind, AttackPlan, Contributors, FieldElement, PathShare, PrimeField, Scheme, SimParams,
    Topology,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn codec_identities() -> Check {
    let start = Instant::now();
    let topo = Topology::generate(6, 2, 1).map_err(|e| e.to_string())?;
    let mut cases = 0;
    for t in [2usize, 4, 8, 12] {
        for p in t..=16 {
            for scheme in [Scheme::Sma, Scheme::Dma, Scheme::Adma] {
                let params = SimParams::new(scheme, t, p).with_rounds((t * (t - 1)) as u64);
                let m = run_scenario(&topo, &params, 0, None).map_err(|e| e.to_string())?.metrics;
                let (shares, readings) = codec_ratio(scheme, t, p);
                let expected_readings = match scheme {
                    Scheme::Sma => 1,
                    Scheme::Dma => t as u64,
                    _ => t as u64 - 1,
                };
                ensure(shares == p as u64 && readings == expected_readings, || {
                    format!("{scheme}({p},{t}): closed form {shares}/{readings}")
                })?;
                ensure(m.readings_sensed > 0 && m.source_shares * readings == m.readings_sensed * shares, || {
                    format!(
                        "{scheme}({p},{t}): {} shares for {} readings",
                        m.source_shares, m.readings_sensed
                    )
                })?;
                cases += 1;
            }
        }
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("{cases} (scheme, t, p) cases exact"))
}

fn per_topology_reports(grid: Vec<SchemeSpec>, skews: Vec<u64>) -> Result<Vec<(OverheadReport, Duration)>, String> {
    let default = OverheadSuiteConfig::default();
    default
        .paths
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let cfg = OverheadSuiteConfig {
                paths: vec![k],
                topology_seed: default.topology_seed + i as u64,
                skews: skews.clone(),
                grid: grid.clone(),
                ..default.clone()
            };
            let start = Instant::now();
            let report = overhead_suite(&cfg).map_err(|e| e.to_string())?;
            Ok((report, start.elapsed()))
        })
        .collect()
}

fn calibration_points() -> Check {
    let a812 = closed_form_overhead(Scheme::Adma, 8, 12);
    let a1212 = closed_form_overhead(Scheme::Adma, 12, 12);
    ensure((a812 - 5.0 / 7.0).abs() < 1e-12 && (a812 - 0.7).abs() < 0.05, || format!("A-DMA(12,8) = {a812}"))?;
    ensure((a1212 - 1.0 / 11.0).abs() < 1e-12 && (a1212 - 0.1).abs() < 0.01, || {
        format!("A-DMA(12,12) = {a1212}")
    })?;

    let specs = [SchemeSpec::new(Scheme::Adma, 8, 12), SchemeSpec::new(Scheme::Adma, 12, 12)];
    let dma_flat = SchemeSpec::new(Scheme::Dma, 12, 12);
    let grid = vec![specs[0], specs[1], dma_flat];
    let reports = per_topology_reports(grid, vec![0, DEFAULT_SUITE_SKEW])?;
    let mut seen = Vec::new();
    for (i, (report, took)) in reports.iter().enumerate() {
        ensure(*took < Duration::from_secs(60), || format!("topology {i} took {took:.2?}"))?;
        for r in &report.rows {
            ensure(r.gap_explained, || format!("unexplained gap {r:?}"))?;
            let label = SchemeSpec::new(r.scheme, r.t, r.p).label();
            if r.skew == 0 {
                ensure((r.simulated_overhead - r.closed_form).abs() < 1e-9, || {
                    format!("topology {i} {label} without skew: {}", r.simulated_overhead)
                })?;
            } else if r.scheme == Scheme::Adma {
                ensure(r.gap >= 0.0 && r.gap <= 0.4, || {
                    format!(
                        "topology {i} {label}: simulated {:.3}, closed form {:.3}",
                        r.simulated_overhead, r.closed_form
                    )
                })?;
                seen.push(format!("{:.3}", r.simulated_overhead));
            }
        }
    }
    Ok(format!(
        "closed forms {a812:.3} and {a1212:.3}; skew {DEFAULT_SUITE_SKEW} A-DMA(12,8)/(12,12) per topology: {}",
        seen.join(" ")
    ))
}

fn scheme_ordering(report: &OverheadReport) -> Check {
    let mut lines = Vec::new();
    for topo in 0..report.topologies.len() {
        for &skew in &report.config.skews {
            let count = |scheme, t, p| {
                report
                    .rows_for(topo, skew)
                    .find(|r| r.scheme == scheme && r.t == t && r.p == p)
                    .map(|r| r.messages)
            };
            let tree = report
                .rows_for(topo, skew)
                .next()
                .map(|r| r.tree_messages)
                .ok_or("empty report")?;
            let (Some(sma), Some(a8), Some(d8), Some(a12), Some(d12)) = (
                count(Scheme::Sma, 3, 4),
                count(Scheme::Adma, 8, 12),
                count(Scheme::Dma, 8, 12),
                count(Scheme::Adma, 12, 12),
                count(Scheme::Dma, 12, 12),
            ) else {
                return Err("grid incomplete".into());
            };
            let ok = sma > a8 && a8 >= d8 && d8 > tree && a12 >= d12 && d12 >= tree;
            ensure(ok, || {
                format!("topology {topo} skew {skew}: sma {sma} adma8 {a8} dma8 {d8} adma12 {a12} dma12 {d12} tree {tree}")
            })?;
        }
        lines.push(report.topologies[topo].paths.to_string());
    }
    Ok(format!(
        "{} topologies ({} paths) at skews {:?}",
        lines.len(),
        lines.join("/"),
        report.config.skews
    ))
}

fn threshold_table(cfg: &ThresholdSuiteConfig) -> Check {
    let start = Instant::now();
    let report = threshold_suite(cfg).map_err(|e| e.to_string())?;
    within(Duration::from_secs(600), start)?;
    let mut cells = Vec::new();
    for row in &report.table {
        let show = |x: Option<usize>| x.map_or("-".to_string(), |v| v.to_string());
        let cell = format!(
            "{}({},{}) {}/{}/{}/{}",
            row.scheme,
            row.p,
            row.t,
            show(row.eavesdrop),
            show(row.tamper),
            show(row.dos),
            show(row.garbage_dos)
        );
        ensure(row.exact, || format!("{cell}, expected {:?}", row.expected))?;
        cells.push(cell);
    }
    Ok(format!("{} seeds each: {}", cfg.sweep.seeds, cells.join(", ")))
}

fn sma_secrecy() -> Check {
    let start = Instant::now();
    let f = PrimeField::new(11).map_err(|e| e.to_string())?;
    let prm = SmaParams::new(3, 2, f).map_err(|e| e.to_string())?;
    let mut views = 0;
    for q in 1..=3 {
        for y in 0..11 {
            let counts = sma::posterior_counts(&[PathShare::new(q, f.element(y))], &prm, 1000).ok_or("too large")?;
            ensure(counts.len() == 11 && counts.iter().all(|&c| c == 1), || {
                format!("share ({q},{y}): {counts:?}")
            })?;
            views += 1;
        }
    }
    within(Duration::from_secs(1), start)?;
    Ok(format!("{views} single-share views, each secret consistent exactly once"))
}

fn random_tp(rng: &mut ChaCha8Rng, min_t: usize) -> (usize, usize) {
    let t = rng.gen_range(min_t..=8);
    (t, rng.gen_range(t..=10))
}

fn check_subsets(shares: &[PathShare], t: usize, mut ok: impl FnMut(&[PathShare]) -> bool) -> usize {
    let mut failures = 0;
    for idx in Combinations::new(shares.len(), t) {
        let subset: Vec<_> = idx.iter().map(|&i| shares[i]).collect();
        if !ok(&subset) {
            failures += 1;
        }
    }
    failures
}

fn sum_sets(sets: Vec<DmaShareSet>) -> Result<DmaShareSet, String> {
    let mut it = sets.into_iter();
    let first = it.next().ok_or("no sets")?;
    it.try_fold(first, |acc, s| acc.add(&s).map_err(|e| e.to_string()))
}

fn reconstruction_and_homomorphism() -> Check {
    let f = PrimeField::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6005);
    let mut failures = 0;
    let mut subsets = 0u64;
    const CASES: usize = 1000;

    for _ in 0..CASES {
        let (t, p) = random_tp(&mut rng, 1);
        let prm = SmaParams::new(p, t, f).map_err(|e| e.to_string())?;
        let secret = f.random(&mut rng);
        let set = sma::split(secret, &prm, &mut rng).map_err(|e| e.to_string())?;
        let shares: Vec<PathShare> = set.shares().collect();
        failures += check_subsets(&shares, t, |s| sma::reconstruct(s, &prm).ok() == Some(secret));

        let k = rng.gen_range(1..=40);
        let readings: Vec<FieldElement> = (0..k).map(|_| f.random(&mut rng)).collect();
        let mut total = sma::split(readings[0], &prm, &mut rng).map_err(|e| e.to_string())?;
        for &r in &readings[1..] {
            let next = sma::split(r, &prm, &mut rng).map_err(|e| e.to_string())?;
            total = total.add(&next).map_err(|e| e.to_string())?;
        }
        let want = f.sum(readings.iter().copied()).map_err(|e| e.to_string())?;
        let shares: Vec<PathShare> = total.shares().collect();
        failures += check_subsets(&shares, t, |s| sma::reconstruct(s, &prm).ok() == Some(want));
        subsets += 2 * binomial(p, t);
    }

    for _ in 0..CASES {
        let (t, p) = random_tp(&mut rng, 1);
        let m = DispersalMatrix::vandermonde(t, p, f).map_err(|e| e.to_string())?;
        let k = rng.gen_range(1..=40);
        let blocks: Vec<Vec<FieldElement>> = (0..k).map(|_| (0..t).map(|_| f.random(&mut rng)).collect()).collect();
        let sets = blocks
            .iter()
            .map(|b| dma::disperse(&ReadingBlock::new(b.clone()), &m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let single: Vec<PathShare> = sets[0].shares().collect();
        let block0 = ReadingBlock::new(blocks[0].clone());
        failures += check_subsets(&single, t, |s| dma::reconstruct(s, &m).ok().as_ref() == Some(&block0));

        let want: Vec<FieldElement> = (0..t).map(|i| blocks.iter().fold(f.zero(), |acc, b| acc + b[i])).collect();
        let shares: Vec<PathShare> = sum_sets(sets)?.shares().collect();
        failures += check_subsets(&shares, t, |s| {
            dma::reconstruct(s, &m).ok().map(|b| b.into_values()) == Some(want.clone())
        });
        subsets += 2 * binomial(p, t);
    }

    for _ in 0..CASES {
        let (t, p) = random_tp(&mut rng, 2);
        let m = DispersalMatrix::vandermonde(t, p, f).map_err(|e| e.to_string())?;
        let k = rng.gen_range(1..=40u32);
        let keys: KeyTable = (0..k).map(|node| AuthKey { node, key: rng.gen() }).collect();
        let seq: u64 = rng.gen();
        let blocks: Vec<Vec<FieldElement>> =
            (0..k).map(|_| (0..t - 1).map(|_| f.random(&mut rng)).collect()).collect();
        let sets = blocks
            .iter()
            .enumerate()
            .map(|(n, b)| encode(b, &keys.get(n as u32).expect("key"), seq, &m))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let single: Vec<PathShare> = sets[0].shares().collect();
        failures += check_subsets(&single, t, |s| {
            dma::reconstruct(s, &m).ok().map(|b| b.values()[..t - 1].to_vec()) == Some(blocks[0].clone())
        });

        let want: Vec<FieldElement> =
            (0..t - 1).map(|i| blocks.iter().fold(f.zero(), |acc, b| acc + b[i])).collect();
        let who: Contributors = (0..k).collect();
        let shares: Vec<PathShare> = sum_sets(sets)?.shares().collect();
        failures += check_subsets(&shares, t, |s| {
            let contributed: Vec<_> = s
                .iter()
                .map(|&share| ContributedShare {
                    share,
                    contributors: who.clone(),
                })
                .collect();
            verify_reconstruct(&contributed, &keys, seq, &m, 1)
                .is_ok_and(|v| v.verdict == Verdict::Authentic && v.sums == want)
        });
        subsets += 2 * binomial(p, t);
    }

    ensure(failures == 0, || format!("{failures} failing subsets"))?;
    Ok(format!("{CASES} cases per scheme, {subsets} subsets reconstructed, 0 failures"))
}

fn dispersal_matrices() -> Check {
    let f = PrimeField::default();
    let mut configs = 0;
    let mut subsets = 0;
    for p in 1..=16 {
        for t in 1..=p {
            if binomial(p, t) > EXHAUSTIVE_SUBSET_LIMIT {
                continue;
            }
            let m = DispersalMatrix::vandermonde(t, p, f).map_err(|e| e.to_string())?;
            let (count, ok) = m.verify_exhaustive();
            ensure(ok && count == binomial(p, t), || format!("({t},{p}): {count} checked, ok = {ok}"))?;
            configs += 1;
            subsets += count;
        }
    }
    Ok(format!("{configs} (t, p) shapes with p <= 16, {subsets} submatrices invertible"))
}

struct AdmaCase {
    t: usize,
    p: usize,
    m: DispersalMatrix,
    keys: KeyTable,
    who: Contributors,
    seq: u64,
    truth: Vec<FieldElement>,
    shares: Vec<PathShare>,
}

/// Random A-DMA aggregate with every subset reachable within the default
/// retry budget.
fn adma_case(rng: &mut ChaCha8Rng) -> Result<AdmaCase, String> {
    let f = PrimeField::default();
    let shapes: Vec<(usize, usize)> = (2..=12)
        .flat_map(|p| (2..=p).map(move |t| (t, p)))
        .filter(|&(t, p)| binomial(p, t) <= DEFAULT_SUBSET_BUDGET as u64)
        .collect();
    let &(t, p) = shapes.choose(rng).ok_or("no shapes")?;
    let m = DispersalMatrix::vandermonde(t, p, f).map_err(|e| e.to_string())?;
    let k = rng.gen_range(1..=10u32);
    let keys: KeyTable = (0..k).map(|node| AuthKey { node, key: rng.gen() }).collect();
    let seq: u64 = rng.gen_range(0..1000);
    let mut truth = vec![f.zero(); t - 1];
    let mut sets = Vec::new();
    for n in 0..k {
        let block: Vec<_> = (0..t - 1).map(|_| f.element(rng.gen_range(0..1 << 16))).collect();
        for (s, &x) in truth.iter_mut().zip(&block) {
            *s += x;
        }
        sets.push(encode(&block, &keys.get(n).expect("key"), seq, &m).map_err(|e| e.to_string())?);
    }
    Ok(AdmaCase {
        t,
        p,
        m,
        keys,
        who: (0..k).collect(),
        seq,
        truth,
        shares: sum_sets(sets)?.shares().collect(),
    })
}

impl AdmaCase {
    fn verify(&self, shares: &[PathShare]) -> Result<(Verdict, Vec<FieldElement>), String> {
        let contributed: Vec<_> = shares
            .iter()
            .map(|&share| ContributedShare {
                share,
                contributors: self.who.clone(),
            })
            .collect();
        let v = verify_reconstruct(&contributed, &self.keys, self.seq, &self.m, DEFAULT_SUBSET_BUDGET)
            .map_err(|e| e.to_string())?;
        Ok((v.verdict, v.sums))
    }
}

fn adma_boundary() -> Check {
    const TRIALS: usize = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0xAD3A);
    let f = PrimeField::default();

    let mut false_dos = 0;
    for _ in 0..TRIALS {
        let case = adma_case(&mut rng)?;
        let c = rng.gen_range(0..=case.p - case.t);
        let mut shares = case.shares.clone();
        let mut idx: Vec<usize> = (0..case.p).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..c] {
            shares[i].value = f.random(&mut rng);
        }
        let (verdict, sums) = case.verify(&shares)?;
        if verdict != Verdict::Authentic || sums != case.truth {
            false_dos += 1;
        }
    }
    ensure(false_dos == 0, || format!("{false_dos} false DoS with <= p-t garbage paths"))?;

    let mut forgeries = 0;
    for trial in 0..TRIALS {
        let case = adma_case(&mut rng)?;
        let c = rng.gen_range(1..case.t);
        let mut shares = case.shares.clone();
        if trial % 2 == 0 {
            // random values on random paths
            let mut idx: Vec<usize> = (0..case.p).collect();
            idx.shuffle(&mut rng);
            for &i in &idx[..c] {
                shares[i].value += f.element(rng.gen_range(1..f.modulus()));
            }
        } else {
            // the consistent shift, on the lowest paths
            let delta = f.element(rng.gen_range(1..f.modulus()));
            for s in &mut shares[..c] {
                s.value += delta * case.m.coefficient(1, s.path);
            }
        }
        let (verdict, sums) = case.verify(&shares)?;
        if verdict == Verdict::Authentic && sums != case.truth {
            forgeries += 1;
        }
    }
    ensure(forgeries == 0, || format!("{forgeries} forgeries accepted from < t paths"))?;

    let mut pinned = Vec::new();
    for (t, p) in [(2, 3), (2, 4), (3, 8), (8, 12)] {
        let topo = Topology::generate(24, p, 7).map_err(|e| e.to_string())?;
        let mut params = SimParams::new(Scheme::Adma, t, p);
        params = params.clone().with_rounds(2 * params.block_len() as u64);
        let plan = AttackPlan::new(AttackKind::Tamper).on_paths(t);
        let out = run_scenario(&topo, &params, 7, Some(&plan)).map_err(|e| e.to_string())?;
        let outcome = evaluate(&plan, &params, &out);
        ensure(outcome.meaning_controlled && outcome.sink_accepted_forgery, || {
            format!("A-DMA({p},{t}): forgery from t paths not accepted")
        })?;
        let below = AttackPlan::new(AttackKind::Tamper).on_paths(t - 1);
        let out = run_scenario(&topo, &params, 7, Some(&below)).map_err(|e| e.to_string())?;
        ensure(!evaluate(&below, &params, &out).sink_accepted_forgery, || {
            format!("A-DMA({p},{t}): forgery from t-1 paths accepted")
        })?;
        pinned.push(format!("({p},{t})"));
    }

    Ok(format!(
        "{TRIALS} garbage trials all authentic, {TRIALS} tamper trials 0 forgeries, t-path forgery accepted for {}",
        pinned.join(" ")
    ))
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

fn determinism(first_overhead: &OverheadReport, threshold_cfg: &ThresholdSuiteConfig) -> Check {
    let again = overhead_suite(&first_overhead.config).map_err(|e| e.to_string())?;
    ensure(json(first_overhead) == json(&again), || "overhead suite reports differ".into())?;

    let a = threshold_suite(threshold_cfg).map_err(|e| e.to_string())?;
    let b = threshold_suite(threshold_cfg).map_err(|e| e.to_string())?;
    ensure(json(&a) == json(&b), || "threshold suite reports differ".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let topo = dir.path().join("topology.txt");
    fs::write(&topo, gen_topology(40, 6, 3).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let cfg = ScenarioConfig {
        t: 4,
        p: 8,
        skew: DEFAULT_SUITE_SKEW,
        duration: 3000,
        attack: Some(AttackPlan::new(AttackKind::GarbageDos).on_paths(2)),
        ..ScenarioConfig::new(Scheme::Adma, &topo)
    };
    let (one, two) = (dir.path().join("one"), dir.path().join("two"));
    cmd_run(&cfg, &one).map_err(|e| e.to_string())?;
    cmd_run(&cfg, &two).map_err(|e| e.to_string())?;
    for name in ["report.json", "metrics.csv", "reconstructions.json"] {
        let x = fs::read(one.join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(two.join(name)).map_err(|e| e.to_string())?;
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok("overhead suite, threshold suite and run outputs byte-identical across reruns".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, result: Check| {
        let took = start.elapsed();
        match result {
            Ok(detail) => println!("PASS {n} {name}: {detail} [{took:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail} [{took:.2?}]");
            }
        }
    };

    let s = Instant::now();
    report(1, "codec overhead identities", s, codec_identities());

    let s = Instant::now();
    report(2, "calibration points", s, calibration_points());

    let s = Instant::now();
    let suite = overhead_suite(&OverheadSuiteConfig::default());
    let ordering = match &suite {
        Ok(r) => within(Duration::from_secs(300), s).and_then(|_| scheme_ordering(r)),
        Err(e) => Err(e.to_string()),
    };
    report(3, "scheme ordering", s, ordering);

    let threshold_cfg = ThresholdSuiteConfig::default();
    let s = Instant::now();
    report(4, "threshold table", s, threshold_table(&threshold_cfg));

    let s = Instant::now();
    report(5, "SMA perfect secrecy", s, sma_secrecy());

    let s = Instant::now();
    report(6, "reconstruction and homomorphism", s, reconstruction_and_homomorphism());

    let s = Instant::now();
    report(7, "dispersal matrix invertibility", s, dispersal_matrices());

    let s = Instant::now();
    report(8, "A-DMA verification boundary", s, adma_boundary());

    let s = Instant::now();
    let det = match &suite {
        Ok(r) => determinism(r, &threshold_cfg),
        Err(e) => Err(e.to_string()),
    };
    report(9, "determinism", s, det);

    if failed == 0 {
        println!("all 9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
