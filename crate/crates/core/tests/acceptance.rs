//! Exit criteria. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use collbench::algorithms::{build_schedule, cost_terms, AlgorithmId};
use collbench::analysis::{self, Selection, TuningTable};
use collbench::cli::run_cli;
use collbench::fabric::{default_inputs, execute, ExecOptions};
use collbench::model::{naive_oracle, CollectiveKind, DataType, PhaseTag, ReduceOp};
use collbench::netsim::{predict_closed_form, simulate, simulate_excluding, NetworkModel};
use collbench::orchestrator::{
    self, plan_runs, read_index, render_results, run_with, Backend, EnvConfig, GranularityMode, ModelOverrides,
    RunOptions, SeriesKey, Sweep, TestConfig, INDEX_HEADER,
};
use collbench::tracer::{make_allocation, trace, AllocationPolicy, Topology};
use collbench::wizard::{self, Field, Screen, WizardState};

type Outcome = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn log2(p: usize) -> usize {
    p.trailing_zeros() as usize
}

/// Two groups, one rank per node, `p/2` nodes per group.
fn two_groups(p: usize) -> Topology {
    Topology::new("two-groups", 2, p.div_ceil(2), 1)
}

fn rank_counts(alg: AlgorithmId) -> Vec<usize> {
    let mut ps = vec![2, 4, 8, 16];
    if !alg.requires_power_of_two() {
        ps.extend([3, 5, 6]);
    }
    ps
}

fn oracle_equivalence() -> Outcome {
    let opts = ExecOptions {
        iterations: 1,
        warmup: 0,
        ..Default::default()
    };
    let dtype = DataType::Int64;
    let mut checked = 0;
    for alg in AlgorithmId::ALL {
        for p in rank_counts(alg) {
            for n in [p, 4 * p, 64 * p] {
                let s = build_schedule(alg, p, n * dtype.width(), dtype.width()).map_err(e)?;
                let inputs = default_inputs(&s, dtype, Some((p * 1000 + n) as u64));
                let got = execute(&s, &inputs, ReduceOp::Sum, &opts).map_err(e)?.outputs;
                let want = naive_oracle(alg.collective(), &inputs, ReduceOp::Sum).map_err(e)?;
                ensure!(got == want, "{} p={p} n={n}: output differs from the oracle", alg);
                checked += 1;
            }
        }
    }
    ensure!(checked == 3 * (9 * 4 + 4 * 3), "ran {checked} cases");
    Ok(())
}

fn ring_laws() -> Outcome {
    for p in 2..=16 {
        for k in [1, 3, 16] {
            let n = p * 4 * k;
            let s = build_schedule(AlgorithmId::AllreduceRing, p, n, 4).map_err(e)?;
            for r in 0..p {
                let c = cost_terms(&s, r).map_err(e)?;
                ensure!(c.steps == 2 * (p - 1), "p={p}: A={}", c.steps);
                ensure!(c.bytes_sent * p == 2 * n * (p - 1), "p={p} n={n} rank {r}: B={}", c.bytes_sent);
            }
        }
    }
    Ok(())
}

fn step_laws() -> Outcome {
    for p in [2, 4, 8, 16, 32] {
        let steps = |alg| -> Result<usize, String> {
            Ok(build_schedule(alg, p, 64 * p * 4, 4).map_err(e)?.steps())
        };
        ensure!(steps(AlgorithmId::AllreduceRecursiveDoubling)? == log2(p), "recursive doubling p={p}");
        ensure!(steps(AlgorithmId::AllreduceRabenseifner)? == 2 * log2(p), "rabenseifner p={p}");
    }
    for p in [2, 3, 4, 5, 6, 8, 16] {
        let s = build_schedule(AlgorithmId::AlltoallPairwise, p, 16 * p * 4, 4).map_err(e)?;
        ensure!(s.steps() == p - 1, "pairwise p={p}: {} steps", s.steps());
    }
    Ok(())
}

fn closed_form_agreement() -> Outcome {
    let models = [
        NetworkModel::homogeneous(2e-6, 1e-10, 3e-10),
        NetworkModel {
            eager_threshold: 2048,
            rails: 2,
            copy_beta: 4e-11,
            alloc_alpha: 5e-7,
            ..NetworkModel::homogeneous(1.5e-6, 8e-11, 2.5e-10)
        },
    ];
    for model in &models {
        for alg in AlgorithmId::ALL {
            for p in [2, 4, 8, 16] {
                let topo = two_groups(p);
                let alloc = make_allocation(AllocationPolicy::Block, p, &topo).map_err(e)?;
                for n in [p * 4, p * 256, p * 4096] {
                    let s = build_schedule(alg, p, n, 4).map_err(e)?;
                    let sim = simulate(&s, model, &alloc, &topo).map_err(e)?.makespan();
                    let cf = predict_closed_form(alg, p, n, 4, model).map_err(e)?;
                    ensure!(sim == cf, "{alg} p={p} n={n}: simulated {sim:e} vs closed form {cf:e}");
                }
            }
        }
    }
    Ok(())
}

/// Per-class bytes of a recursive reduce-scatter, enumerated from XOR
/// partners: step `i` (1-based) sends `n/2^i` bytes to `r ^ distance(i)`.
fn xor_partner_traffic(p: usize, n: u64, per_group: usize, distance: impl Fn(usize) -> usize) -> (u64, u64) {
    let (mut local, mut global) = (0, 0);
    for i in 1..=log2(p) {
        for r in 0..p {
            let q = r ^ distance(i);
            let bytes = n >> i;
            if r / per_group == q / per_group {
                local += bytes;
            } else {
                global += bytes;
            }
        }
    }
    (local, global)
}

fn tracer_case() -> Outcome {
    let (p, n) = (8, 1024);
    let topo = Topology::new("two-groups", 2, 4, 1);
    let alloc = make_allocation(AllocationPolicy::Block, p, &topo).map_err(e)?;
    let doubling = xor_partner_traffic(p, n as u64, 4, |i| 1 << (i - 1));
    let halving = xor_partner_traffic(p, n as u64, 4, |i| p >> i);
    ensure!(doubling == (6144, 1024) && halving == (3072, 4096), "oracle drifted: {doubling:?} {halving:?}");
    for (alg, (local, global)) in [
        (AlgorithmId::ReduceScatterDistanceDoubling, doubling),
        (AlgorithmId::ReduceScatterDistanceHalving, halving),
    ] {
        let r = trace(&build_schedule(alg, p, n, 4).map_err(e)?, &alloc, &topo).map_err(e)?;
        ensure!(r.global_bytes == global && r.local_bytes == local, "{alg}: {r:?}");
        ensure!(r.total() == 7168 && r.intra_node_bytes == 0, "{alg}: total {}", r.total());
    }
    Ok(())
}

fn locality() -> Outcome {
    let mut failures = Vec::new();
    for p in [4, 8, 16, 32] {
        for groups in [2, 4] {
            // Ranks spread evenly over the groups, one per node.
            let topo = Topology::new("groups", groups, p / groups, 1);
            let alloc = make_allocation(AllocationPolicy::Block, p, &topo).map_err(e)?;
            let local = |alg| -> Result<u64, String> {
                let s = build_schedule(alg, p, p * 64, 4).map_err(e)?;
                Ok(trace(&s, &alloc, &topo).map_err(e)?.local_bytes)
            };
            let d = local(AlgorithmId::ReduceScatterDistanceDoubling)?;
            let h = local(AlgorithmId::ReduceScatterDistanceHalving)?;
            if d <= h {
                failures.push(format!("p={p} groups={groups}: doubling {d} B vs halving {h} B"));
            }
        }
    }
    ensure!(failures.is_empty(), "not strictly more local: {}", failures.join("; "));
    Ok(())
}

fn rails_regimes() -> Outcome {
    let (p, small, large) = (8, 4 << 10, 4 << 20);
    let topo = two_groups(p);
    let alloc = make_allocation(AllocationPolicy::Block, p, &topo).map_err(e)?;
    let base = NetworkModel {
        eager_threshold: 64 << 10,
        ..NetworkModel::homogeneous(1e-7, 1e-9, 0.0)
    };
    let time = |n: usize, rails: u32| -> Result<f64, String> {
        let s = build_schedule(AlgorithmId::AllreduceRecursiveDoubling, p, n, 4).map_err(e)?;
        let m = NetworkModel { rails, ..base.clone() };
        Ok(simulate(&s, &m, &alloc, &topo).map_err(e)?.makespan())
    };
    let (s2, s4) = (time(small, 2)?, time(small, 4)?);
    ensure!(s2 == s4, "below threshold: {s2:e} vs {s4:e}");
    let (l2, l4) = (time(large, 2)?, time(large, 4)?);
    ensure!(l2 / l4 >= 1.9, "above threshold: speedup {:.4}", l2 / l4);
    Ok(())
}

/// Default network model, ring allreduce over two groups of four, float32.
fn crossover() -> Outcome {
    let p = 8;
    let topo = two_groups(p);
    let alloc = make_allocation(AllocationPolicy::Block, p, &topo).map_err(e)?;
    let model = NetworkModel::default();
    ensure!(model.gamma > 0.0 && model.copy_beta > 0.0, "parameter set");
    let without = |phases: &[PhaseTag], s: &collbench::algorithms::Schedule| -> Result<f64, String> {
        let ex: BTreeSet<PhaseTag> = phases.iter().copied().chain([PhaseTag::Sync]).collect();
        Ok(simulate_excluding(s, &model, &alloc, &topo, &ex).map_err(e)?.makespan())
    };
    let mut signs = Vec::new();
    let mut n = 1 << 10;
    while n <= 256 << 20 {
        let s = build_schedule(AlgorithmId::AllreduceRing, p, n, 4).map_err(e)?;
        let d = without(&[PhaseTag::Copy, PhaseTag::Alloc], &s)? - without(&[PhaseTag::Reduction], &s)?;
        signs.push((n, d));
        n *= 2;
    }
    let changes = signs.windows(2).filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0)).count();
    let first = signs[0].1;
    let last = signs[signs.len() - 1].1;
    ensure!(
        first < 0.0 && last > 0.0 && changes == 1,
        "difference (exclude copy+alloc minus exclude reduction) by size: {signs:?}"
    );
    Ok(())
}

fn tuning_selection() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let mut env = EnvConfig::new("desk", Topology::new("t", 2, 4, 1), dir.path().join("results"));
    env.network_model = ModelOverrides {
        alpha: Some(1e-5),
        beta: Some(1e-10),
        gamma: Some(0.0),
        copy_beta: Some(0.0),
        alloc_alpha: Some(0.0),
        eager_threshold: Some(0),
        rails: Some(1),
        ..Default::default()
    };
    let mut t = TestConfig::for_collective(CollectiveKind::Allreduce);
    t.algorithms = vec!["ring".into(), "recursive_doubling".into()];
    t.ranks = vec![8];
    t.sizes.min_bytes = 1 << 10;
    t.sizes.max_bytes = 16 << 20;
    t.iterations = 1;
    t.warmup = 0;
    t.backend = Backend::Netsim;
    let out = run_with(&plan_runs(&env, &t).map_err(e)?, &env, &RunOptions::default()).map_err(e)?;
    ensure!(out.exit_code() == 0, "run failed: {:?}", out.runs);
    let agg = analysis::aggregate(&out.index, &Selection::default()).map_err(e)?;
    let table = TuningTable::parse(&analysis::emit_tuning_table(&agg.records).to_text()).map_err(e)?;
    let picks: Vec<(u64, String)> = t
        .sizes
        .expand()
        .into_iter()
        .map(|n| (n, table.lookup(CollectiveKind::Allreduce, 8, n).unwrap_or("-").to_string()))
        .collect();
    let switches = picks.windows(2).filter(|w| w[0].1 != w[1].1).count();
    ensure!(
        picks[0].1 == "recursive_doubling" && picks[picks.len() - 1].1 == "ring" && switches == 1,
        "selection by size: {picks:?}"
    );
    Ok(())
}

/// Statistics of one slice, computed straight from the definitions.
fn oracle_stats(v: &[f64]) -> [f64; 5] {
    let n = v.len() as f64;
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut sum = 0.0;
    for x in v {
        sum += x;
    }
    let mean = sum / n;
    let median = if s.len() % 2 == 1 {
        s[s.len() / 2]
    } else {
        (s[s.len() / 2 - 1] + s[s.len() / 2]) / 2.0
    };
    let mut sq = 0.0;
    for x in v {
        sq += (x - mean) * (x - mean);
    }
    [s[0], s[s.len() - 1], mean, median, (sq / n).sqrt()]
}

fn granularity_consistency() -> Outcome {
    let mut rng = StdRng::seed_from_u64(10);
    for _ in 0..3 {
        let alg = AlgorithmId::ALL[rng.gen_range(0..AlgorithmId::ALL.len())];
        let p = [2, 4, 8][rng.gen_range(0..3)];
        let n = (p * 4) << rng.gen_range(0..8);
        let s = build_schedule(alg, p, n, 4).map_err(e)?;
        let opts = ExecOptions {
            iterations: rng.gen_range(2..6),
            warmup: 1,
            ..Default::default()
        };
        let exec = execute(&s, &default_inputs(&s, DataType::Float32, None), ReduceOp::Sum, &opts).map_err(e)?;
        let key = SeriesKey {
            collective: alg.collective(),
            algorithm: alg.name().into(),
            ranks: p,
            msg_bytes: n as u64,
            variant: "default".into(),
        };
        let render = |mode| render_results(&key, &exec.measurements, mode).map_err(e);
        let full = render(GranularityMode::Full)?;

        // Rebuild the reduced files from the Full text alone.
        let prefix = format!("{},{},{p},{n},default", alg.collective(), alg.name());
        let mut by_iter: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for line in full.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let it: usize = f[5].parse().map_err(e)?;
            let rank: usize = f[6].parse().map_err(e)?;
            by_iter.entry(it).or_default().push((rank, f[7].parse().map_err(e)?));
        }
        let mut stats = String::from(orchestrator::results::STATISTICS_HEADER);
        let mut minimal = String::from(orchestrator::results::MINIMAL_HEADER);
        let mut all = Vec::new();
        for (it, rows) in &mut by_iter {
            rows.sort_by_key(|r| r.0);
            let v: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let [min, max, mean, median, _] = oracle_stats(&v);
            stats += &format!("\n{prefix},{it},{min},{max},{mean},{median}");
            minimal += &format!("\n{prefix},{it},{max}");
            all.extend(v);
        }
        let [min, max, mean, median, sd] = oracle_stats(&all);
        let summary = format!("{}\n{prefix},{min},{max},{mean},{median},{sd}\n", orchestrator::results::SUMMARY_HEADER);
        stats.push('\n');
        minimal.push('\n');

        ensure!(render(GranularityMode::Statistics)? == stats, "{alg} p={p}: statistics differ");
        ensure!(render(GranularityMode::Minimal)? == minimal, "{alg} p={p}: minimal differs");
        ensure!(render(GranularityMode::Summary)? == summary, "{alg} p={p}: summary differs");
    }
    Ok(())
}

fn csv_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(e)? {
        let path = entry.map_err(e)?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name.ends_with(".csv") {
            out.insert(name, fs::read(&path).map_err(e)?);
        }
    }
    Ok(out)
}

fn replay_and_structure() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let env = EnvConfig::new("desk", Topology::new("t", 2, 2, 2), dir.path().join("results"));
    let mut t = TestConfig::for_collective(CollectiveKind::Allreduce);
    t.sizes.max_bytes = 4096;
    t.ranks = vec![2, 4];
    t.iterations = 2;
    t.warmup = 1;
    t.backend = Backend::Both;
    t.sweeps = vec![
        Sweep {
            name: "rails1".into(),
            set: ModelOverrides::default(),
        },
        "rails4:rails=4,eager_threshold=1KiB".parse().map_err(e)?,
    ];
    let quiet = RunOptions::default();
    let first = run_with(&plan_runs(&env, &t).map_err(e)?, &env, &quiet).map_err(e)?;
    ensure!(first.runs.len() == 8 && first.exit_code() == 0, "mixed plan: {:?}", first.runs);

    // Replay every NetSim run from its metadata alone, into a separate tree.
    let elsewhere = RunOptions {
        output_root: Some(dir.path().join("replays")),
        ..Default::default()
    };
    for r in first.runs.iter().filter(|r| r.key.backend == Backend::Netsim) {
        let again = orchestrator::replay(&r.dir.join("metadata.log"), &elsewhere).map_err(e)?;
        ensure!(again.runs.len() == 1, "replay ran {} runs", again.runs.len());
        ensure!(
            csv_files(&again.runs[0].dir)? == csv_files(&r.dir)?,
            "replay of {} differs",
            r.dir.display()
        );
    }

    // Two more runs under a fixed timestamp; the p2 directory is blocked.
    let mut t2 = t.clone();
    t2.backend = Backend::Netsim;
    t2.sweeps.clear();
    t2.name = Some("second".into());
    let blocked = env.output_dir().join("desk").join("fixed").join("netsim-default");
    fs::create_dir_all(&blocked).map_err(e)?;
    fs::write(blocked.join("p2_block"), "").map_err(e)?;
    let opts = RunOptions {
        timestamp: Some("fixed".into()),
        ..Default::default()
    };
    let second = run_with(&plan_runs(&env, &t2).map_err(e)?, &env, &opts).map_err(e)?;
    ensure!(second.exit_code() == 1 && second.failed() == 1, "forced failure: {:?}", second.runs);
    ensure!(second.index == first.index, "plans wrote different indexes");

    let text = fs::read_to_string(&first.index).map_err(e)?;
    ensure!(text.lines().next() == Some(INDEX_HEADER), "index header");
    let (rows, skipped) = read_index(&first.index).map_err(e)?;
    ensure!(rows.len() == 10 && skipped == 0, "{} index rows, {skipped} skipped", rows.len());
    ensure!(rows.iter().filter(|r| r.status == "failed").count() == 1, "failed rows");
    let base = first.index.parent().unwrap();
    let mut seen = BTreeSet::new();
    for row in &rows {
        let rel = PathBuf::from(&row.path);
        ensure!(rel.is_relative() && seen.insert(rel.clone()), "path {}", row.path);
        let parts: Vec<String> = rel.iter().map(|c| c.to_string_lossy().into_owned()).collect();
        ensure!(parts.len() == 3 && parts[0] == row.timestamp, "path {} vs timestamp {}", row.path, row.timestamp);
        ensure!(parts[1] == format!("{}-{}", row.backend, row.variants), "backend dir {}", parts[1]);
        ensure!(parts[2] == format!("p{}_block", row.ranks), "rank dir {}", parts[2]);
        let run_dir = base.join(&rel);
        if row.status == "ok" {
            ensure!(run_dir.join("metadata.log").is_file(), "{} lacks metadata.log", row.path);
            ensure!(run_dir.join("alloc.csv").is_file(), "{} lacks alloc.csv", row.path);
            let results = csv_files(&run_dir)?.len() - 1;
            ensure!(results == 3 * 3, "{}: {results} result files", row.path);
        } else {
            ensure!(!run_dir.is_dir(), "failed run left a directory");
        }
    }
    // Every run directory on disk is indexed.
    for ts in fs::read_dir(base).map_err(e)? {
        let ts = ts.map_err(e)?.path();
        if !ts.is_dir() {
            continue;
        }
        for bv in fs::read_dir(&ts).map_err(e)? {
            for run in fs::read_dir(bv.map_err(e)?.path()).map_err(e)? {
                let run = run.map_err(e)?.path();
                if run.is_dir() {
                    let rel = run.strip_prefix(base).map_err(e)?.to_path_buf();
                    ensure!(seen.contains(&rel), "unindexed {}", rel.display());
                }
            }
        }
    }
    Ok(())
}

fn cli(args: &[&str]) -> Result<String, String> {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(std::iter::once("collbench").chain(args.iter().copied()), &mut out, &mut err);
    ensure!(code == 0, "`{}` exited {code}: {}", args.join(" "), String::from_utf8_lossy(&err));
    String::from_utf8(out).map_err(e)
}

fn wizard_cli_equivalence() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let target = dir.path().join("wizard.json");
    let script = format!("{}{}\ny\n", "\n".repeat(12), target.display());
    let written = wizard::run_wizard(None, script.as_bytes(), Vec::new()).map_err(e)?;
    ensure!(written.as_deref() == Some(target.as_path()), "wizard wrote {written:?}");
    let from_wizard = fs::read_to_string(&target).map_err(e)?;

    ensure!(cli(&["gen"])? == from_wizard, "bare `gen` differs from the wizard defaults");
    let explicit = cli(&[
        "gen",
        "--collective",
        "allreduce",
        "--algorithms",
        "ring,recursive_doubling,rabenseifner",
        "--ranks",
        "4",
        "--sizes",
        "1KiB:1MiB:2",
        "--datatype",
        "float32",
        "--op",
        "sum",
        "--backend",
        "fabric",
    ])?;
    ensure!(explicit == from_wizard, "explicit `gen` differs:\n{explicit}\nvs\n{from_wizard}");

    let mut w = WizardState::new(None);
    while w.field() != Field::Sizes {
        w.submit("");
    }
    w.submit("1KiB:4KiB:1");
    ensure!(w.field() == Field::Sizes, "focus moved past an invalid size range");
    for _ in 0..4 {
        w.submit("");
    }
    ensure!(w.screen() == Screen::Scale, "left the screen with multiplier 1");
    ensure!(!w.screen_violations(Screen::Scale).is_empty(), "no violation reported");
    Ok(())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("oracle equivalence", oracle_equivalence),
        ("ring volume and step laws", ring_laws),
        ("step counts", step_laws),
        ("simulation matches closed form", closed_form_agreement),
        ("tracer halving vs doubling", tracer_case),
        ("doubling is more local", locality),
        ("rails only help above the eager threshold", rails_regimes),
        ("phase-exclusion crossover", crossover),
        ("tuning picks recursive doubling then ring", tuning_selection),
        ("granularity files recomputable from full", granularity_consistency),
        ("replay fidelity and results tree", replay_and_structure),
        ("wizard and gen agree", wizard_cli_equivalence),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(()) => println!("PASS {:>2} {name} ({secs:.2}s)", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {msg}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
