//! Plans a small sweep on both backends, runs it into a results tree and
//! replays one simulated run from its metadata.

use std::path::PathBuf;

use collbench::orchestrator::{plan_runs, read_index, replay, run_with, Backend, EnvConfig, RunOptions, TestConfig};
use collbench::tracer::Topology;
use collbench::CollectiveKind;

fn main() -> collbench::Result<()> {
    let root: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("collbench-results"));
    let env = EnvConfig::new("desk", Topology::new("desk", 2, 4, 1), &root);

    let mut test = TestConfig::for_collective(CollectiveKind::ReduceScatter);
    test.name = Some("rs-demo".into());
    test.ranks = vec![4, 8];
    test.sizes = "1KiB:64KiB:4".parse()?;
    test.iterations = 5;
    test.warmup = 1;
    test.backend = Backend::Both;
    test.sweeps = vec!["rails2:rails=2".parse()?, "rails4:rails=4".parse()?];

    let plan = plan_runs(&env, &test)?;
    println!("{} points in {} runs", plan.len(), plan.runs().len());
    let out = run_with(&plan, &env, &RunOptions { progress: true, ..Default::default() })?;
    let (rows, _) = read_index(&out.index)?;
    println!("index {} holds {} rows", out.index.display(), rows.len());

    let sim = out.runs.iter().find(|r| r.key.backend == Backend::Netsim).expect("a netsim run");
    let again = replay(&sim.dir.join("metadata.log"), &RunOptions::default())?;
    println!("replayed {} into {}", sim.dir.display(), again.runs[0].dir.display());
    std::process::exit(out.exit_code());
}
