//! Simulates an allreduce sweep, then derives the gain heatmap, per-size
//! lines, a phase breakdown and a tuning table from the written results.

use std::path::PathBuf;

use collbench::analysis::{self, render, Artifact, PlotMeta, Selection};
use collbench::orchestrator::{plan_runs, run_with, Backend, EnvConfig, RunOptions, TestConfig};
use collbench::tracer::Topology;
use collbench::{AlgorithmId, CollectiveKind};

fn main() -> collbench::Result<()> {
    let root: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("collbench-analysis"));
    let env = EnvConfig::new("desk", Topology::new("desk", 4, 4, 2), &root);
    let mut test = TestConfig::for_collective(CollectiveKind::Allreduce);
    test.name = Some("allreduce".into());
    test.ranks = vec![4, 8, 16, 32];
    test.sizes = "1KiB:64MiB:4".parse()?;
    test.iterations = 3;
    test.warmup = 0;
    test.backend = Backend::Netsim;
    let out = run_with(&plan_runs(&env, &test)?, &env, &RunOptions::default())?;

    let records = analysis::aggregate(&out.index, &Selection::default())?.records;
    let dir = root.join("plots");
    let meta = PlotMeta {
        test_id: "allreduce".into(),
        system: "desk".into(),
        variant: "default".into(),
    };
    let gain = analysis::gain_matrix(&records, AlgorithmId::AllreduceRing);
    let series = analysis::median_series(&records, 16);
    let bars = analysis::phase_breakdown(&records)?;
    for artifact in [Artifact::Heatmap(&gain), Artifact::Lines(&series), Artifact::Breakdown(&bars)] {
        let (svg, csv) = render(artifact, &meta, &dir)?;
        println!("{}\n{}", svg.display(), csv.display());
    }
    print!("\n{}", analysis::emit_tuning_table(&records).to_text());
    Ok(())
}
