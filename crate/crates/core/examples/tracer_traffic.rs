//! Where the bytes of two reduce-scatter variants travel on a two-group
//! machine, with the rank placement and an SVG panel.

use std::path::PathBuf;

use collbench::analysis::{render, Artifact, PlotMeta};
use collbench::tracer::{make_allocation, rank_cell_map, trace, AllocationPolicy, Topology};
use collbench::{build_schedule, AlgorithmId};

fn main() -> collbench::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("collbench-tracer"));
    let topo = Topology::new("two-groups", 2, 4, 1);
    for policy in [AllocationPolicy::Block, AllocationPolicy::RoundRobin] {
        let alloc = make_allocation(policy, 8, &topo)?;
        println!("{policy} placement\n{}", rank_cell_map(&alloc, &topo).render_text());
        let mut reports = Vec::new();
        for alg in [AlgorithmId::ReduceScatterDistanceHalving, AlgorithmId::ReduceScatterDistanceDoubling] {
            let mut r = trace(&build_schedule(alg, 8, 1024, 4)?, &alloc, &topo)?;
            r.label = alg.name().into();
            println!("  {:<18} local {:>5} B  global {:>5} B", r.label, r.local_bytes, r.global_bytes);
            reports.push(r);
        }
        let meta = PlotMeta {
            test_id: format!("reduce-scatter-{policy}"),
            system: topo.name.clone(),
            variant: policy.to_string(),
        };
        let (svg, _) = render(Artifact::TracerPanel(&reports), &meta, &out)?;
        println!("  {}\n", svg.display());
    }
    Ok(())
}
