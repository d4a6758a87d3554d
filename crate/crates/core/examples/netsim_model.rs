//! Cost model tour: closed form against the simulator, the effect of rails
//! on either side of the eager threshold, and throughput conventions.

use collbench::netsim::{predict_closed_form, simulate, throughput, Convention, NetworkModel};
use collbench::tracer::{make_allocation, AllocationPolicy, Topology};
use collbench::{build_schedule, AlgorithmId, CollectiveKind};

fn main() -> collbench::Result<()> {
    let p = 16;
    let topo = Topology::new("two-groups", 2, 8, 1);
    let alloc = make_allocation(AllocationPolicy::Block, p, &topo)?;

    let flat = NetworkModel::homogeneous(2e-6, 1e-10, 2.5e-10);
    println!("homogeneous model, p={p}");
    for alg in AlgorithmId::for_collective(CollectiveKind::Allreduce) {
        let n = 1 << 20;
        let sim = simulate(&build_schedule(alg, p, n, 4)?, &flat, &alloc, &topo)?.makespan();
        let cf = predict_closed_form(alg, p, n, 4, &flat)?;
        println!("  {:<28} simulated {sim:.6e} s  closed form {cf:.6e} s", alg.to_string());
    }

    let base = NetworkModel::default();
    println!("\nring allreduce, default model, eager threshold {} B", base.eager_threshold);
    for n in [64 << 10, 64 << 20] {
        let s = build_schedule(AlgorithmId::AllreduceRing, p, n, 4)?;
        for rails in [1, 2, 4] {
            let m = NetworkModel { rails, ..base.clone() };
            let t = simulate(&s, &m, &alloc, &topo)?.makespan();
            let good = throughput(CollectiveKind::Allreduce, n as u64, p, t, Convention::Goodput)?;
            let bus = throughput(CollectiveKind::Allreduce, n as u64, p, t, Convention::BusBandwidth)?;
            println!(
                "  {:>9} B  rails {rails}  {t:.4e} s  goodput {:.2} Gb/s  bus {:.2} Gb/s",
                n,
                good / 1e9,
                bus / 1e9
            );
        }
    }
    Ok(())
}
