//! Which hurts more at each size: buffer management (copies and
//! allocations) or the reduction itself? Prints the simulated time with each
//! excluded and where the answer flips.

use std::collections::BTreeSet;

use collbench::netsim::{simulate_excluding, NetworkModel};
use collbench::tracer::{make_allocation, AllocationPolicy, Topology};
use collbench::{build_schedule, AlgorithmId, PhaseTag};

fn main() -> collbench::Result<()> {
    let p = 8;
    let topo = Topology::new("two-groups", 2, 4, 1);
    let alloc = make_allocation(AllocationPolicy::Block, p, &topo)?;
    let model = NetworkModel::default();
    let without = |phases: &[PhaseTag], n: usize| -> collbench::Result<f64> {
        let s = build_schedule(AlgorithmId::AllreduceRing, p, n, 4)?;
        let ex: BTreeSet<_> = phases.iter().copied().chain([PhaseTag::Sync]).collect();
        Ok(simulate_excluding(&s, &model, &alloc, &topo, &ex)?.makespan())
    };
    let mut previous = None;
    let mut n = 1 << 10;
    while n <= 256 << 20 {
        let a = without(&[PhaseTag::Copy, PhaseTag::Alloc], n)?;
        let b = without(&[PhaseTag::Reduction], n)?;
        let better = if a < b { "copy+alloc" } else { "reduction" };
        println!("{n:>10} B  no copy/alloc {a:.4e} s  no reduction {b:.4e} s  larger cost: {better}");
        if previous.is_some_and(|p| p != better) {
            println!("{:>10}   ^ crossover", "");
        }
        previous = Some(better);
        n *= 4;
    }
    Ok(())
}
