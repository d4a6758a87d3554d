//! Runs each allreduce algorithm on the in-process fabric, checks the result
//! against the naive oracle and prints the median phase split of rank 0.

use collbench::fabric::{default_inputs, execute, verify, ExecOptions};
use collbench::orchestrator::results::stats::median;
use collbench::{build_schedule, naive_oracle, AlgorithmId, CollectiveKind, DataType, PhaseTag, ReduceOp};

fn main() -> collbench::Result<()> {
    let (p, n, dtype) = (8, 1 << 20, DataType::Float32);
    let opts = ExecOptions {
        iterations: 10,
        warmup: 2,
        ..Default::default()
    };
    for alg in AlgorithmId::for_collective(CollectiveKind::Allreduce) {
        let s = build_schedule(alg, p, n, dtype.width())?;
        let inputs = default_inputs(&s, dtype, Some(1));
        let run = execute(&s, &inputs, ReduceOp::Sum, &opts)?;
        let report = verify(&run.outputs, &naive_oracle(alg.collective(), &inputs, ReduceOp::Sum)?, dtype);
        assert!(report.passed, "{alg}: {:?}", report.first_mismatch);

        let rank0: Vec<_> = run.measurements.iter().filter(|m| m.rank == 0).collect();
        let med = |f: &dyn Fn(&collbench::fabric::Measurement) -> f64| median(&rank0.iter().map(|m| f(m)).collect::<Vec<_>>());
        print!("{:<28} total {:>9.0} ns", alg.to_string(), med(&|m| m.total_ns));
        for ph in [PhaseTag::Alloc, PhaseTag::Copy, PhaseTag::Reduction, PhaseTag::Communication] {
            print!("  {} {:>8.0}", ph, med(&|m| m.phase(ph)));
        }
        println!("  ({} values checked)", report.checked);
    }
    Ok(())
}
