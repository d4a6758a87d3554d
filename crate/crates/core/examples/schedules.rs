//! Prints every algorithm's schedule shape and cost terms, then one full
//! schedule.
//!
//!     cargo run --example schedules -- allreduce/rabenseifner 8

use collbench::{build_schedule, cost_terms, validate_schedule, AlgorithmId};

fn main() -> collbench::Result<()> {
    let mut args = std::env::args().skip(1);
    let shown: AlgorithmId = args.next().as_deref().unwrap_or("allreduce/ring").parse()?;
    let p: usize = args.next().map(|s| s.parse().expect("rank count")).unwrap_or(4);
    let n = 1 << 12;

    println!("{:<34} {:>5} {:>9} {:>9}", "algorithm", "steps", "bytes", "reduced");
    for alg in AlgorithmId::ALL {
        let s = build_schedule(alg, 8, n, 4)?;
        assert!(validate_schedule(&s).is_valid());
        let c = cost_terms(&s, 0)?;
        println!("{:<34} {:>5} {:>9} {:>9}", alg.to_string(), c.steps, c.bytes_sent, c.reduced_elements);
    }
    println!();
    print!("{}", build_schedule(shown, p, 16 * p * 4, 4)?.to_text());
    Ok(())
}
