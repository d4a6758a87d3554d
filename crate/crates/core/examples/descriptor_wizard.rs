//! Drives the descriptor wizard from a script and shows that `gen` with the
//! same answers as flags writes the same bytes.

use std::path::PathBuf;

use collbench::cli::run_cli;
use collbench::wizard::run_wizard;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("collbench-wizard"));
    std::fs::create_dir_all(&dir)?;
    let target = dir.join("alltoall.json");

    // collective, datatype, op, algorithms, ranks, sizes, iterations, warmup,
    // backend, sweeps, granularity, allocation, file, confirm
    let answers = ["alltoall", "int32", "", "", "4,8", "4KiB:64KiB:2", "20", "", "both", "", "summary", "rr"];
    let script = format!("{}\n{}\ny\n", answers.join("\n"), target.display());
    let mut screens = Vec::new();
    let written = run_wizard(None, script.as_bytes(), &mut screens)?.expect("confirmed");
    println!("{}", String::from_utf8_lossy(&screens).lines().last().unwrap_or_default());
    println!("wizard wrote {}", written.display());

    let args = [
        "collbench", "gen", "--collective", "alltoall", "--datatype", "int32", "--ranks", "4,8", "--sizes", "4KiB:64KiB:2",
        "--iterations", "20", "--backend", "both", "--granularity", "summary", "--allocation", "rr",
    ];
    let (mut out, mut err) = (Vec::new(), Vec::new());
    assert_eq!(run_cli(args, &mut out, &mut err), 0, "{}", String::from_utf8_lossy(&err));
    let same = std::fs::read(&written)? == out;
    println!("gen with equivalent flags produces identical bytes: {same}");
    Ok(())
}
