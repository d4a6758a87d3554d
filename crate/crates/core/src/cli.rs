//! Flag-based front end. Every subcommand prints the paths it wrote.
//!
//! Exit codes: 0 success, 1 some runs failed (or another runtime error),
//! 2 usage or configuration error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::algorithms::{build_schedule, AlgorithmId};
use crate::analysis::{self, Artifact, PlotMeta, Selection};
use crate::error::{Error, Result};
use crate::model::{CollectiveKind, DataType, PhaseTag, ReduceOp};
use crate::orchestrator::{self, Backend, GranularityMode, RunOptions, SizeRange, Sweep, TestConfig};
use crate::tracer::{make_allocation, rank_cell_map, trace, AllocationPolicy, Topology};
use crate::wizard;

#[derive(Debug, Parser)]
#[command(name = "collbench", version, about = "Benchmark collective algorithms without a cluster")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a test descriptor interactively.
    Init {
        #[arg(long)]
        env: Option<PathBuf>,
    },
    /// Build a test descriptor from flags.
    Gen(GenArgs),
    /// Plan and execute a test descriptor against an environment.
    Run {
        #[arg(long)]
        env: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Re-execute the run recorded in a metadata.log.
    Replay {
        #[arg(long)]
        metadata: PathBuf,
        /// Output root to write under instead of the recorded one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise results listed in an index file.
    Analyze(AnalyzeArgs),
    /// Classify the traffic of a descriptor's schedules on a topology.
    Trace {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        topology: PathBuf,
        #[arg(long, default_value = "block")]
        policy: AllocationPolicy,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print the schedule of one algorithm.
    Schedule {
        /// `collective/algorithm`, e.g. `allreduce/ring`.
        algorithm: AlgorithmId,
        #[arg(short, long)]
        p: usize,
        #[arg(long, value_parser = parse_size_arg)]
        bytes: u64,
        #[arg(long, default_value = "float32")]
        datatype: DataType,
    },
}

fn parse_size_arg(s: &str) -> std::result::Result<u64, String> {
    orchestrator::parse_size(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value = "allreduce")]
    pub collective: CollectiveKind,
    /// Comma-separated; defaults to every algorithm of the collective.
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub ranks: Vec<usize>,
    /// `min:max:multiplier`, e.g. `1KiB:1MiB:2`.
    #[arg(long)]
    pub sizes: Option<SizeRange>,
    #[arg(long)]
    pub datatype: Option<DataType>,
    #[arg(long)]
    pub op: Option<ReduceOp>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub backend: Option<Backend>,
    #[arg(long)]
    pub granularity: Option<GranularityMode>,
    #[arg(long)]
    pub allocation: Option<AllocationPolicy>,
    /// `name:key=value,...`; repeat for several variants.
    #[arg(long = "sweep")]
    pub sweeps: Vec<Sweep>,
    #[arg(long, value_delimiter = ',')]
    pub exclude_phases: Option<Vec<PhaseTag>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub name: Option<String>,
    /// Write here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub index: PathBuf,
    /// Gain matrix against this reference algorithm.
    #[arg(long, group = "what")]
    pub gain: Option<String>,
    /// Phase breakdown (needs full-granularity results).
    #[arg(long, group = "what")]
    pub phases: bool,
    /// Tuning rule file.
    #[arg(long, group = "what")]
    pub tuning: bool,
    #[arg(long)]
    pub test_id: Option<String>,
    #[arg(long)]
    pub timestamp: Option<String>,
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    /// Directory for artifacts; defaults to `analysis/` next to the index.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Builds the descriptor the flags describe. The wizard's defaults and
/// these are the same [`TestConfig`] defaults.
pub fn gen_descriptor(a: &GenArgs) -> Result<TestConfig> {
    let mut t = TestConfig::for_collective(a.collective);
    if !a.algorithms.is_empty() {
        t.algorithms = a.algorithms.clone();
    }
    if !a.ranks.is_empty() {
        t.ranks = a.ranks.clone();
    }
    if let Some(s) = a.sizes {
        t.sizes = s;
    }
    t.datatype = a.datatype.unwrap_or(t.datatype);
    t.op = a.op.unwrap_or(t.op);
    t.iterations = a.iterations.unwrap_or(t.iterations);
    t.warmup = a.warmup.unwrap_or(t.warmup);
    t.backend = a.backend.unwrap_or(t.backend);
    t.granularity = a.granularity.unwrap_or(t.granularity);
    t.allocation = a.allocation.unwrap_or(t.allocation);
    t.sweeps = a.sweeps.clone();
    if let Some(ex) = &a.exclude_phases {
        t.exclude_phases = ex.iter().copied().collect();
    }
    t.seed = a.seed;
    t.name = a.name.clone();
    t.fill_defaults();
    let violations = t.violations();
    if !violations.is_empty() {
        return Err(crate::error::ConfigError::Schema {
            path: PathBuf::from("<flags>"),
            violations,
        }
        .into());
    }
    Ok(t)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let code = e.exit_code();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::Config(_) | Error::Usage(_) | Error::Unsupported { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32> {
    let io = |e| Error::io("<stdout>", e);
    match cmd {
        Command::Init { env } => {
            if !std::io::stdin().is_terminal() {
                return Err(Error::usage(
                    "no interactive terminal; use `collbench gen` to build a descriptor from flags",
                ));
            }
            let env = env.map(|p| orchestrator::load_env(&p)).transpose()?;
            let stdin = std::io::stdin();
            match wizard::run_wizard(env.as_ref(), stdin.lock(), &mut *out)? {
                Some(_) => Ok(0),
                None => Ok(1),
            }
        }
        Command::Gen(a) => {
            let t = gen_descriptor(&a)?;
            match &a.out {
                Some(p) => {
                    wizard::write_atomically(p, &t.to_json())?;
                    writeln!(out, "{}", p.display()).map_err(io)?;
                }
                None => write!(out, "{}", t.to_json()).map_err(io)?,
            }
            Ok(0)
        }
        Command::Run { env, test, quiet } => {
            let opts = RunOptions {
                progress: !quiet,
                ..Default::default()
            };
            let outcome = orchestrator::run_files(&env, &test, &opts)?;
            report_plan(&outcome, out)?;
            Ok(outcome.exit_code())
        }
        Command::Replay { metadata, out: root } => {
            let opts = RunOptions {
                output_root: root,
                progress: true,
                ..Default::default()
            };
            let outcome = orchestrator::replay(&metadata, &opts)?;
            report_plan(&outcome, out)?;
            Ok(outcome.exit_code())
        }
        Command::Analyze(a) => analyze(&a, out),
        Command::Trace {
            test,
            topology,
            policy,
            out: dir,
        } => trace_cmd(&test, &topology, policy, &dir, out),
        Command::Schedule {
            algorithm,
            p,
            bytes,
            datatype,
        } => {
            let bytes = usize::try_from(bytes).map_err(|_| Error::usage("size overflows"))?;
            let s = build_schedule(algorithm, p, bytes, datatype.width())?;
            write!(out, "{}", s.to_text()).map_err(io)?;
            Ok(0)
        }
    }
}

fn report_plan(o: &orchestrator::PlanOutcome, out: &mut dyn Write) -> Result<()> {
    let io = |e| Error::io("<stdout>", e);
    for r in &o.runs {
        let status = match &r.status {
            orchestrator::RunStatus::Ok => "ok".to_string(),
            orchestrator::RunStatus::Failed(m) => format!("failed: {m}"),
        };
        writeln!(out, "{} {}", r.dir.display(), status).map_err(io)?;
    }
    writeln!(out, "{}", o.index.display()).map_err(io)
}

fn analyze(a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let io = |e| Error::io("<stdout>", e);
    let sel = Selection {
        test_id: a.test_id.clone(),
        timestamp: a.timestamp.clone(),
        backend: a.backend.clone(),
        variant: a.variant.clone(),
    };
    let agg = analysis::aggregate(&a.index, &sel)?;
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| a.index.parent().unwrap_or(Path::new(".")).join("analysis"));
    if agg.skipped_rows > 0 || !agg.unreadable.is_empty() {
        writeln!(
            out,
            "skipped {} malformed rows, {} unreadable files",
            agg.skipped_rows,
            agg.unreadable.len()
        )
        .map_err(io)?;
    }
    if agg.records.is_empty() {
        writeln!(out, "no records selected").map_err(io)?;
        return Ok(0);
    }

    // One artifact set per test, backend and variant.
    let mut groups: BTreeMap<(String, String, String, CollectiveKind), Vec<analysis::Record>> = BTreeMap::new();
    for r in agg.records {
        groups
            .entry((r.test_id.clone(), r.backend.clone(), r.variant.clone(), r.collective))
            .or_default()
            .push(r);
    }
    for ((test_id, backend, variant, kind), recs) in groups {
        let meta = PlotMeta {
            test_id: format!("{test_id}-{backend}-{variant}-{kind}"),
            system: recs[0].system.clone(),
            variant: variant.clone(),
        };
        if let Some(reference) = &a.gain {
            let alg = if reference.contains(['/', ':']) {
                reference.parse::<AlgorithmId>()?
            } else {
                AlgorithmId::parse(kind, reference)?
            };
            if alg.collective() != kind {
                continue;
            }
            let g = analysis::gain_matrix(&recs, alg);
            let (svg, csv) = analysis::render(Artifact::Heatmap(&g), &meta, &dir)?;
            writeln!(out, "{}\n{}", svg.display(), csv.display()).map_err(io)?;
        } else if a.phases {
            let b = analysis::phase_breakdown(&recs)?;
            let (svg, csv) = analysis::render(Artifact::Breakdown(&b), &meta, &dir)?;
            writeln!(out, "{}\n{}", svg.display(), csv.display()).map_err(io)?;
        } else if a.tuning {
            let t = analysis::emit_tuning_table(&recs);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let path = dir.join(format!("{}_tuning.txt", meta.test_id));
            std::fs::write(&path, t.to_text()).map_err(|e| Error::io(&path, e))?;
            writeln!(out, "{}", path.display()).map_err(io)?;
        } else {
            let ranks: std::collections::BTreeSet<usize> = recs.iter().map(|r| r.ranks).collect();
            for p in ranks {
                let series = analysis::median_series(&recs, p);
                let m = PlotMeta {
                    test_id: format!("{}-p{p}", meta.test_id),
                    ..meta.clone()
                };
                let (svg, csv) = analysis::render(Artifact::Lines(&series), &m, &dir)?;
                writeln!(out, "{}\n{}", svg.display(), csv.display()).map_err(io)?;
            }
        }
    }
    Ok(0)
}

fn trace_cmd(test: &Path, topology: &Path, policy: AllocationPolicy, dir: &Path, out: &mut dyn Write) -> Result<i32> {
    let io = |e| Error::io("<stdout>", e);
    let t = orchestrator::load_test(test)?;
    let topo = Topology::load(topology)?;
    let test_id = t
        .name
        .clone()
        .or_else(|| test.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "test".into());
    let algs = t.algorithm_ids()?;
    for &p in &t.ranks {
        let alloc = make_allocation(policy, p, &topo)?;
        write!(out, "{}", rank_cell_map(&alloc, &topo).render_text()).map_err(io)?;
        for n in t.sizes.expand() {
            let mut reports = Vec::new();
            for &alg in &algs {
                let s = build_schedule(alg, p, n as usize, t.datatype.width())?;
                let mut r = trace(&s, &alloc, &topo)?;
                r.label = alg.name().to_string();
                writeln!(
                    out,
                    "p={p} bytes={n} {}: intra_node={} local={} global={}",
                    r.label, r.intra_node_bytes, r.local_bytes, r.global_bytes
                )
                .map_err(io)?;
                reports.push(r);
            }
            let meta = PlotMeta {
                test_id: format!("{test_id}-p{p}-{n}-{policy}"),
                system: topo.name.clone(),
                variant: policy.to_string(),
            };
            let (svg, csv) = analysis::render(Artifact::TracerPanel(&reports), &meta, dir)?;
            writeln!(out, "{}\n{}", svg.display(), csv.display()).map_err(io)?;
        }
    }
    Ok(0)
}
