use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::distributions::Alphanumeric;
use rand::Rng;

use crate::algorithms::{build_schedule, Schedule};
use crate::error::{ConfigError, Error, Result};
use crate::fabric::{self, ExecOptions, InstrumentationConfig, Measurement};
use crate::model::{naive_oracle, PhaseTag};
use crate::netsim::{self, NetworkModel};
use crate::tracer::{make_allocation, Allocation, Topology};

use super::config::{parse_test, Backend, EnvConfig, ModelOverrides};
use super::plan::{plan_runs, RunKey, RunPlan};
use super::results::{write_results, SeriesKey};

pub const INDEX_HEADER: &str = "timestamp,test_id,system,collective,algorithms,ranks,min_bytes,max_bytes,backend,variants,status,path";
pub const METADATA_FILE: &str = "metadata.log";
pub const ALLOC_FILE: &str = "alloc.csv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

impl RunStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RunStatus::Ok)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub key: RunKey,
    pub variant: String,
    pub dir: PathBuf,
    /// Path relative to the index file's directory.
    pub index_path: String,
    pub status: RunStatus,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub timestamp: String,
    /// `<output_root>/<system>/<timestamp>`.
    pub root: PathBuf,
    pub index: PathBuf,
    pub runs: Vec<RunOutcome>,
}

impl PlanOutcome {
    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| !r.status.is_ok()).count()
    }

    /// 0 when every run succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed() == 0 {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Use this timestamp directory instead of a fresh one.
    pub timestamp: Option<String>,
    /// Write under this root instead of the environment's.
    pub output_root: Option<PathBuf>,
    /// Print one line per run to stderr.
    pub progress: bool,
    /// Receive timeout for fabric runs; fabric's default if unset.
    pub fabric_timeout: Option<Duration>,
}

pub fn run(plan: &RunPlan, env: &EnvConfig) -> Result<PlanOutcome> {
    run_with(plan, env, &RunOptions::default())
}

/// Executes every run of `plan` in order. A failing run is recorded in the
/// index with `status=failed` and does not stop the plan; failing to set up
/// the results tree or to write the index does.
pub fn run_with(plan: &RunPlan, env: &EnvConfig, opts: &RunOptions) -> Result<PlanOutcome> {
    let topology = env.topology()?;
    let mut env = env.resolved()?;
    if let Some(root) = &opts.output_root {
        env.output_root = std::path::absolute(root).map_err(|e| Error::io(root, e))?;
    }
    let system_dir = env.output_root.join(&env.system_name);
    fs::create_dir_all(&system_dir).map_err(|e| Error::io(&system_dir, e))?;
    let (timestamp, root) = match &opts.timestamp {
        Some(ts) => {
            let root = system_dir.join(ts);
            fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
            (ts.clone(), root)
        }
        None => fresh_timestamp_dir(&system_dir)?,
    };
    let index = system_dir.join(format!("{}_index.csv", env.system_name));

    let keys = plan.runs();
    let mut runs = Vec::with_capacity(keys.len());
    for (i, key) in keys.into_iter().enumerate() {
        let rel = plan.run_dir(key);
        let dir = root.join(&rel);
        let ctx = RunContext {
            plan,
            env: &env,
            topology: &topology,
            timestamp: &timestamp,
            key,
            timeout: opts.fabric_timeout,
        };
        let (status, files) = match ctx.execute(&dir) {
            Ok(files) => (RunStatus::Ok, files),
            Err(e) => (RunStatus::Failed(e.to_string()), Vec::new()),
        };
        if opts.progress {
            let state = match &status {
                RunStatus::Ok => "ok".to_string(),
                RunStatus::Failed(msg) => format!("FAILED: {msg}"),
            };
            eprintln!("[{}/{}] {} {}", i + 1, plan.runs().len(), rel.display(), state);
        }
        let index_path = format!("{timestamp}/{}", rel.to_string_lossy().replace('\\', "/"));
        let outcome = RunOutcome {
            key,
            variant: plan.variants[key.variant].name.clone(),
            dir,
            index_path,
            status,
            files,
        };
        append_index(&index, &IndexRow::new(plan, &env, &timestamp, &outcome))?;
        runs.push(outcome);
    }
    Ok(PlanOutcome {
        timestamp,
        root,
        index,
        runs,
    })
}

fn fresh_timestamp_dir(system_dir: &Path) -> Result<(String, PathBuf)> {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
    let mut rng = rand::thread_rng();
    loop {
        let suffix: String = (&mut rng)
            .sample_iter(Alphanumeric)
            .take(4)
            .map(|b| (b as char).to_ascii_lowercase())
            .collect();
        let ts = format!("{stamp}-{suffix}");
        let root = system_dir.join(&ts);
        match fs::create_dir(&root) {
            Ok(()) => return Ok((ts, root)),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&root, e)),
        }
    }
}

struct RunContext<'a> {
    plan: &'a RunPlan,
    env: &'a EnvConfig,
    topology: &'a Topology,
    timestamp: &'a str,
    key: RunKey,
    timeout: Option<Duration>,
}

impl RunContext<'_> {
    fn execute(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let test = &self.plan.test;
        let variant = &self.plan.variants[self.key.variant];
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let meta = RunMetadata {
            version: crate::VERSION.to_string(),
            timestamp: self.timestamp.to_string(),
            system: self.env.system_name.clone(),
            test_id: self.plan.test_id.clone(),
            backend: self.key.backend,
            variant: variant.name.clone(),
            variant_set: variant.set.clone(),
            ranks: self.key.p,
            allocation: test.allocation.to_string(),
            model: variant.model.clone(),
            env: self.env.clone(),
            descriptor: self.plan.descriptor.clone(),
        };
        let meta_path = dir.join(METADATA_FILE);
        fs::write(&meta_path, meta.render()).map_err(|e| Error::io(&meta_path, e))?;

        let alloc = make_allocation(test.allocation, self.key.p, self.topology)?;
        let alloc_path = dir.join(ALLOC_FILE);
        fs::write(&alloc_path, alloc.to_csv()).map_err(|e| Error::io(&alloc_path, e))?;

        let mut files = vec![meta_path, alloc_path];
        let width = test.datatype.width();
        for pt in self.plan.points_of(self.key) {
            let bytes = usize::try_from(pt.msg_bytes).map_err(|_| Error::usage("message size overflows"))?;
            let schedule = build_schedule(pt.algorithm, pt.p, bytes, width)?;
            let measurements = match self.key.backend {
                Backend::Netsim => self.simulated(&schedule, &variant.model, &alloc)?,
                _ => self.executed(&schedule)?,
            };
            let key = SeriesKey {
                collective: test.collective,
                algorithm: pt.algorithm.name().to_string(),
                ranks: pt.p,
                msg_bytes: pt.msg_bytes,
                variant: variant.name.clone(),
            };
            let path = dir.join(format!("{}_{}_{}.csv", test.collective, pt.algorithm.name(), pt.msg_bytes));
            write_results(&key, &measurements, test.granularity, &path)?;
            files.push(path);
        }
        Ok(files)
    }

    fn simulated(&self, s: &Schedule, model: &NetworkModel, alloc: &Allocation) -> Result<Vec<Measurement>> {
        let test = &self.plan.test;
        let sim = netsim::simulate_excluding(s, model, alloc, self.topology, &test.exclude_phases)?;
        Ok(simulated_measurements(&sim, test.iterations))
    }

    fn executed(&self, s: &Schedule) -> Result<Vec<Measurement>> {
        let test = &self.plan.test;
        let inputs = fabric::default_inputs(s, test.datatype, test.seed);
        let mut opts = ExecOptions {
            instr: InstrumentationConfig {
                exclude_phases: test.exclude_phases.clone(),
                ..InstrumentationConfig::default()
            },
            iterations: test.iterations,
            warmup: test.warmup,
            point: format!("{} p={} n={}", s.algorithm, s.p, s.msg_bytes),
            ..ExecOptions::default()
        };
        if let Some(t) = self.timeout {
            opts.timeout = t;
        }
        let exec = fabric::execute(s, &inputs, test.op, &opts)?;
        let expected = naive_oracle(test.collective, &inputs, test.op)?;
        let report = fabric::verify(&exec.outputs, &expected, test.datatype);
        if let Some(m) = report.first_mismatch {
            return Err(Error::Verification(format!(
                "{}: rank {} element {} is {}, expected {}",
                opts.point, m.rank, m.index, m.got, m.expected
            )));
        }
        Ok(exec.measurements)
    }
}

/// One measurement per rank and iteration; every iteration of a simulation
/// is identical.
pub fn simulated_measurements(sim: &netsim::SimResult, iterations: usize) -> Vec<Measurement> {
    let mut out = Vec::with_capacity(iterations * sim.completion.len());
    for iteration in 0..iterations {
        for (rank, (&t, phases)) in sim.completion.iter().zip(&sim.phases).enumerate() {
            out.push(Measurement {
                point: String::new(),
                iteration,
                rank,
                total_ns: t * 1e9,
                phase_ns: PhaseTag::ALL.iter().map(|&ph| (ph, phases[&ph] * 1e9)).collect(),
                per_step_ns: None,
            });
        }
    }
    out
}

/// One line of `<system>_index.csv`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRow {
    pub timestamp: String,
    pub test_id: String,
    pub system: String,
    pub collective: String,
    /// `;`-separated.
    pub algorithms: String,
    pub ranks: usize,
    pub min_bytes: u64,
    pub max_bytes: u64,
    pub backend: String,
    pub variants: String,
    pub status: String,
    pub path: String,
}

impl IndexRow {
    fn new(plan: &RunPlan, env: &EnvConfig, timestamp: &str, run: &RunOutcome) -> Self {
        IndexRow {
            timestamp: timestamp.to_string(),
            test_id: plan.test_id.clone(),
            system: env.system_name.clone(),
            collective: plan.test.collective.to_string(),
            algorithms: plan.test.algorithms.join(";"),
            ranks: run.key.p,
            min_bytes: plan.sizes.first().copied().unwrap_or(0),
            max_bytes: plan.sizes.last().copied().unwrap_or(0),
            backend: run.key.backend.to_string(),
            variants: run.variant.clone(),
            status: if run.status.is_ok() { "ok" } else { "failed" }.to_string(),
            path: run.index_path.clone(),
        }
    }

    fn fields(&self) -> [String; 12] {
        [
            self.timestamp.clone(),
            self.test_id.clone(),
            self.system.clone(),
            self.collective.clone(),
            self.algorithms.clone(),
            self.ranks.to_string(),
            self.min_bytes.to_string(),
            self.max_bytes.to_string(),
            self.backend.clone(),
            self.variants.clone(),
            self.status.clone(),
            self.path.clone(),
        ]
    }
}

fn append_index(path: &Path, row: &IndexRow) -> Result<()> {
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let empty = file.metadata().map(|m| m.len() == 0).unwrap_or(true);
    let mut buf = Vec::new();
    if empty {
        buf.extend_from_slice(INDEX_HEADER.as_bytes());
        buf.push(b'\n');
    }
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(row.fields()).map_err(|e| Error::usage(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads an index file; rows that do not have twelve fields are skipped and
/// counted.
pub fn read_index(path: &Path) -> Result<(Vec<IndexRow>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == INDEX_HEADER => {}
        Some(h) => return Err(Error::usage(format!("{}: unexpected index header `{h}`", path.display()))),
        None => return Ok((Vec::new(), 0)),
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let (mut rows, mut skipped) = (Vec::new(), 0);
    for rec in rdr.records() {
        let Ok(r) = rec else {
            skipped += 1;
            continue;
        };
        if r.len() != 12 {
            skipped += 1;
            continue;
        }
        let (Ok(ranks), Ok(min_bytes), Ok(max_bytes)) = (r[5].parse(), r[6].parse(), r[7].parse()) else {
            skipped += 1;
            continue;
        };
        rows.push(IndexRow {
            timestamp: r[0].into(),
            test_id: r[1].into(),
            system: r[2].into(),
            collective: r[3].into(),
            algorithms: r[4].into(),
            ranks,
            min_bytes,
            max_bytes,
            backend: r[8].into(),
            variants: r[9].into(),
            status: r[10].into(),
            path: r[11].into(),
        });
    }
    Ok((rows, skipped))
}

const META_TITLE: &str = "# collbench run metadata";
/// Must stay the last section: everything after it is the descriptor.
const META_TEST: &str = "test descriptor";

/// Everything needed to re-execute one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub version: String,
    pub timestamp: String,
    pub system: String,
    pub test_id: String,
    pub backend: Backend,
    pub variant: String,
    /// The variant's overrides as written in the descriptor.
    pub variant_set: ModelOverrides,
    pub ranks: usize,
    pub allocation: String,
    /// Resolved model: environment defaults plus the variant's overrides.
    pub model: NetworkModel,
    /// Environment with the topology inlined and paths absolute.
    pub env: EnvConfig,
    /// The test descriptor, verbatim.
    pub descriptor: String,
}

impl RunMetadata {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(META_TITLE);
        s.push('\n');
        for (k, v) in [
            ("version", self.version.clone()),
            ("timestamp", self.timestamp.clone()),
            ("system", self.system.clone()),
            ("test_id", self.test_id.clone()),
            ("backend", self.backend.to_string()),
            ("variant", self.variant.clone()),
            ("ranks", self.ranks.to_string()),
            ("allocation", self.allocation.clone()),
        ] {
            s.push_str(&format!("{k}: {v}\n"));
        }
        for (name, body) in [
            ("variant overrides", pretty(&self.variant_set)),
            ("network model", pretty(&self.model)),
            ("environment", pretty(&self.env)),
        ] {
            s.push_str(&format!("--- {name} ---\n{body}\n"));
        }
        s.push_str(&format!("--- {META_TEST} ---\n"));
        s.push_str(&self.descriptor);
        s
    }

    pub fn parse(text: &str) -> Result<RunMetadata> {
        let bad = |m: &str| Error::usage(format!("malformed metadata: {m}"));
        let mut lines = text.split_inclusive('\n');
        if lines.next().map(str::trim_end) != Some(META_TITLE) {
            return Err(bad("missing title line"));
        }
        let mut fields = BTreeMap::new();
        let mut sections: BTreeMap<String, String> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in lines.by_ref() {
            let trimmed = line.trim_end_matches(['\n', '\r']);
            if let Some(name) = trimmed.strip_prefix("--- ").and_then(|l| l.strip_suffix(" ---")) {
                if name == META_TEST {
                    current = Some(name.to_string());
                    break;
                }
                current = Some(name.to_string());
                sections.insert(name.to_string(), String::new());
                continue;
            }
            match &current {
                Some(sec) => sections.get_mut(sec).expect("section exists").push_str(line),
                None => {
                    let (k, v) = trimmed.split_once(": ").ok_or_else(|| bad(trimmed))?;
                    fields.insert(k.to_string(), v.to_string());
                }
            }
        }
        if current.as_deref() != Some(META_TEST) {
            return Err(bad("missing test descriptor"));
        }
        let descriptor: String = lines.collect();
        let field = |k: &str| fields.get(k).cloned().ok_or_else(|| bad(&format!("missing `{k}`")));
        let section = |k: &str| sections.get(k).ok_or_else(|| bad(&format!("missing section `{k}`")));
        let json_err = |k: &str, e: serde_json::Error| bad(&format!("{k}: {e}"));
        Ok(RunMetadata {
            version: field("version")?,
            timestamp: field("timestamp")?,
            system: field("system")?,
            test_id: field("test_id")?,
            backend: field("backend")?.parse()?,
            variant: field("variant")?,
            ranks: field("ranks")?.parse().map_err(|_| bad("ranks"))?,
            allocation: field("allocation")?,
            variant_set: serde_json::from_str(section("variant overrides")?).map_err(|e| json_err("variant overrides", e))?,
            model: serde_json::from_str(section("network model")?).map_err(|e| json_err("network model", e))?,
            env: serde_json::from_str(section("environment")?).map_err(|e| json_err("environment", e))?,
            descriptor,
        })
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("metadata serializes")
}

pub fn read_metadata(path: &Path) -> Result<RunMetadata> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunMetadata::parse(&text)
}

/// Re-executes the run a metadata file describes, into a new timestamp
/// directory under the recorded (or overridden) output root.
pub fn replay(metadata: &Path, opts: &RunOptions) -> Result<PlanOutcome> {
    let meta = read_metadata(metadata)?;
    let test = parse_test(&meta.descriptor, metadata).map_err(Error::Config)?;
    let mut plan = plan_runs(&meta.env, &test)?;
    let variant = plan
        .variants
        .iter()
        .position(|v| v.name == meta.variant)
        .ok_or_else(|| Error::usage(format!("variant `{}` not in the recorded descriptor", meta.variant)))?;
    // The recorded model is authoritative.
    plan.variants[variant].model = meta.model.clone();
    plan.variants[variant].set = meta.variant_set.clone();
    plan.restrict(RunKey {
        backend: meta.backend,
        variant,
        p: meta.ranks,
    });
    if plan.is_empty() {
        return Err(Error::usage("the recorded run is not part of its own descriptor"));
    }
    plan.descriptor = meta.descriptor.clone();
    plan.test_id = meta.test_id.clone();
    run_with(&plan, &meta.env, opts)
}

/// Plans and runs a descriptor file against an environment file. Config
/// problems surface as [`Error::Config`].
pub fn run_files(env_path: &Path, test_path: &Path, opts: &RunOptions) -> Result<PlanOutcome> {
    let env = super::config::load_env(env_path)?;
    let text = fs::read_to_string(test_path).map_err(|e| {
        Error::Config(ConfigError::Parse {
            path: test_path.into(),
            message: e.to_string(),
        })
    })?;
    let test = parse_test(&text, test_path)?;
    let mut plan = plan_runs(&env, &test)?;
    plan.descriptor = text;
    if test.name.is_none() {
        if let Some(stem) = test_path.file_stem() {
            plan.test_id = stem.to_string_lossy().into_owned();
        }
    }
    run_with(&plan, &env, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CollectiveKind;
    use crate::orchestrator::config::{GranularityMode, Sweep, TestConfig};

    fn setup(backend: Backend) -> (tempfile::TempDir, EnvConfig, TestConfig) {
        let dir = tempfile::tempdir().unwrap();
        let env = EnvConfig::new("desk", Topology::new("t", 2, 2, 2), dir.path().join("results"));
        let mut t = TestConfig::for_collective(CollectiveKind::Allreduce);
        t.algorithms = vec!["ring".into()];
        t.sizes.max_bytes = 1024;
        t.iterations = 3;
        t.warmup = 1;
        t.backend = backend;
        (dir, env, t)
    }

    #[test]
    fn single_point_layout() {
        let (_dir, env, t) = setup(Backend::Netsim);
        let plan = plan_runs(&env, &t).unwrap();
        let out = run(&plan, &env).unwrap();
        assert_eq!(out.exit_code(), 0);
        let run_dir = &out.runs[0].dir;
        let mut names: Vec<String> = fs::read_dir(run_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        assert_eq!(names, ["alloc.csv", "allreduce_ring_1024.csv", "metadata.log"]);
        assert!(run_dir.ends_with("netsim-default/p4_block"));
        let (rows, skipped) = read_index(&out.index).unwrap();
        assert_eq!((rows.len(), skipped), (1, 0));
        assert_eq!(out.index.parent().unwrap().join(&rows[0].path), *run_dir);
        let ts = &out.timestamp;
        assert_eq!(ts.len(), "20260101-000000-abcd".len());
        assert!(ts.as_bytes()[8] == b'-' && ts.as_bytes()[15] == b'-');
    }

    #[test]
    fn netsim_runs_are_bit_identical_and_replayable() {
        let (_dir, env, mut t) = setup(Backend::Netsim);
        t.sweeps = vec![Sweep {
            name: "rails4".into(),
            set: ModelOverrides {
                rails: Some(4),
                ..Default::default()
            },
        }];
        let plan = plan_runs(&env, &t).unwrap();
        let a = run(&plan, &env).unwrap();
        let b = run(&plan, &env).unwrap();
        let csv = |o: &PlanOutcome| fs::read(o.runs[0].dir.join("allreduce_ring_1024.csv")).unwrap();
        assert_eq!(csv(&a), csv(&b));

        let meta_path = a.runs[0].dir.join(METADATA_FILE);
        let meta = read_metadata(&meta_path).unwrap();
        assert_eq!(meta.variant_set.rails, Some(4));
        assert_eq!(meta.model.rails, 4);
        assert_eq!(parse_test(&meta.descriptor, &meta_path).unwrap(), plan.test);
        let text = fs::read_to_string(&meta_path).unwrap();
        assert!(text.contains("\"rails\": 4"));
        assert_eq!(RunMetadata::parse(&text).unwrap().render(), text);

        let r = replay(&meta_path, &RunOptions::default()).unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(csv(&r), csv(&a));
    }

    #[test]
    fn two_backends_share_a_timestamp() {
        let (_dir, env, mut t) = setup(Backend::Both);
        t.granularity = GranularityMode::Summary;
        let out = run(&plan_runs(&env, &t).unwrap(), &env).unwrap();
        assert_eq!(out.exit_code(), 0, "{:?}", out.runs);
        let dirs: Vec<_> = fs::read_dir(&out.root).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(dirs.len(), 2);
        assert!(out.root.join("fabric-default").is_dir() && out.root.join("netsim-default").is_dir());
    }

    #[test]
    fn failed_run_is_indexed_and_the_plan_continues() {
        let (_dir, env, mut t) = setup(Backend::Netsim);
        t.ranks = vec![2, 4];
        let plan = plan_runs(&env, &t).unwrap();
        let root = env.output_dir().join("desk").join("fixed");
        fs::create_dir_all(root.join("netsim-default")).unwrap();
        // A file where the p2 run directory should go.
        fs::write(root.join("netsim-default").join("p2_block"), "").unwrap();
        let opts = RunOptions {
            timestamp: Some("fixed".into()),
            ..Default::default()
        };
        let out = run_with(&plan, &env, &opts).unwrap();
        assert_eq!(out.exit_code(), 1);
        assert!(!out.runs[0].status.is_ok());
        assert!(out.runs[1].status.is_ok());
        let (rows, _) = read_index(&out.index).unwrap();
        let status: Vec<&str> = rows.iter().map(|r| r.status.as_str()).collect();
        assert_eq!(status, ["failed", "ok"]);
    }
}
