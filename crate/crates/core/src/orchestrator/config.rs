use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmId;
use crate::error::{ConfigError, Error, FieldViolation, Result};
use crate::model::{CollectiveKind, DataType, PhaseTag, ReduceOp};
use crate::netsim::{LinkParams, NetworkModel};
use crate::tracer::{AllocationPolicy, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Fabric,
    #[serde(alias = "net_sim")]
    Netsim,
    Both,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Fabric => "fabric",
            Backend::Netsim => "netsim",
            Backend::Both => "both",
        }
    }

    /// The engines a run matrix expands this choice into, fabric first.
    pub fn engines(self) -> Vec<Backend> {
        match self {
            Backend::Both => vec![Backend::Fabric, Backend::Netsim],
            b => vec![b],
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fabric" => Ok(Backend::Fabric),
            "netsim" | "net_sim" | "sim" => Ok(Backend::Netsim),
            "both" => Ok(Backend::Both),
            _ => Err(Error::usage(format!("unknown backend `{s}` (fabric, netsim, both)"))),
        }
    }
}

/// How much of the raw timing data a result file keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GranularityMode {
    /// Every rank, every iteration, with phase columns.
    Full,
    /// Per iteration: min, max, mean and median over ranks.
    Statistics,
    /// Per iteration: the slowest rank.
    Minimal,
    /// One row of aggregates over everything.
    Summary,
}

impl GranularityMode {
    pub const ALL: [GranularityMode; 4] = [
        GranularityMode::Full,
        GranularityMode::Statistics,
        GranularityMode::Minimal,
        GranularityMode::Summary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GranularityMode::Full => "full",
            GranularityMode::Statistics => "statistics",
            GranularityMode::Minimal => "minimal",
            GranularityMode::Summary => "summary",
        }
    }
}

impl fmt::Display for GranularityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GranularityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GranularityMode::ALL
            .into_iter()
            .find(|g| g.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::usage(format!("unknown granularity `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl LinkOverride {
    fn apply(&self, l: &mut LinkParams) {
        if let Some(a) = self.alpha {
            l.alpha = a;
        }
        if let Some(b) = self.beta {
            l.beta = b;
        }
    }
}

/// Partial [`NetworkModel`]. `alpha`/`beta` set all three link classes and
/// are applied before the per-class entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_node: Option<LinkOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_group: Option<LinkOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inter_group: Option<LinkOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub copy_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alloc_alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eager_threshold: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rails: Option<u32>,
}

impl ModelOverrides {
    pub fn apply(&self, base: &NetworkModel) -> NetworkModel {
        let mut m = base.clone();
        let all = LinkOverride {
            alpha: self.alpha,
            beta: self.beta,
        };
        for l in [&mut m.intra_node, &mut m.intra_group, &mut m.inter_group] {
            all.apply(l);
        }
        for (o, l) in [
            (&self.intra_node, &mut m.intra_node),
            (&self.intra_group, &mut m.intra_group),
            (&self.inter_group, &mut m.inter_group),
        ] {
            if let Some(o) = o {
                o.apply(l);
            }
        }
        m.gamma = self.gamma.unwrap_or(m.gamma);
        m.copy_beta = self.copy_beta.unwrap_or(m.copy_beta);
        m.alloc_alpha = self.alloc_alpha.unwrap_or(m.alloc_alpha);
        m.eager_threshold = self.eager_threshold.unwrap_or(m.eager_threshold);
        m.rails = self.rails.unwrap_or(m.rails);
        m
    }

    pub fn is_empty(&self) -> bool {
        *self == ModelOverrides::default()
    }
}

/// A named set of model overrides; each sweep entry is one variant of the
/// run matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub name: String,
    #[serde(default)]
    pub set: ModelOverrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeRange {
    #[serde(default = "default_min_bytes")]
    pub min_bytes: u64,
    #[serde(default = "default_max_bytes")]
    pub max_bytes: u64,
    #[serde(default = "default_multiplier")]
    pub multiplier: u64,
}

impl Default for SizeRange {
    fn default() -> Self {
        SizeRange {
            min_bytes: default_min_bytes(),
            max_bytes: default_max_bytes(),
            multiplier: default_multiplier(),
        }
    }
}

impl SizeRange {
    /// `min·multiplierᵏ` up to and including `max`. Empty if the range is
    /// invalid.
    pub fn expand(&self) -> Vec<u64> {
        let mut out = Vec::new();
        if self.min_bytes == 0 || self.multiplier < 2 {
            return out;
        }
        let mut s = self.min_bytes;
        while s <= self.max_bytes {
            out.push(s);
            match s.checked_mul(self.multiplier) {
                Some(next) => s = next,
                None => break,
            }
        }
        out
    }
}

/// Parses `4096`, `4KiB`, `1MiB`, `2GiB` (also `K`/`M`/`G`, any case).
pub fn parse_size(s: &str) -> Result<u64> {
    let t = s.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let n: u64 = num.parse().map_err(|_| Error::usage(format!("bad size `{s}`")))?;
    let shift = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 0,
        "k" | "kib" | "kb" => 10,
        "m" | "mib" | "mb" => 20,
        "g" | "gib" | "gb" => 30,
        _ => return Err(Error::usage(format!("bad size unit in `{s}` (B, KiB, MiB, GiB)"))),
    };
    n.checked_mul(1u64 << shift)
        .ok_or_else(|| Error::usage(format!("size `{s}` overflows")))
}

impl FromStr for SizeRange {
    type Err = Error;

    /// `min:max:multiplier`, `min:max` (multiplier 2) or a single size.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let (min, max, mult) = match parts.as_slice() {
            [one] => (parse_size(one)?, parse_size(one)?, default_multiplier()),
            [a, b] => (parse_size(a)?, parse_size(b)?, default_multiplier()),
            [a, b, m] => (
                parse_size(a)?,
                parse_size(b)?,
                m.trim().parse().map_err(|_| Error::usage(format!("bad multiplier `{m}`")))?,
            ),
            _ => return Err(Error::usage(format!("expected min:max:multiplier, got `{s}`"))),
        };
        Ok(SizeRange {
            min_bytes: min,
            max_bytes: max,
            multiplier: mult,
        })
    }
}

impl FromStr for Sweep {
    type Err = Error;

    /// `name:key=value[,key=value...]`. Keys are the model's field names;
    /// per-class link parameters are written `inter_group.alpha`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s.split_once(':').unwrap_or((s, ""));
        let bad = |m: String| Error::usage(format!("sweep `{s}`: {m}"));
        let mut set = ModelOverrides::default();
        for kv in body.split(',').filter(|kv| !kv.trim().is_empty()) {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{kv}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let f = || v.parse::<f64>().map_err(|_| bad(format!("`{v}` is not a number")));
            let link = |o: &mut Option<LinkOverride>, field: &str| -> Result<()> {
                let l = o.get_or_insert_with(LinkOverride::default);
                match field {
                    "alpha" => l.alpha = Some(f()?),
                    "beta" => l.beta = Some(f()?),
                    _ => return Err(bad(format!("unknown link parameter `{field}`"))),
                }
                Ok(())
            };
            match k.split_once('.') {
                Some(("intra_node", p)) => link(&mut set.intra_node, p)?,
                Some(("intra_group", p)) => link(&mut set.intra_group, p)?,
                Some(("inter_group", p)) => link(&mut set.inter_group, p)?,
                Some(_) => return Err(bad(format!("unknown parameter `{k}`"))),
                None => match k {
                    "alpha" => set.alpha = Some(f()?),
                    "beta" => set.beta = Some(f()?),
                    "gamma" => set.gamma = Some(f()?),
                    "copy_beta" => set.copy_beta = Some(f()?),
                    "alloc_alpha" => set.alloc_alpha = Some(f()?),
                    "eager_threshold" => set.eager_threshold = Some(parse_size(v)?),
                    "rails" => set.rails = Some(v.parse().map_err(|_| bad(format!("`{v}` is not a rail count")))?),
                    _ => return Err(bad(format!("unknown parameter `{k}`"))),
                },
            }
        }
        Ok(Sweep {
            name: name.trim().to_string(),
            set,
        })
    }
}

fn default_min_bytes() -> u64 {
    1024
}
fn default_max_bytes() -> u64 {
    1 << 20
}
fn default_multiplier() -> u64 {
    2
}
fn default_ranks() -> Vec<usize> {
    vec![4]
}
fn default_iterations() -> usize {
    10
}
fn default_warmup() -> usize {
    3
}
fn default_datatype() -> DataType {
    DataType::Float32
}
fn default_op() -> ReduceOp {
    ReduceOp::Sum
}
fn default_backend() -> Backend {
    Backend::Fabric
}
fn default_granularity() -> GranularityMode {
    GranularityMode::Full
}
fn default_allocation() -> AllocationPolicy {
    AllocationPolicy::Block
}
fn default_exclude() -> BTreeSet<PhaseTag> {
    BTreeSet::from([PhaseTag::Sync])
}
fn default_collective() -> CollectiveKind {
    CollectiveKind::Allreduce
}
fn default_output_root() -> PathBuf {
    PathBuf::from("results")
}

/// The test descriptor. Every field has a default; an empty `algorithms`
/// list means every algorithm of the collective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_collective")]
    pub collective: CollectiveKind,
    #[serde(default)]
    pub algorithms: Vec<String>,
    #[serde(default)]
    pub sizes: SizeRange,
    #[serde(default = "default_datatype")]
    pub datatype: DataType,
    #[serde(default = "default_op")]
    pub op: ReduceOp,
    #[serde(default = "default_ranks")]
    pub ranks: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default = "default_granularity")]
    pub granularity: GranularityMode,
    #[serde(default = "default_allocation")]
    pub allocation: AllocationPolicy,
    #[serde(default)]
    pub sweeps: Vec<Sweep>,
    #[serde(default = "default_exclude")]
    pub exclude_phases: BTreeSet<PhaseTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for TestConfig {
    fn default() -> Self {
        let mut t: TestConfig = serde_json::from_str("{}").expect("all fields default");
        t.fill_defaults();
        t
    }
}

impl TestConfig {
    pub fn for_collective(kind: CollectiveKind) -> Self {
        let mut t = TestConfig {
            collective: kind,
            ..TestConfig::default()
        };
        t.algorithms.clear();
        t.fill_defaults();
        t
    }

    /// Expands an empty algorithm list and canonicalises aliases.
    pub fn fill_defaults(&mut self) {
        if self.algorithms.is_empty() {
            self.algorithms = AlgorithmId::for_collective(self.collective)
                .into_iter()
                .map(|a| a.name().to_string())
                .collect();
        } else {
            for name in &mut self.algorithms {
                if let Ok(a) = resolve_algorithm(self.collective, name) {
                    *name = a.name().to_string();
                }
            }
        }
    }

    pub fn algorithm_ids(&self) -> Result<Vec<AlgorithmId>> {
        self.algorithms
            .iter()
            .map(|n| resolve_algorithm(self.collective, n).map_err(Error::Usage))
            .collect()
    }

    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut v = Vec::new();
        let mut push = |field: String, message: String| v.push(FieldViolation { field, message });

        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\', ',']) {
                push("name".into(), "must be non-empty without path separators or commas".into());
            }
        }
        let s = self.sizes;
        if s.min_bytes == 0 {
            push("sizes.min_bytes".into(), "must be at least 1".into());
        }
        if s.max_bytes < s.min_bytes {
            push(
                "sizes.max_bytes".into(),
                format!("{} is smaller than min_bytes {}", s.max_bytes, s.min_bytes),
            );
        }
        if s.multiplier < 2 {
            push("sizes.multiplier".into(), format!("must be at least 2, got {}", s.multiplier));
        }
        if self.algorithms.is_empty() {
            push("algorithms".into(), "must list at least one algorithm".into());
        }
        let mut algs = Vec::new();
        for (i, name) in self.algorithms.iter().enumerate() {
            match resolve_algorithm(self.collective, name) {
                Ok(a) => algs.push(a),
                Err(msg) => push(format!("algorithms[{i}]"), msg),
            }
        }
        if self.ranks.is_empty() {
            push("ranks".into(), "must list at least one rank count".into());
        }
        for (i, &p) in self.ranks.iter().enumerate() {
            if p < 2 {
                push(format!("ranks[{i}]"), format!("{p} ranks; at least 2 required"));
                continue;
            }
            for a in &algs {
                if a.check_ranks(p).is_err() {
                    push(format!("ranks[{i}]"), format!("{} needs a power-of-two rank count, got {p}", a.name()));
                }
            }
        }
        if self.iterations == 0 {
            push("iterations".into(), "must be at least 1".into());
        }
        let width = self.datatype.width() as u64;
        for size in s.expand() {
            if size % width != 0 {
                push("sizes".into(), format!("{size} B is not a multiple of the {}-byte {}", width, self.datatype));
                continue;
            }
            for &p in self.ranks.iter().filter(|&&p| p >= 2) {
                if let Some(a) = algs.iter().find(|a| a.requires_blocks() && !(size / width).is_multiple_of(p as u64)) {
                    push(
                        "sizes".into(),
                        format!("{size} B does not split into {p} equal blocks of {} elements ({})", self.datatype, a.name()),
                    );
                }
            }
        }
        let mut names = BTreeSet::new();
        for (i, sw) in self.sweeps.iter().enumerate() {
            if sw.name.is_empty() || sw.name.contains(['/', '\\', ',']) {
                push(format!("sweeps[{i}].name"), "must be non-empty without path separators or commas".into());
            }
            if !names.insert(sw.name.as_str()) {
                push(format!("sweeps[{i}].name"), format!("duplicate variant name `{}`", sw.name));
            }
            for fv in sw.set.apply(&NetworkModel::default()).violations() {
                push(format!("sweeps[{i}].set.{}", fv.field), fv.message);
            }
        }
        v
    }

    /// Canonical pretty JSON, newline-terminated. Both the wizard and the
    /// flag-based generator write descriptors through this.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("descriptor serializes");
        s.push('\n');
        s
    }
}

/// `name` or `collective/name`, checked against `kind`.
fn resolve_algorithm(kind: CollectiveKind, name: &str) -> std::result::Result<AlgorithmId, String> {
    if name.contains(['/', ':']) {
        let a: AlgorithmId = name.parse().map_err(|e: Error| e.to_string())?;
        return if a.collective() == kind {
            Ok(a)
        } else {
            Err(format!("`{name}` implements {}, but the collective is {kind}", a.collective()))
        };
    }
    if let Ok(a) = AlgorithmId::parse(kind, name) {
        return Ok(a);
    }
    let elsewhere: Vec<&str> = CollectiveKind::ALL
        .iter()
        .filter(|&&k| k != kind && AlgorithmId::parse(k, name).is_ok())
        .map(|k| k.name())
        .collect();
    if elsewhere.is_empty() {
        Err(format!("unknown algorithm `{name}`"))
    } else {
        Err(format!("`{name}` is not a {kind} algorithm (available for {})", elsewhere.join(", ")))
    }
}

/// Where an environment finds its topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologyRef {
    Path(PathBuf),
    Inline(Topology),
}

/// The environment descriptor: the simulated system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub system_name: String,
    pub topology: TopologyRef,
    #[serde(default)]
    pub network_model: ModelOverrides,
    #[serde(default = "default_output_root")]
    pub output_root: PathBuf,
    /// Free-form labels recorded with every run (library, version, ...).
    #[serde(default)]
    pub labels: BTreeMap<String, String>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl EnvConfig {
    pub fn new(system_name: impl Into<String>, topology: Topology, output_root: impl Into<PathBuf>) -> Self {
        EnvConfig {
            system_name: system_name.into(),
            topology: TopologyRef::Inline(topology),
            network_model: ModelOverrides::default(),
            output_root: output_root.into(),
            labels: BTreeMap::new(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_root)
    }

    pub fn model(&self) -> NetworkModel {
        self.network_model.apply(&NetworkModel::default())
    }

    pub fn topology(&self) -> Result<Topology, ConfigError> {
        match &self.topology {
            TopologyRef::Inline(t) => {
                let violations = t.violations();
                if violations.is_empty() {
                    Ok(t.clone())
                } else {
                    Err(ConfigError::Schema {
                        path: self.base_dir.clone(),
                        violations: violations
                            .into_iter()
                            .map(|v| FieldViolation {
                                field: format!("topology.{}", v.field),
                                message: v.message,
                            })
                            .collect(),
                    })
                }
            }
            TopologyRef::Path(p) => {
                let path = self.resolve(p);
                Topology::load(&path).map_err(|e| ConfigError::DanglingTopology {
                    env: self.base_dir.clone(),
                    topology: path,
                    message: e.to_string(),
                })
            }
        }
    }

    /// A copy with the topology inlined and the output root absolute, so it
    /// no longer depends on where it was loaded from.
    pub fn resolved(&self) -> Result<EnvConfig, ConfigError> {
        let mut e = self.clone();
        e.topology = TopologyRef::Inline(self.topology()?);
        let out = self.output_dir();
        e.output_root = std::path::absolute(&out).unwrap_or(out);
        e.base_dir = PathBuf::new();
        Ok(e)
    }

    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut v = Vec::new();
        if self.system_name.is_empty() || self.system_name.contains(['/', '\\', ',']) {
            v.push(FieldViolation {
                field: "system_name".into(),
                message: "must be non-empty without path separators or commas".into(),
            });
        }
        for fv in self.model().violations() {
            v.push(FieldViolation {
                field: format!("network_model.{}", fv.field),
                message: fv.message,
            });
        }
        v
    }
}

fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() {
            ConfigError::Schema {
                path: path.into(),
                violations: vec![FieldViolation {
                    field,
                    message: inner.to_string(),
                }],
            }
        } else {
            ConfigError::Parse {
                path: path.into(),
                message: inner.to_string(),
            }
        }
    })
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Parse {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Parses a test descriptor held in memory; `path` only labels errors.
pub fn parse_test(text: &str, path: &Path) -> Result<TestConfig, ConfigError> {
    let mut t: TestConfig = parse_json(text, path)?;
    t.fill_defaults();
    let violations = t.violations();
    if violations.is_empty() {
        Ok(t)
    } else {
        Err(ConfigError::Schema {
            path: path.into(),
            violations,
        })
    }
}

pub fn load_test(path: &Path) -> Result<TestConfig, ConfigError> {
    parse_test(&read(path)?, path)
}

pub fn parse_env(text: &str, path: &Path) -> Result<EnvConfig, ConfigError> {
    let mut e: EnvConfig = parse_json(text, path)?;
    e.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let violations = e.violations();
    if !violations.is_empty() {
        return Err(ConfigError::Schema {
            path: path.into(),
            violations,
        });
    }
    e.topology().map_err(|err| match err {
        ConfigError::DanglingTopology { topology, message, .. } => ConfigError::DanglingTopology {
            env: path.into(),
            topology,
            message,
        },
        ConfigError::Schema { violations, .. } => ConfigError::Schema {
            path: path.into(),
            violations,
        },
        other => other,
    })?;
    Ok(e)
}

pub fn load_env(path: &Path) -> Result<EnvConfig, ConfigError> {
    parse_env(&read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TestConfig, ConfigError> {
        parse_test(text, Path::new("test.json"))
    }

    fn fields(e: &ConfigError) -> Vec<&str> {
        e.violations().iter().map(|v| v.field.as_str()).collect()
    }

    #[test]
    fn minimal_descriptor_gets_defaults() {
        let t = parse("{}").unwrap();
        assert_eq!(t.collective, CollectiveKind::Allreduce);
        assert_eq!(t.algorithms, ["ring", "recursive_doubling", "rabenseifner"]);
        assert_eq!(t.sizes.expand().len(), 11);
        assert_eq!(t.ranks, [4]);
        assert_eq!((t.iterations, t.warmup), (10, 3));
        assert_eq!(t.backend, Backend::Fabric);
        assert_eq!(t.granularity, GranularityMode::Full);
        assert_eq!(t.datatype, DataType::Float32);
        assert_eq!(t, TestConfig::default());
    }

    #[test]
    fn multiplier_one_names_the_field() {
        let e = parse(r#"{"sizes": {"multiplier": 1}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Schema { .. }));
        assert_eq!(fields(&e), ["sizes.multiplier"]);
    }

    #[test]
    fn algorithm_of_another_collective_is_a_cross_field_violation() {
        let e = parse(r#"{"collective": "alltoall", "algorithms": ["ring"]}"#).unwrap_err();
        assert_eq!(fields(&e), ["algorithms[0]"]);
        assert!(e.violations()[0].message.contains("not a alltoall algorithm"));
        let e = parse(r#"{"collective": "alltoall", "algorithms": ["allreduce/ring"]}"#).unwrap_err();
        assert_eq!(fields(&e), ["algorithms[0]"]);
    }

    #[test]
    fn type_errors_carry_paths_and_syntax_errors_do_not() {
        let e = parse(r#"{"sizes": {"min_bytes": "big"}}"#).unwrap_err();
        assert_eq!(fields(&e), ["sizes.min_bytes"]);
        let e = parse(r#"{"ranks": [4"#).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { .. }));
        let e = parse(r#"{"colective": "allreduce"}"#).unwrap_err();
        assert!(matches!(e, ConfigError::Schema { .. }));
    }

    #[test]
    fn several_violations_are_reported_together() {
        let e = parse(r#"{"sizes": {"min_bytes": 4096, "max_bytes": 1024}, "ranks": [6], "iterations": 0}"#).unwrap_err();
        let f = fields(&e);
        assert!(f.contains(&"sizes.max_bytes"));
        assert!(f.contains(&"ranks[0]"));
        assert!(f.contains(&"iterations"));
    }

    #[test]
    fn sweeps_validate_through_the_model() {
        let e = parse(r#"{"sweeps": [{"name": "r0", "set": {"rails": 0}}, {"name": "r0"}]}"#).unwrap_err();
        assert_eq!(fields(&e), ["sweeps[0].set.rails", "sweeps[1].name"]);
    }

    #[test]
    fn canonical_json_round_trips() {
        let mut t = TestConfig::for_collective(CollectiveKind::ReduceScatter);
        t.sweeps.push(Sweep {
            name: "rails4".into(),
            set: ModelOverrides {
                rails: Some(4),
                ..Default::default()
            },
        });
        let text = t.to_json();
        assert_eq!(parse(&text).unwrap(), t);
        assert_eq!(parse(&text).unwrap().to_json(), text);
    }

    #[test]
    fn aliases_are_canonicalised() {
        let t = parse(r#"{"algorithms": ["allreduce/ring", "rd"]}"#).unwrap();
        assert_eq!(t.algorithms, ["ring", "recursive_doubling"]);
    }

    #[test]
    fn overrides_apply_in_order() {
        let o: ModelOverrides = serde_json::from_str(r#"{"alpha": 1.0, "inter_group": {"alpha": 2.0}, "rails": 4}"#).unwrap();
        let m = o.apply(&NetworkModel::default());
        assert_eq!((m.intra_node.alpha, m.intra_group.alpha, m.inter_group.alpha), (1.0, 1.0, 2.0));
        assert_eq!(m.rails, 4);
        assert_eq!(m.gamma, NetworkModel::default().gamma);
    }

    #[test]
    fn size_and_sweep_grammar() {
        assert_eq!(parse_size("4KiB").unwrap(), 4096);
        assert_eq!(parse_size("1m").unwrap(), 1 << 20);
        assert!(parse_size("3XB").is_err());
        let r: SizeRange = "1KiB:4KiB:2".parse().unwrap();
        assert_eq!(r.expand(), [1024, 2048, 4096]);
        let s: Sweep = "mix:rails=4,inter_group.alpha=2e-6,eager_threshold=16KiB".parse().unwrap();
        assert_eq!(s.name, "mix");
        assert_eq!(s.set.rails, Some(4));
        assert_eq!(s.set.inter_group.unwrap().alpha, Some(2e-6));
        assert_eq!(s.set.eager_threshold, Some(16384));
        assert!("x:warp=9".parse::<Sweep>().is_err());
    }

    #[test]
    fn env_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let env_path = dir.path().join("env.json");
        fs::write(&env_path, r#"{"system_name": "desk", "topology": "missing.json"}"#).unwrap();
        assert!(matches!(load_env(&env_path), Err(ConfigError::DanglingTopology { .. })));

        fs::write(&env_path, r#"{"system_name": "desk", "topology": "#).unwrap();
        assert!(matches!(load_env(&env_path), Err(ConfigError::Parse { .. })));

        fs::write(
            dir.path().join("topo.json"),
            r#"{"name": "t", "groups": 2, "nodes_per_group": 2, "ranks_per_node": 2}"#,
        )
        .unwrap();
        fs::write(&env_path, r#"{"system_name": "desk", "topology": "topo.json", "network_model": {"rails": 0}}"#).unwrap();
        let e = load_env(&env_path).unwrap_err();
        assert_eq!(fields(&e), ["network_model.rails"]);

        fs::write(&env_path, r#"{"system_name": "desk", "topology": "topo.json"}"#).unwrap();
        let env = load_env(&env_path).unwrap();
        assert_eq!(env.topology().unwrap().capacity(), 8);
        assert_eq!(env.output_dir(), dir.path().join("results"));
        let resolved = env.resolved().unwrap();
        assert!(matches!(resolved.topology, TopologyRef::Inline(_)));
        assert!(resolved.output_root.is_absolute());
    }
}
