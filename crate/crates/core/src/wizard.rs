//! Guided construction of a test descriptor.
//!
//! The wizard is a plain state machine fed one input line at a time, so it
//! can be driven by a terminal, a script or a test. Screens run in the order
//! collective, algorithms, scale, backend, output, review; a screen is left
//! forward only once its fields validate. Nothing is written before the
//! review screen is confirmed.
//!
//! Special inputs on any field: an empty line keeps the shown value, `?`
//! toggles help for the focused field, `<` goes back and `q` aborts.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::algorithms::AlgorithmId;
use crate::error::{Error, FieldViolation, Result};
use crate::model::CollectiveKind;
use crate::orchestrator::config::{Backend, EnvConfig, GranularityMode, SizeRange, Sweep, TestConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Screen {
    Collective,
    Algorithms,
    Scale,
    Backend,
    Output,
    Review,
}

impl Screen {
    pub const ALL: [Screen; 6] = [
        Screen::Collective,
        Screen::Algorithms,
        Screen::Scale,
        Screen::Backend,
        Screen::Output,
        Screen::Review,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Screen::Collective => "Collective",
            Screen::Algorithms => "Algorithms",
            Screen::Scale => "Ranks, sizes and iterations",
            Screen::Backend => "Backend and network-model variants",
            Screen::Output => "Granularity and output",
            Screen::Review => "Review",
        }
    }

    fn fields(self) -> &'static [Field] {
        use Field::*;
        match self {
            Screen::Collective => &[Collective, Datatype, Op],
            Screen::Algorithms => &[Algorithms],
            Screen::Scale => &[Ranks, Sizes, Iterations, Warmup],
            Screen::Backend => &[Backend, Sweeps],
            Screen::Output => &[Granularity, Allocation, OutputPath],
            Screen::Review => &[Confirm],
        }
    }

    /// Descriptor field paths whose violations belong to this screen.
    fn owns(self, path: &str) -> bool {
        let root = path.split(['.', '[']).next().unwrap_or(path);
        match self {
            Screen::Collective => matches!(root, "collective" | "datatype" | "op"),
            Screen::Algorithms => root == "algorithms",
            Screen::Scale => matches!(root, "ranks" | "sizes" | "iterations" | "warmup"),
            Screen::Backend => matches!(root, "backend" | "sweeps"),
            Screen::Output => matches!(root, "granularity" | "allocation" | "name" | "output"),
            Screen::Review => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Collective,
    Datatype,
    Op,
    Algorithms,
    Ranks,
    Sizes,
    Iterations,
    Warmup,
    Backend,
    Sweeps,
    Granularity,
    Allocation,
    OutputPath,
    Confirm,
}

impl Field {
    pub fn label(self) -> &'static str {
        match self {
            Field::Collective => "collective",
            Field::Datatype => "datatype",
            Field::Op => "reduction op",
            Field::Algorithms => "algorithms",
            Field::Ranks => "rank counts",
            Field::Sizes => "message sizes",
            Field::Iterations => "iterations",
            Field::Warmup => "warmup iterations",
            Field::Backend => "backend",
            Field::Sweeps => "model variants",
            Field::Granularity => "granularity",
            Field::Allocation => "allocation policy",
            Field::OutputPath => "descriptor file",
            Field::Confirm => "write descriptor",
        }
    }

    pub fn help(self) -> &'static str {
        match self {
            Field::Collective => "allreduce, reduce_scatter, allgather or alltoall.",
            Field::Datatype => "Element type: int32, int64, float32 or float64.",
            Field::Op => "sum, max or min. Ignored by allgather and alltoall.",
            Field::Algorithms => "Comma-separated names from the list above, or `all`.",
            Field::Ranks => "Comma-separated rank counts, e.g. `4,8,16`. Some algorithms need powers of two.",
            Field::Sizes => "min:max:multiplier with B/KiB/MiB/GiB suffixes, e.g. `1KiB:1MiB:2`. Sizes are min times powers of the multiplier up to max.",
            Field::Iterations => "Measured iterations per point (at least 1).",
            Field::Warmup => "Unmeasured iterations run first (fabric backend only).",
            Field::Backend => "fabric (real execution), netsim (virtual time) or both.",
            Field::Sweeps => "Space-separated `name:key=value,...` entries, e.g. `rails2:rails=2 rails4:rails=4`, or `none`.",
            Field::Granularity => "full, statistics, minimal or summary: how much timing detail result files keep.",
            Field::Allocation => "block (fill nodes in order) or rr (deal ranks round-robin over groups).",
            Field::OutputPath => "Where the descriptor is written.",
            Field::Confirm => "`y` writes the descriptor shown above; `<` goes back; `q` quits without writing.",
        }
    }

    fn screen(self) -> Screen {
        *Screen::ALL.iter().find(|s| s.fields().contains(&self)).expect("every field has a screen")
    }
}

/// What the caller should do after an input line.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Continue,
    /// Review confirmed: write `config` to `path`.
    Done { config: TestConfig, path: PathBuf },
    Aborted,
}

#[derive(Debug, Clone)]
pub struct WizardState {
    pub draft: TestConfig,
    pub output: PathBuf,
    screen: usize,
    field: usize,
    pub help: bool,
    pub messages: Vec<String>,
    system: Option<String>,
}

impl WizardState {
    /// Starts from the documented defaults.
    pub fn new(env: Option<&EnvConfig>) -> Self {
        WizardState {
            draft: TestConfig::default(),
            output: PathBuf::from("test.json"),
            screen: 0,
            field: 0,
            help: false,
            messages: Vec::new(),
            system: env.map(|e| e.system_name.clone()),
        }
    }

    pub fn screen(&self) -> Screen {
        Screen::ALL[self.screen]
    }

    pub fn field(&self) -> Field {
        self.screen().fields()[self.field]
    }

    /// Current value of the focused field, as it would be typed.
    pub fn value(&self, f: Field) -> String {
        let d = &self.draft;
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        match f {
            Field::Collective => d.collective.to_string(),
            Field::Datatype => d.datatype.to_string(),
            Field::Op => d.op.to_string(),
            Field::Algorithms => d.algorithms.join(","),
            Field::Ranks => join(&d.ranks),
            Field::Sizes => format!("{}:{}:{}", d.sizes.min_bytes, d.sizes.max_bytes, d.sizes.multiplier),
            Field::Iterations => d.iterations.to_string(),
            Field::Warmup => d.warmup.to_string(),
            Field::Backend => d.backend.to_string(),
            Field::Sweeps => {
                if d.sweeps.is_empty() {
                    "none".into()
                } else {
                    d.sweeps.iter().map(sweep_text).collect::<Vec<_>>().join(" ")
                }
            }
            Field::Granularity => d.granularity.to_string(),
            Field::Allocation => d.allocation.to_string(),
            Field::OutputPath => self.output.display().to_string(),
            Field::Confirm => "y".into(),
        }
    }

    /// Violations of the draft that belong to `screen`.
    pub fn screen_violations(&self, screen: Screen) -> Vec<FieldViolation> {
        let mut v: Vec<FieldViolation> = self.draft.violations().into_iter().filter(|fv| screen.owns(&fv.field)).collect();
        if screen == Screen::Output && self.output.as_os_str().is_empty() {
            v.push(FieldViolation {
                field: "output".into(),
                message: "a file name is required".into(),
            });
        }
        v
    }

    /// Feeds one line of input.
    pub fn submit(&mut self, line: &str) -> Step {
        let input = line.trim();
        self.messages.clear();
        match input {
            "?" => {
                self.help = !self.help;
                return Step::Continue;
            }
            "q" | "quit" => return Step::Aborted,
            "<" => {
                self.back();
                return Step::Continue;
            }
            _ => {}
        }
        let field = self.field();
        if field == Field::Confirm {
            return match input {
                "" | "y" | "yes" => Step::Done {
                    config: self.draft.clone(),
                    path: self.output.clone(),
                },
                _ => {
                    self.messages.push("answer y, < or q".into());
                    Step::Continue
                }
            };
        }
        if !input.is_empty() {
            if let Err(e) = self.set(field, input) {
                self.messages.push(e);
                return Step::Continue;
            }
            // Inline check of what was just entered.
            let own: Vec<String> = self
                .screen_violations(field.screen())
                .into_iter()
                .filter(|v| field_owns(field, &v.field))
                .map(|v| v.to_string())
                .collect();
            if !own.is_empty() {
                self.messages = own;
                return Step::Continue;
            }
        }
        self.forward();
        Step::Continue
    }

    fn set(&mut self, field: Field, input: &str) -> std::result::Result<(), String> {
        let d = &mut self.draft;
        let e = |err: Error| err.to_string();
        match field {
            Field::Collective => {
                let kind: CollectiveKind = input.parse().map_err(e)?;
                if kind != d.collective {
                    d.collective = kind;
                    d.algorithms.clear();
                    d.fill_defaults();
                }
            }
            Field::Datatype => d.datatype = input.parse().map_err(e)?,
            Field::Op => d.op = input.parse().map_err(e)?,
            Field::Algorithms => {
                if input == "all" {
                    d.algorithms.clear();
                } else {
                    let mut names = Vec::new();
                    for n in input.split(',').map(str::trim).filter(|n| !n.is_empty()) {
                        names.push(AlgorithmId::parse(d.collective, n).map_err(e)?.name().to_string());
                    }
                    d.algorithms = names;
                }
                d.fill_defaults();
            }
            Field::Ranks => {
                d.ranks = input
                    .split(',')
                    .map(|x| x.trim().parse::<usize>().map_err(|_| format!("`{x}` is not a rank count")))
                    .collect::<std::result::Result<_, _>>()?;
            }
            Field::Sizes => d.sizes = input.parse::<SizeRange>().map_err(e)?,
            Field::Iterations => d.iterations = input.parse().map_err(|_| format!("`{input}` is not a count"))?,
            Field::Warmup => d.warmup = input.parse().map_err(|_| format!("`{input}` is not a count"))?,
            Field::Backend => d.backend = input.parse::<Backend>().map_err(e)?,
            Field::Sweeps => {
                d.sweeps = if input == "none" {
                    Vec::new()
                } else {
                    input.split_whitespace().map(str::parse::<Sweep>).collect::<Result<_>>().map_err(e)?
                };
            }
            Field::Granularity => d.granularity = input.parse::<GranularityMode>().map_err(e)?,
            Field::Allocation => d.allocation = input.parse().map_err(e)?,
            Field::OutputPath => self.output = PathBuf::from(input),
            Field::Confirm => {}
        }
        Ok(())
    }

    fn forward(&mut self) {
        if self.field + 1 < self.screen().fields().len() {
            self.field += 1;
            return;
        }
        let blocking = self.screen_violations(self.screen());
        if !blocking.is_empty() {
            self.messages = blocking.iter().map(ToString::to_string).collect();
            self.messages.push("fix the fields above to continue".into());
            return;
        }
        self.screen += 1;
        self.field = 0;
        self.help = false;
    }

    fn back(&mut self) {
        if self.field > 0 {
            self.field -= 1;
        } else if self.screen > 0 {
            self.screen -= 1;
            self.field = self.screen().fields().len() - 1;
        }
        self.help = false;
    }

    /// Text of the current screen: title, fields, messages, help, review.
    pub fn render(&self) -> String {
        let screen = self.screen();
        let mut s = String::new();
        let _ = writeln!(s, "== [{}/{}] {} ==", self.screen + 1, Screen::ALL.len(), screen.title());
        if let Some(sys) = &self.system {
            let _ = writeln!(s, "system: {sys}");
        }
        match screen {
            Screen::Algorithms => {
                let avail: Vec<&str> = AlgorithmId::for_collective(self.draft.collective).iter().map(|a| a.name()).collect();
                let _ = writeln!(s, "available for {}: {}", self.draft.collective, avail.join(", "));
            }
            Screen::Review => {
                let _ = writeln!(s, "{} will contain:", self.output.display());
                s.push_str(&self.draft.to_json());
            }
            _ => {}
        }
        for (i, &f) in screen.fields().iter().enumerate() {
            if f == Field::Confirm {
                continue;
            }
            let mark = if i == self.field { '>' } else { ' ' };
            let _ = writeln!(s, "{mark} {}: {}", f.label(), self.value(f));
        }
        for m in &self.messages {
            let _ = writeln!(s, "! {m}");
        }
        if self.help {
            let _ = writeln!(s, "-- help: {} --\n{}", self.field().label(), self.field().help());
        }
        s
    }

    pub fn prompt(&self) -> String {
        let f = self.field();
        format!("{} [{}] (? help, < back, q quit): ", f.label(), self.value(f))
    }
}

fn field_owns(field: Field, path: &str) -> bool {
    let root = path.split(['.', '[']).next().unwrap_or(path);
    match field {
        Field::Collective => root == "collective",
        Field::Datatype | Field::Sizes => root == "sizes" || root == "datatype",
        Field::Op => root == "op",
        Field::Algorithms => root == "algorithms",
        Field::Ranks => root == "ranks",
        Field::Iterations => root == "iterations",
        Field::Warmup => root == "warmup",
        Field::Backend => root == "backend",
        Field::Sweeps => root == "sweeps",
        Field::Granularity => root == "granularity",
        Field::Allocation => root == "allocation",
        Field::OutputPath => root == "output",
        Field::Confirm => false,
    }
}

fn sweep_text(s: &Sweep) -> String {
    let v = serde_json::to_value(&s.set).unwrap_or_default();
    let mut parts = Vec::new();
    if let Some(obj) = v.as_object() {
        for (k, val) in obj {
            match val.as_object() {
                Some(inner) => {
                    for (ik, iv) in inner {
                        parts.push(format!("{k}.{ik}={iv}"));
                    }
                }
                None => parts.push(format!("{k}={val}")),
            }
        }
    }
    format!("{}:{}", s.name, parts.join(","))
}

/// Writes `text` to `path` through a temporary sibling, so a reader never
/// sees a partial file.
pub fn write_atomically(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Runs the wizard over line-based input. Returns the written path, or
/// `None` if the user quit (or input ended) before confirming.
pub fn run_wizard<R: BufRead, W: Write>(env: Option<&EnvConfig>, input: R, mut out: W) -> Result<Option<PathBuf>> {
    let mut state = WizardState::new(env);
    let io = |e| Error::io("<terminal>", e);
    let mut lines = input.lines();
    loop {
        write!(out, "{}{}", state.render(), state.prompt()).map_err(io)?;
        out.flush().map_err(io)?;
        let Some(line) = lines.next() else {
            writeln!(out, "\naborted; nothing written").map_err(io)?;
            return Ok(None);
        };
        match state.submit(&line.map_err(io)?) {
            Step::Continue => {}
            Step::Aborted => {
                writeln!(out, "aborted; nothing written").map_err(io)?;
                return Ok(None);
            }
            Step::Done { config, path } => {
                write_atomically(&path, &config.to_json())?;
                writeln!(out, "wrote {}", path.display()).map_err(io)?;
                return Ok(Some(path));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(state: &mut WizardState, inputs: &[&str]) -> Step {
        let mut last = Step::Continue;
        for i in inputs {
            last = state.submit(i);
        }
        last
    }

    /// Empty lines through every field of every screen.
    fn accept_all() -> Vec<&'static str> {
        vec![""; Screen::ALL.iter().map(|s| s.fields().len()).sum()]
    }

    #[test]
    fn defaults_path_yields_the_documented_descriptor() {
        let mut w = WizardState::new(None);
        let Step::Done { config, path } = drive(&mut w, &accept_all()) else { panic!("not done") };
        assert_eq!(config, TestConfig::default());
        assert_eq!(config.algorithms, ["ring", "recursive_doubling", "rabenseifner"]);
        assert_eq!(config.sizes.expand().first(), Some(&1024));
        assert_eq!(config.sizes.expand().last(), Some(&(1 << 20)));
        assert_eq!(path, PathBuf::from("test.json"));
    }

    #[test]
    fn bad_multiplier_blocks_forward_navigation() {
        let mut w = WizardState::new(None);
        drive(&mut w, &["", "", "", "", ""]);
        assert_eq!(w.field(), Field::Sizes);
        w.submit("1KiB:4KiB:1");
        assert_eq!(w.field(), Field::Sizes);
        assert!(w.messages.iter().any(|m| m.contains("sizes.multiplier")));
        drive(&mut w, &["", "", ""]);
        assert_eq!(w.screen(), Screen::Scale, "left the screen with an invalid field");
        w.submit("<");
        w.submit("<");
        w.submit("1KiB:4KiB:2");
        drive(&mut w, &["", ""]);
        assert_eq!(w.screen(), Screen::Backend);
    }

    #[test]
    fn algorithm_list_follows_the_collective() {
        let mut w = WizardState::new(None);
        w.submit("alltoall");
        assert_eq!(w.draft.algorithms, ["pairwise"]);
        drive(&mut w, &["", ""]);
        assert!(w.render().contains("available for alltoall: pairwise"));
        w.submit("ring");
        assert_eq!(w.screen(), Screen::Algorithms);
        assert!(!w.messages.is_empty());
    }

    #[test]
    fn help_overlay_toggles() {
        let mut w = WizardState::new(None);
        w.submit("?");
        assert!(w.render().contains("-- help: collective --"));
        w.submit("?");
        assert!(!w.render().contains("-- help"));
    }

    #[test]
    fn review_shows_exactly_what_is_written() {
        let mut w = WizardState::new(None);
        let n = accept_all().len();
        drive(&mut w, &accept_all()[..n - 1]);
        assert_eq!(w.screen(), Screen::Review);
        assert!(w.render().contains(&w.draft.to_json()));
    }

    #[test]
    fn abort_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("t.json");
        let script = format!("\n\n\n\n\n\n\n\n\n\n\n\n{}\nq\n", target.display());
        let written = run_wizard(None, script.as_bytes(), Vec::new()).unwrap();
        assert!(written.is_none());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn driver_writes_a_loadable_descriptor() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("t.json");
        let script = format!("reduce_scatter\n\n\nring,distance_doubling\n8\n\n5\n\nnetsim\nrails4:rails=4\n\n\n{}\ny\n", target.display());
        let path = run_wizard(None, script.as_bytes(), Vec::new()).unwrap().unwrap();
        let t = crate::orchestrator::load_test(&path).unwrap();
        assert_eq!(t.collective, CollectiveKind::ReduceScatter);
        assert_eq!(t.algorithms, ["ring", "distance_doubling"]);
        assert_eq!((t.ranks.as_slice(), t.iterations), (&[8][..], 5));
        assert_eq!(t.sweeps[0].set.rails, Some(4));
        assert_eq!(fs::read_to_string(&path).unwrap(), t.to_json());
    }
}
