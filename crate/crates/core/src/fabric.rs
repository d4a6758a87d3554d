//! In-process message fabric: runs a [`Schedule`] over `p` logical ranks with
//! real payloads and records per-rank, per-phase wall-clock timings.
//!
//! Ranks are cooperative tasks multiplexed over a pool of worker threads. A
//! rank runs until it needs a message that has not arrived yet (or waits at
//! a barrier), then parks; the sender re-queues it on delivery. Sends are
//! buffered and never block. Each iteration starts with a barrier whose wait
//! is accounted as the `Sync` phase.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::algorithms::{validate_schedule, Action, Buffer, Region, Schedule, Tag};
use crate::error::{Error, Result};
use crate::model::{Data, DataType, Element, PhaseTag, RankVector, ReduceOp};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentationConfig {
    pub time_phases: bool,
    /// Phases that still execute but are subtracted from `total_ns`.
    pub exclude_phases: BTreeSet<PhaseTag>,
    pub per_step: bool,
}

impl Default for InstrumentationConfig {
    fn default() -> Self {
        InstrumentationConfig {
            time_phases: true,
            exclude_phases: BTreeSet::from([PhaseTag::Sync]),
            per_step: false,
        }
    }
}

/// Timing of one rank in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub point: String,
    pub iteration: usize,
    pub rank: usize,
    pub total_ns: f64,
    pub phase_ns: BTreeMap<PhaseTag, f64>,
    pub per_step_ns: Option<Vec<f64>>,
}

impl Measurement {
    pub fn phase(&self, tag: PhaseTag) -> f64 {
        self.phase_ns.get(&tag).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub instr: InstrumentationConfig,
    pub iterations: usize,
    pub warmup: usize,
    /// Worker threads; `0` picks `min(p, available cores)`.
    pub workers: usize,
    /// How long a rank may wait on a receive before the run is aborted.
    pub timeout: Duration,
    pub point: String,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions {
            instr: InstrumentationConfig::default(),
            iterations: 10,
            warmup: 3,
            workers: 0,
            timeout: Duration::from_secs(10),
            point: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Execution {
    pub outputs: Vec<RankVector>,
    pub measurements: Vec<Measurement>,
}

/// Rank `r` filled with `r + 1`, or seeded pseudo-random values.
pub fn default_inputs(s: &Schedule, dtype: DataType, seed: Option<u64>) -> Vec<RankVector> {
    s.ranks
        .iter()
        .enumerate()
        .map(|(r, prog)| {
            let data = match seed {
                None => Data::filled(dtype, prog.input_elems, r as i64 + 1),
                Some(seed) => {
                    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ r as u64);
                    let vals: Vec<i64> = (0..prog.input_elems).map(|_| rng.gen_range(-100..=100)).collect();
                    Data::from_i64s(dtype, &vals)
                }
            };
            RankVector::new(r, data)
        })
        .collect()
}

pub fn execute(s: &Schedule, inputs: &[RankVector], op: ReduceOp, opts: &ExecOptions) -> Result<Execution> {
    let report = validate_schedule(s);
    if let Some(v) = report.violations.first() {
        return Err(Error::usage(format!("invalid schedule: {v}")));
    }
    if inputs.len() != s.p {
        return Err(Error::usage(format!("{} inputs for p={}", inputs.len(), s.p)));
    }
    if opts.iterations == 0 {
        return Err(Error::usage("at least one measured iteration is required"));
    }
    let dtype = inputs[0].data.dtype();
    if dtype.width() != s.element_width {
        return Err(Error::usage(format!(
            "{dtype} elements are {} bytes, schedule expects {}",
            dtype.width(),
            s.element_width
        )));
    }
    for (r, (rv, prog)) in inputs.iter().zip(&s.ranks).enumerate() {
        if rv.rank != r || rv.data.dtype() != dtype || rv.data.len() != prog.input_elems {
            return Err(Error::usage(format!(
                "input {r} must be rank {r} with {} {dtype} elements",
                prog.input_elems
            )));
        }
    }
    match dtype {
        DataType::Int32 => run_typed::<i32>(s, inputs, op, opts),
        DataType::Int64 => run_typed::<i64>(s, inputs, op, opts),
        DataType::Float32 => run_typed::<f32>(s, inputs, op, opts),
        DataType::Float64 => run_typed::<f64>(s, inputs, op, opts),
    }
}

fn run_typed<T: Element>(s: &Schedule, inputs: &[RankVector], op: ReduceOp, opts: &ExecOptions) -> Result<Execution> {
    let views: Vec<&[T]> = inputs.iter().map(|rv| T::view(&rv.data).expect("dtype checked")).collect();
    let workers = if opts.workers == 0 {
        let cores = thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        s.p.min(cores)
    } else {
        opts.workers
    };
    let (queue_tx, queue_rx) = unbounded();
    let (done_tx, done_rx) = unbounded();
    let engine = Engine {
        sched: s,
        inputs: views,
        op,
        tasks: (0..s.p).map(|_| Mutex::new(Task::default())).collect(),
        mail: (0..s.p).map(|_| Mutex::new(Mailbox::default())).collect(),
        barrier: Mutex::new(Vec::new()),
        queue: queue_tx,
        done: done_tx,
        abort: AtomicBool::new(false),
    };

    thread::scope(|scope| {
        for _ in 0..workers {
            let rx: Receiver<Job> = queue_rx.clone();
            let engine = &engine;
            scope.spawn(move || {
                while let Ok(Job::Run(rank)) = rx.recv() {
                    if !engine.abort.load(Ordering::Relaxed) {
                        engine.run_rank(rank);
                    }
                }
            });
        }
        let result = engine.drive(opts, &done_rx);
        for _ in 0..workers {
            let _ = engine.queue.send(Job::Stop);
        }
        result
    })
}

enum Job {
    Run(usize),
    Stop,
}

struct Mailbox<T> {
    msgs: HashMap<Tag, Vec<T>>,
    /// Tag the owner is parked on, with its step and when it started waiting.
    waiting: Option<(Tag, usize, Instant)>,
}

/// Why a rank gave its worker back.
#[derive(Clone, Copy)]
enum Park {
    Entry,
    Barrier,
    Recv,
}

struct Task<T> {
    step: usize,
    idx: usize,
    entered: bool,
    parked: Option<Park>,
    work: Vec<T>,
    scratch: Vec<T>,
    started: Option<Instant>,
    ended: Option<Instant>,
    pending_since: Option<Instant>,
    step_started: Option<Instant>,
    phase_ns: [f64; 5],
    per_step_ns: Vec<f64>,
}

impl<T> Default for Mailbox<T> {
    fn default() -> Self {
        Mailbox {
            msgs: HashMap::new(),
            waiting: None,
        }
    }
}

impl<T> Default for Task<T> {
    fn default() -> Self {
        Task {
            step: 0,
            idx: 0,
            entered: false,
            parked: None,
            work: Vec::new(),
            scratch: Vec::new(),
            started: None,
            ended: None,
            pending_since: None,
            step_started: None,
            phase_ns: [0.0; 5],
            per_step_ns: Vec::new(),
        }
    }
}

impl<T> Task<T> {
    fn reset(&mut self) {
        self.step = 0;
        self.idx = 0;
        self.entered = false;
        self.parked = None;
        self.work = Vec::new();
        self.scratch = Vec::new();
        self.started = None;
        self.ended = None;
        self.pending_since = None;
        self.step_started = None;
        self.phase_ns = [0.0; 5];
        self.per_step_ns.clear();
    }

    fn charge(&mut self, phase: PhaseTag, now: Instant) {
        if let Some(since) = self.pending_since.take() {
            self.phase_ns[phase.index()] += now.duration_since(since).as_nanos() as f64;
        }
    }
}

struct Engine<'a, T> {
    sched: &'a Schedule,
    inputs: Vec<&'a [T]>,
    op: ReduceOp,
    tasks: Vec<Mutex<Task<T>>>,
    mail: Vec<Mutex<Mailbox<T>>>,
    barrier: Mutex<Vec<usize>>,
    queue: Sender<Job>,
    done: Sender<usize>,
    abort: AtomicBool,
}

enum Arrival {
    Released,
    Parked,
}

fn gather<T: Copy>(buf: &[T], region: &Region) -> Vec<T> {
    let mut out = Vec::with_capacity(region.len());
    for range in region.blocks() {
        out.extend_from_slice(&buf[range]);
    }
    out
}

fn scatter<T: Copy>(buf: &mut [T], region: &Region, data: &[T]) {
    let mut at = 0;
    for range in region.blocks() {
        let len = range.len();
        buf[range].copy_from_slice(&data[at..at + len]);
        at += len;
    }
}

impl<'a, T: Element> Engine<'a, T> {
    fn drive(&self, opts: &ExecOptions, done: &Receiver<usize>) -> Result<Execution> {
        let p = self.sched.p;
        let tick = opts.timeout.min(Duration::from_millis(50));
        let mut measurements = Vec::with_capacity(opts.iterations * p);
        for iteration in 0..opts.warmup + opts.iterations {
            for t in &self.tasks {
                t.lock().unwrap().reset();
            }
            for m in &self.mail {
                let mut m = m.lock().unwrap();
                m.msgs.clear();
                m.waiting = None;
            }
            self.barrier.lock().unwrap().clear();
            for r in 0..p {
                let _ = self.queue.send(Job::Run(r));
            }
            let mut finished = 0;
            while finished < p {
                match done.recv_timeout(tick) {
                    Ok(_) => finished += 1,
                    Err(RecvTimeoutError::Timeout) => {
                        if let Some(err) = self.find_stuck(opts.timeout) {
                            self.abort.store(true, Ordering::Relaxed);
                            return Err(err);
                        }
                    }
                    Err(RecvTimeoutError::Disconnected) => unreachable!("engine holds a sender"),
                }
            }
            if iteration >= opts.warmup {
                for (rank, t) in self.tasks.iter().enumerate() {
                    let t = t.lock().unwrap();
                    measurements.push(self.measurement(&t, opts, iteration - opts.warmup, rank));
                }
            }
        }
        let outputs = self
            .tasks
            .iter()
            .enumerate()
            .map(|(r, t)| {
                let t = t.lock().unwrap();
                RankVector::new(r, T::wrap(gather(&t.work, &self.sched.ranks[r].result)))
            })
            .collect();
        Ok(Execution { outputs, measurements })
    }

    fn find_stuck(&self, timeout: Duration) -> Option<Error> {
        let now = Instant::now();
        self.mail.iter().enumerate().find_map(|(rank, m)| {
            let m = m.lock().unwrap();
            match m.waiting {
                Some((tag, step, since)) if now.duration_since(since) >= timeout => Some(Error::Deadlock {
                    rank,
                    step,
                    peer: tag.src,
                    tag,
                }),
                _ => None,
            }
        })
    }

    fn measurement(&self, t: &Task<T>, opts: &ExecOptions, iteration: usize, rank: usize) -> Measurement {
        let wall = match (t.started, t.ended) {
            (Some(a), Some(b)) => b.duration_since(a).as_nanos() as f64,
            _ => 0.0,
        };
        let excluded: f64 = opts.instr.exclude_phases.iter().map(|ph| t.phase_ns[ph.index()]).sum();
        let phase_ns = if opts.instr.time_phases {
            PhaseTag::ALL.iter().map(|&ph| (ph, t.phase_ns[ph.index()])).collect()
        } else {
            BTreeMap::new()
        };
        Measurement {
            point: opts.point.clone(),
            iteration,
            rank,
            total_ns: (wall - excluded).max(0.0),
            phase_ns,
            per_step_ns: opts.instr.per_step.then(|| t.per_step_ns.clone()),
        }
    }

    fn arrive(&self, rank: usize) -> Arrival {
        let mut arrived = self.barrier.lock().unwrap();
        arrived.push(rank);
        if arrived.len() == self.sched.p {
            for other in arrived.drain(..).filter(|&o| o != rank) {
                let _ = self.queue.send(Job::Run(other));
            }
            Arrival::Released
        } else {
            Arrival::Parked
        }
    }

    fn deliver(&self, to: usize, tag: Tag, payload: Vec<T>) {
        let mut mb = self.mail[to].lock().unwrap();
        mb.msgs.insert(tag, payload);
        if matches!(mb.waiting, Some((t, _, _)) if t == tag) {
            mb.waiting = None;
            let _ = self.queue.send(Job::Run(to));
        }
    }

    /// Runs `rank` until it finishes or parks.
    fn run_rank(&self, rank: usize) {
        let mut task = self.tasks[rank].lock().unwrap();
        let t = &mut *task;
        let prog = &self.sched.ranks[rank];

        if !t.entered {
            t.entered = true;
            let now = Instant::now();
            t.started = Some(now);
            t.pending_since = Some(now);
            if let Arrival::Parked = self.arrive(rank) {
                t.parked = Some(Park::Entry);
                return;
            }
            t.charge(PhaseTag::Sync, Instant::now());
        }
        match t.parked.take() {
            Some(Park::Entry) => t.charge(PhaseTag::Sync, Instant::now()),
            Some(Park::Barrier) => {
                t.charge(PhaseTag::Sync, Instant::now());
                t.idx += 1;
            }
            Some(Park::Recv) | None => {}
        }

        loop {
            if t.step >= prog.steps.len() {
                t.ended = Some(Instant::now());
                drop(task);
                let _ = self.done.send(rank);
                return;
            }
            let actions = &prog.steps[t.step];
            if t.idx == 0 && t.step_started.is_none() {
                t.step_started = Some(Instant::now());
            }
            if t.idx >= actions.len() {
                let now = Instant::now();
                if let Some(start) = t.step_started.take() {
                    t.per_step_ns.push(now.duration_since(start).as_nanos() as f64);
                }
                t.step += 1;
                t.idx = 0;
                continue;
            }
            let action = &actions[t.idx];
            if t.pending_since.is_none() {
                t.pending_since = Some(Instant::now());
            }
            match action {
                Action::Send { peer, tag, src, .. } => {
                    let payload = gather(self.buffer(rank, t, src.buffer), src);
                    self.deliver(*peer, *tag, payload);
                }
                Action::Recv { tag, dst, .. } => {
                    let mut mb = self.mail[rank].lock().unwrap();
                    match mb.msgs.remove(tag) {
                        Some(payload) => {
                            drop(mb);
                            scatter(self.buffer_mut(t, dst.buffer), dst, &payload);
                        }
                        None => {
                            mb.waiting = Some((*tag, t.step, Instant::now()));
                            t.parked = Some(Park::Recv);
                            return;
                        }
                    }
                }
                Action::ReduceLocal { src, dst, .. } => {
                    let incoming = gather(self.buffer(rank, t, src.buffer), src);
                    let op = self.op;
                    let buf = self.buffer_mut(t, dst.buffer);
                    let mut at = 0;
                    for range in dst.blocks() {
                        for slot in &mut buf[range] {
                            *slot = slot.combine(incoming[at], op);
                            at += 1;
                        }
                    }
                }
                Action::Copy { src, dst, .. } => {
                    let data = gather(self.buffer(rank, t, src.buffer), src);
                    scatter(self.buffer_mut(t, dst.buffer), dst, &data);
                }
                Action::Alloc { bytes, buffer } => {
                    let elems = bytes / self.sched.element_width;
                    *self.buffer_vec(t, *buffer) = vec![T::zero(); elems];
                }
                Action::Sync => {
                    if let Arrival::Parked = self.arrive(rank) {
                        t.parked = Some(Park::Barrier);
                        return;
                    }
                }
            }
            t.charge(action.phase(), Instant::now());
            t.idx += 1;
        }
    }

    fn buffer<'b>(&'b self, rank: usize, t: &'b Task<T>, b: Buffer) -> &'b [T] {
        match b {
            Buffer::Input => self.inputs[rank],
            Buffer::Work => &t.work,
            Buffer::Scratch => &t.scratch,
        }
    }

    fn buffer_mut<'b>(&self, t: &'b mut Task<T>, b: Buffer) -> &'b mut [T] {
        self.buffer_vec(t, b)
    }

    fn buffer_vec<'b>(&self, t: &'b mut Task<T>, b: Buffer) -> &'b mut Vec<T> {
        match b {
            Buffer::Work => &mut t.work,
            Buffer::Scratch => &mut t.scratch,
            Buffer::Input => unreachable!("input buffers are read-only; rejected by validation"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub rank: usize,
    pub index: usize,
    pub got: String,
    pub expected: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub passed: bool,
    pub checked: usize,
    pub first_mismatch: Option<Mismatch>,
}

/// Relative tolerance used for floating-point results.
pub fn tolerance(dtype: DataType) -> f64 {
    match dtype {
        DataType::Float32 => 1e-5,
        DataType::Float64 => 1e-12,
        DataType::Int32 | DataType::Int64 => 0.0,
    }
}

/// Exact comparison for integers, relative tolerance for floats.
pub fn verify(outputs: &[RankVector], expected: &[RankVector], dtype: DataType) -> VerificationReport {
    let tol = tolerance(dtype);
    let mut checked = 0;
    let fail = |rank, index, got: String, expected: String, checked| VerificationReport {
        passed: false,
        checked,
        first_mismatch: Some(Mismatch {
            rank,
            index,
            got,
            expected,
        }),
    };
    if outputs.len() != expected.len() {
        return fail(outputs.len().min(expected.len()), 0, "missing rank".into(), "rank".into(), 0);
    }
    for (rank, (out, exp)) in outputs.iter().zip(expected).enumerate() {
        let (got, want) = (&out.data, &exp.data);
        if got.dtype() != dtype || want.dtype() != dtype || got.len() != want.len() {
            return fail(rank, 0, format!("{} x{}", got.dtype(), got.len()), format!("{} x{}", want.dtype(), want.len()), checked);
        }
        let mismatch = match (got, want) {
            (Data::Int32(a), Data::Int32(b)) => a.iter().zip(b).position(|(x, y)| x != y),
            (Data::Int64(a), Data::Int64(b)) => a.iter().zip(b).position(|(x, y)| x != y),
            (Data::Float32(a), Data::Float32(b)) => {
                a.iter().zip(b).position(|(&x, &y)| !close(x as f64, y as f64, tol))
            }
            (Data::Float64(a), Data::Float64(b)) => a.iter().zip(b).position(|(&x, &y)| !close(x, y, tol)),
            _ => Some(0),
        };
        if let Some(index) = mismatch {
            return fail(rank, index, got.display_at(index), want.display_at(index), checked + index);
        }
        checked += got.len();
    }
    VerificationReport {
        passed: true,
        checked,
        first_mismatch: None,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}
