//! Virtual-time simulation under a hierarchical latency/bandwidth/compute
//! cost model, plus its closed form for homogeneous networks.
//!
//! A rank's clock is kept as integer counts of each cost term (latencies and
//! bytes per link class, reduced elements, copied bytes, allocations) and is
//! turned into seconds by [`NetworkModel`] on demand. Two clocks with the
//! same counts therefore read exactly the same time, which is what lets the
//! simulator and [`predict_closed_form`] agree bit-for-bit.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::algorithms::{build_schedule, cost_terms, Action, AlgorithmId, Schedule, Tag};
use crate::error::{Error, FieldViolation, Result};
use crate::model::{CollectiveKind, PhaseTag};
use crate::tracer::{Allocation, LinkClass, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Per-message latency, seconds.
    pub alpha: f64,
    /// Per-byte transfer time, seconds.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub intra_node: LinkParams,
    pub intra_group: LinkParams,
    pub inter_group: LinkParams,
    /// Seconds per reduced element.
    pub gamma: f64,
    /// Seconds per locally copied byte.
    pub copy_beta: f64,
    /// Seconds per buffer allocation.
    pub alloc_alpha: f64,
    /// Messages strictly larger than this use the rendezvous path.
    pub eager_threshold: u64,
    /// Links a rendezvous transfer is striped across.
    pub rails: u32,
}

impl Default for NetworkModel {
    fn default() -> Self {
        NetworkModel {
            intra_node: LinkParams { alpha: 5e-7, beta: 1e-11 },
            intra_group: LinkParams { alpha: 1.5e-6, beta: 8e-11 },
            inter_group: LinkParams { alpha: 3e-6, beta: 8e-11 },
            gamma: 2.5e-10,
            copy_beta: 5e-11,
            alloc_alpha: 1e-6,
            eager_threshold: 8192,
            rails: 1,
        }
    }
}

impl NetworkModel {
    /// One link class everywhere, no copy or allocation cost, every message
    /// on the rendezvous path with a single rail.
    pub fn homogeneous(alpha: f64, beta: f64, gamma: f64) -> Self {
        let link = LinkParams { alpha, beta };
        NetworkModel {
            intra_node: link,
            intra_group: link,
            inter_group: link,
            gamma,
            copy_beta: 0.0,
            alloc_alpha: 0.0,
            eager_threshold: 0,
            rails: 1,
        }
    }

    pub fn link(&self, class: LinkClass) -> LinkParams {
        match class {
            LinkClass::IntraNode => self.intra_node,
            LinkClass::IntraGroup => self.intra_group,
            LinkClass::InterGroup => self.inter_group,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.intra_node == self.intra_group && self.intra_group == self.inter_group
    }

    pub fn is_rendezvous(&self, bytes: usize) -> bool {
        bytes as u64 > self.eager_threshold
    }

    /// Per-byte cost of a `bytes`-sized message on `class`.
    pub fn beta_eff(&self, class: LinkClass, bytes: usize) -> f64 {
        let beta = self.link(class).beta;
        if self.is_rendezvous(bytes) {
            beta / self.rails as f64
        } else {
            beta
        }
    }

    /// Every time parameter multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let s = |l: LinkParams| LinkParams {
            alpha: l.alpha * k,
            beta: l.beta * k,
        };
        NetworkModel {
            intra_node: s(self.intra_node),
            intra_group: s(self.intra_group),
            inter_group: s(self.inter_group),
            gamma: self.gamma * k,
            copy_beta: self.copy_beta * k,
            alloc_alpha: self.alloc_alpha * k,
            ..self.clone()
        }
    }

    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut v = Vec::new();
        let mut check = |field: &str, x: f64| {
            if !(x.is_finite() && x >= 0.0) {
                v.push(FieldViolation {
                    field: field.into(),
                    message: format!("must be a finite non-negative number, got {x}"),
                });
            }
        };
        for (name, l) in [
            ("intra_node", self.intra_node),
            ("intra_group", self.intra_group),
            ("inter_group", self.inter_group),
        ] {
            check(&format!("{name}.alpha"), l.alpha);
            check(&format!("{name}.beta"), l.beta);
        }
        check("gamma", self.gamma);
        check("copy_beta", self.copy_beta);
        check("alloc_alpha", self.alloc_alpha);
        if self.rails == 0 {
            v.push(FieldViolation {
                field: "rails".into(),
                message: "must be at least 1".into(),
            });
        }
        v
    }

    /// Latencies that grow toward the outside of the hierarchy are the usual
    /// case; anything else is suspicious but allowed.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.intra_node.alpha > self.intra_group.alpha {
            w.push("intra-node alpha exceeds intra-group alpha".to_string());
        }
        if self.intra_group.alpha > self.inter_group.alpha {
            w.push("intra-group alpha exceeds inter-group alpha".to_string());
        }
        w
    }
}

/// Integer counts of every cost term accumulated along a critical path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Cost {
    latency: [u64; 3],
    eager: [u64; 3],
    rendezvous: [u64; 3],
    reduced: u64,
    copied: u64,
    allocs: u64,
}

impl Cost {
    fn add(mut self, other: &Cost) -> Cost {
        for i in 0..3 {
            self.latency[i] += other.latency[i];
            self.eager[i] += other.eager[i];
            self.rendezvous[i] += other.rendezvous[i];
        }
        self.reduced += other.reduced;
        self.copied += other.copied;
        self.allocs += other.allocs;
        self
    }

    /// Seconds under `m`. Classes sharing a parameter value are summed
    /// before multiplying, so a homogeneous model sees one product per term.
    fn seconds(&self, m: &NetworkModel) -> f64 {
        fn merged(terms: impl Iterator<Item = (f64, u64)>) -> f64 {
            let mut groups: Vec<(f64, u64)> = Vec::new();
            for (param, count) in terms.filter(|&(_, c)| c > 0) {
                match groups.iter_mut().find(|(p, _)| p.to_bits() == param.to_bits()) {
                    Some(g) => g.1 += count,
                    None => groups.push((param, count)),
                }
            }
            groups.iter().fold(0.0, |acc, &(p, c)| acc + p * c as f64)
        }
        let rails = m.rails as f64;
        let latency = merged(LinkClass::ALL.iter().map(|&c| (m.link(c).alpha, self.latency[c.index()])));
        let eager = merged(LinkClass::ALL.iter().map(|&c| (m.link(c).beta, self.eager[c.index()])));
        let rendezvous = merged(
            LinkClass::ALL
                .iter()
                .map(|&c| (m.link(c).beta / rails, self.rendezvous[c.index()])),
        );
        latency
            + eager
            + rendezvous
            + m.gamma * self.reduced as f64
            + m.copy_beta * self.copied as f64
            + m.alloc_alpha * self.allocs as f64
    }
}

/// A point in virtual time.
#[derive(Debug, Clone, Copy, Default)]
struct Clock {
    cost: Cost,
    secs: f64,
}

impl Clock {
    fn plus(&self, c: &Cost, m: &NetworkModel) -> Clock {
        let cost = self.cost.add(c);
        Clock {
            cost,
            secs: cost.seconds(m),
        }
    }

    fn later(self, other: Clock) -> Clock {
        if other.secs > self.secs {
            other
        } else {
            self
        }
    }
}

/// Predicted timing of one schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Completion time of each rank, seconds.
    pub completion: Vec<f64>,
    /// Time each rank spent per phase.
    pub phases: Vec<BTreeMap<PhaseTag, f64>>,
    /// `timeline[rank][step]`: virtual time at which the step finished.
    pub timeline: Vec<Vec<f64>>,
}

impl SimResult {
    /// Completion of the slowest rank.
    pub fn makespan(&self) -> f64 {
        self.completion.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Blocked {
    Recv,
    Barrier,
}

struct RankSim {
    step: usize,
    idx: usize,
    clock: Clock,
    group: Option<(Clock, Clock)>,
    phases: [f64; 5],
    timeline: Vec<f64>,
    barriers: usize,
    blocked: Option<Blocked>,
}

impl RankSim {
    fn close_group(&mut self) {
        if let Some((start, end)) = self.group.take() {
            self.phases[PhaseTag::Communication.index()] += end.secs - start.secs;
            self.clock = end;
        }
    }
}

pub fn simulate(s: &Schedule, model: &NetworkModel, alloc: &Allocation, topo: &Topology) -> Result<SimResult> {
    simulate_excluding(s, model, alloc, topo, &BTreeSet::new())
}

/// Like [`simulate`], with the listed phases costing nothing, which is how an
/// excluded phase looks to a virtual clock.
pub fn simulate_excluding(
    s: &Schedule,
    model: &NetworkModel,
    alloc: &Allocation,
    topo: &Topology,
    exclude: &BTreeSet<PhaseTag>,
) -> Result<SimResult> {
    if alloc.len() < s.p {
        return Err(Error::usage(format!(
            "rank {} missing from placement ({} ranks placed)",
            alloc.len(),
            alloc.len()
        )));
    }
    alloc.check(topo)?;
    if let Some(v) = model.violations().first() {
        return Err(Error::usage(format!("invalid network model: {v}")));
    }

    let p = s.p;
    let mut ranks: Vec<RankSim> = (0..p)
        .map(|_| RankSim {
            step: 0,
            idx: 0,
            clock: Clock::default(),
            group: None,
            phases: [0.0; 5],
            timeline: Vec::with_capacity(s.steps()),
            barriers: 0,
            blocked: None,
        })
        .collect();
    let mut posted: HashMap<Tag, Clock> = HashMap::new();
    let mut barrier: BTreeMap<usize, Vec<(usize, Clock)>> = BTreeMap::new();
    let free = |ph: PhaseTag| exclude.contains(&ph);

    loop {
        let mut progressed = false;
        for r in 0..p {
            let prog = &s.ranks[r];
            let st = &mut ranks[r];
            if st.blocked == Some(Blocked::Barrier) {
                continue;
            }
            loop {
                if st.step >= prog.steps.len() {
                    break;
                }
                let actions = &prog.steps[st.step];
                if st.idx >= actions.len() {
                    st.close_group();
                    st.timeline.push(st.clock.secs);
                    st.step += 1;
                    st.idx = 0;
                    progressed = true;
                    continue;
                }
                let action = &actions[st.idx];
                if !action.is_comm() {
                    st.close_group();
                }
                match action {
                    Action::Send { peer, bytes, tag, .. } => {
                        let (start, end) = *st.group.get_or_insert((st.clock, st.clock));
                        let class = LinkClass::between(&alloc.ranks[r], &alloc.ranks[*peer]);
                        let mut c = Cost::default();
                        if !free(PhaseTag::Communication) {
                            c.latency[class.index()] = 1;
                            if model.is_rendezvous(*bytes) {
                                c.rendezvous[class.index()] = *bytes as u64;
                            } else {
                                c.eager[class.index()] = *bytes as u64;
                            }
                        }
                        let arrival = start.plus(&c, model);
                        posted.insert(*tag, arrival);
                        st.group = Some((start, end.later(arrival)));
                    }
                    Action::Recv { tag, .. } => {
                        let (start, end) = *st.group.get_or_insert((st.clock, st.clock));
                        match posted.get(tag) {
                            Some(&arrival) => st.group = Some((start, end.later(arrival))),
                            None => {
                                st.blocked = Some(Blocked::Recv);
                                break;
                            }
                        }
                    }
                    Action::ReduceLocal { elements, .. } => {
                        if !free(PhaseTag::Reduction) {
                            let before = st.clock.secs;
                            let c = Cost {
                                reduced: *elements as u64,
                                ..Cost::default()
                            };
                            st.clock = st.clock.plus(&c, model);
                            st.phases[PhaseTag::Reduction.index()] += st.clock.secs - before;
                        }
                    }
                    Action::Copy { bytes, .. } => {
                        if !free(PhaseTag::Copy) {
                            let before = st.clock.secs;
                            let c = Cost {
                                copied: *bytes as u64,
                                ..Cost::default()
                            };
                            st.clock = st.clock.plus(&c, model);
                            st.phases[PhaseTag::Copy.index()] += st.clock.secs - before;
                        }
                    }
                    Action::Alloc { .. } => {
                        if !free(PhaseTag::Alloc) {
                            let before = st.clock.secs;
                            let c = Cost {
                                allocs: 1,
                                ..Cost::default()
                            };
                            st.clock = st.clock.plus(&c, model);
                            st.phases[PhaseTag::Alloc.index()] += st.clock.secs - before;
                        }
                    }
                    Action::Sync => {
                        barrier.entry(st.barriers).or_default().push((r, st.clock));
                        st.barriers += 1;
                        st.blocked = Some(Blocked::Barrier);
                        st.idx += 1;
                        progressed = true;
                        break;
                    }
                }
                st.blocked = None;
                st.idx += 1;
                progressed = true;
            }
        }

        // Release every barrier all ranks have reached.
        let full: Vec<usize> = barrier.iter().filter(|(_, v)| v.len() == p).map(|(&k, _)| k).collect();
        for k in full {
            let arrivals = barrier.remove(&k).unwrap_or_default();
            let release = arrivals.iter().fold(Clock::default(), |acc, &(_, c)| acc.later(c));
            for (r, arrived) in arrivals {
                let st = &mut ranks[r];
                if !free(PhaseTag::Sync) {
                    st.phases[PhaseTag::Sync.index()] += release.secs - arrived.secs;
                    st.clock = release;
                }
                st.blocked = None;
            }
            progressed = true;
        }

        if ranks.iter().zip(&s.ranks).all(|(st, prog)| st.step >= prog.steps.len()) {
            break;
        }
        if !progressed {
            let (r, st) = ranks
                .iter()
                .enumerate()
                .find(|(_, st)| st.blocked.is_some())
                .expect("unfinished ranks are blocked");
            return Err(Error::usage(format!(
                "simulation stalled: rank {r} blocked at step {} ({:?})",
                st.step,
                st.blocked.unwrap()
            )));
        }
    }

    Ok(SimResult {
        completion: ranks.iter().map(|st| st.clock.secs).collect(),
        phases: ranks
            .iter()
            .map(|st| PhaseTag::ALL.iter().map(|&ph| (ph, st.phases[ph.index()])).collect())
            .collect(),
        timeline: ranks.into_iter().map(|st| st.timeline).collect(),
    })
}

/// `A·α + B·β_eff + C·γ` (plus copy and allocation terms, zero unless the
/// model prices them) for a homogeneous model. `β_eff` is `β/rails` for
/// messages above the eager threshold.
pub fn predict_closed_form(
    alg: AlgorithmId,
    p: usize,
    n_bytes: usize,
    element_width: usize,
    model: &NetworkModel,
) -> Result<f64> {
    if !model.is_homogeneous() {
        return Err(Error::usage("closed-form prediction needs a homogeneous network model"));
    }
    let s = build_schedule(alg, p, n_bytes, element_width)?;
    let link = model.intra_node;
    let mut worst = 0.0f64;
    for rank in 0..p {
        let c = cost_terms(&s, rank)?;
        let (mut eager, mut rendezvous) = (0u64, 0u64);
        for msg in c.per_step.iter().flat_map(|st| st.messages.iter()) {
            if model.is_rendezvous(*msg) {
                rendezvous += *msg as u64;
            } else {
                eager += *msg as u64;
            }
        }
        // Term order matches `Cost::seconds`.
        let t = link.alpha * c.steps as f64
            + link.beta * eager as f64
            + link.beta / model.rails as f64 * rendezvous as f64
            + model.gamma * c.reduced_elements as f64
            + model.copy_beta * c.copy_bytes as f64
            + model.alloc_alpha * c.allocs as f64;
        worst = worst.max(t);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Payload bits per second.
    Goodput,
    /// Bits a bandwidth-optimal algorithm must move per rank, per second.
    BusBandwidth,
}

/// Per-rank volume of a bandwidth-optimal algorithm, as a fraction of the
/// message size: `2(p-1)/p` for allreduce, `(p-1)/p` otherwise.
pub fn bus_factor(kind: CollectiveKind, p: usize) -> f64 {
    let frac = (p as f64 - 1.0) / p as f64;
    match kind {
        CollectiveKind::Allreduce => 2.0 * frac,
        _ => frac,
    }
}

pub fn throughput(kind: CollectiveKind, n_bytes: u64, p: usize, time_s: f64, convention: Convention) -> Result<f64> {
    if !(time_s > 0.0) {
        return Err(Error::usage(format!("throughput needs a positive time, got {time_s}")));
    }
    if p == 0 {
        return Err(Error::usage("throughput needs at least one rank"));
    }
    let bytes = match convention {
        Convention::Goodput => n_bytes as f64,
        Convention::BusBandwidth => n_bytes as f64 * bus_factor(kind, p),
    };
    Ok(8.0 * bytes / time_s)
}
