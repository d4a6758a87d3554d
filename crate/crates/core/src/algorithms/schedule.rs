use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::AlgorithmId;
use crate::model::PhaseTag;

/// Per-rank buffers an action may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Buffer {
    /// The caller's input, read-only.
    Input,
    /// Accumulation and result buffer.
    Work,
    /// Receive staging area for data that is reduced afterwards.
    Scratch,
}

impl Buffer {
    pub fn name(self) -> &'static str {
        match self {
            Buffer::Input => "input",
            Buffer::Work => "work",
            Buffer::Scratch => "scratch",
        }
    }
}

/// A set of `count` equal blocks of `block` elements, `stride` elements
/// apart, starting at `offset`. Elements are visited block by block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub buffer: Buffer,
    pub offset: usize,
    pub block: usize,
    pub stride: usize,
    pub count: usize,
}

impl Region {
    pub fn contiguous(buffer: Buffer, offset: usize, len: usize) -> Self {
        Region {
            buffer,
            offset,
            block: len,
            stride: len,
            count: 1,
        }
    }

    pub fn strided(buffer: Buffer, offset: usize, block: usize, stride: usize, count: usize) -> Self {
        Region {
            buffer,
            offset,
            block,
            stride,
            count,
        }
    }

    pub fn len(&self) -> usize {
        self.block * self.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One past the last element touched.
    pub fn end(&self) -> usize {
        if self.count == 0 {
            self.offset
        } else {
            self.offset + (self.count - 1) * self.stride + self.block
        }
    }

    /// Start offsets of each block.
    pub fn blocks(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.count).map(move |i| {
            let start = self.offset + i * self.stride;
            start..start + self.block
        })
    }
}

/// Matching key of a point-to-point message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tag {
    pub step: usize,
    pub src: usize,
    pub dst: usize,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.step, self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Send {
        peer: usize,
        bytes: usize,
        tag: Tag,
        src: Region,
    },
    Recv {
        peer: usize,
        bytes: usize,
        tag: Tag,
        dst: Region,
    },
    /// `dst[i] = op(dst[i], src[i])` over `elements` elements.
    ReduceLocal {
        elements: usize,
        src: Region,
        dst: Region,
    },
    Copy {
        bytes: usize,
        src: Region,
        dst: Region,
    },
    Alloc {
        bytes: usize,
        buffer: Buffer,
    },
    /// Barrier across all ranks.
    Sync,
}

impl Action {
    pub fn phase(&self) -> PhaseTag {
        match self {
            Action::Send { .. } | Action::Recv { .. } => PhaseTag::Communication,
            Action::ReduceLocal { .. } => PhaseTag::Reduction,
            Action::Copy { .. } => PhaseTag::Copy,
            Action::Alloc { .. } => PhaseTag::Alloc,
            Action::Sync => PhaseTag::Sync,
        }
    }

    pub fn is_comm(&self) -> bool {
        matches!(self, Action::Send { .. } | Action::Recv { .. })
    }

    fn keyword(&self) -> &'static str {
        match self {
            Action::Send { .. } => "send",
            Action::Recv { .. } => "recv",
            Action::ReduceLocal { .. } => "reduce",
            Action::Copy { .. } => "copy",
            Action::Alloc { .. } => "alloc",
            Action::Sync => "sync",
        }
    }
}

/// The ordered steps one rank executes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankProgram {
    pub input_elems: usize,
    /// Where the collective's output lives once the program has run.
    pub result: Region,
    pub steps: Vec<Vec<Action>>,
}

impl RankProgram {
    pub fn actions(&self) -> impl Iterator<Item = (usize, &Action)> {
        self.steps
            .iter()
            .enumerate()
            .flat_map(|(s, acts)| acts.iter().map(move |a| (s, a)))
    }

    /// Largest allocation requested for `buffer`, in elements.
    pub fn buffer_elems(&self, buffer: Buffer, width: usize) -> Option<usize> {
        if buffer == Buffer::Input {
            return Some(self.input_elems);
        }
        self.actions()
            .filter_map(|(_, a)| match a {
                Action::Alloc { bytes, buffer: b } if *b == buffer => Some(bytes / width),
                _ => None,
            })
            .max()
    }
}

/// Explicit per-rank program of a collective algorithm, organised in
/// bulk-synchronous steps: every matched send/recv pair shares its step index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub algorithm: AlgorithmId,
    pub p: usize,
    pub msg_bytes: usize,
    pub element_width: usize,
    pub step_labels: Vec<String>,
    pub ranks: Vec<RankProgram>,
}

impl Schedule {
    pub fn steps(&self) -> usize {
        self.step_labels.len()
    }

    pub fn elements(&self) -> usize {
        self.msg_bytes / self.element_width
    }

    /// Inserts a barrier at the end of every step on every rank.
    pub fn with_step_barriers(mut self) -> Self {
        for prog in &mut self.ranks {
            for step in &mut prog.steps {
                step.push(Action::Sync);
            }
        }
        self
    }

    /// Text form, one line per action: `rank step phase action peer bytes tag`.
    /// Fields that do not apply are written as `-`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} p={} msg_bytes={} element_width={}",
            self.algorithm, self.p, self.msg_bytes, self.element_width
        );
        for (rank, prog) in self.ranks.iter().enumerate() {
            for (step, action) in prog.actions() {
                let label = self.step_labels.get(step).map(String::as_str).unwrap_or("-");
                let (peer, bytes, tag) = match action {
                    Action::Send { peer, bytes, tag, .. } | Action::Recv { peer, bytes, tag, .. } => {
                        (peer.to_string(), (*bytes).to_string(), tag.to_string())
                    }
                    Action::ReduceLocal { elements, .. } => {
                        ("-".into(), (elements * self.element_width).to_string(), "-".into())
                    }
                    Action::Copy { bytes, .. } | Action::Alloc { bytes, .. } => {
                        ("-".into(), bytes.to_string(), "-".into())
                    }
                    Action::Sync => ("-".into(), "-".into(), "-".into()),
                };
                let _ = writeln!(out, "{rank} {step} {label} {} {peer} {bytes} {tag}", action.keyword());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    StepCount { rank: usize, steps: usize, expected: usize },
    RankCount { ranks: usize, p: usize },
    PeerOutOfRange { rank: usize, step: usize, peer: usize },
    SelfPeer { rank: usize, step: usize },
    ZeroBytes { rank: usize, step: usize },
    SizeMismatch { rank: usize, step: usize, bytes: usize, region_bytes: usize },
    RegionOutOfBounds { rank: usize, step: usize, buffer: Buffer, end: usize, len: usize },
    BadTag { rank: usize, step: usize, tag: Tag },
    DuplicateTag { rank: usize, tag: Tag },
    UnmatchedSend { rank: usize, step: usize, tag: Tag },
    UnmatchedRecv { rank: usize, step: usize, tag: Tag },
    ByteMismatch { tag: Tag, sent: usize, received: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::StepCount { rank, steps, expected } => {
                write!(f, "rank {rank} has {steps} steps, expected {expected}")
            }
            Violation::RankCount { ranks, p } => write!(f, "{ranks} rank programs for p={p}"),
            Violation::PeerOutOfRange { rank, step, peer } => {
                write!(f, "rank {rank} step {step}: peer {peer} out of range")
            }
            Violation::SelfPeer { rank, step } => write!(f, "rank {rank} step {step}: peer is self"),
            Violation::ZeroBytes { rank, step } => write!(f, "rank {rank} step {step}: empty action"),
            Violation::SizeMismatch { rank, step, bytes, region_bytes } => write!(
                f,
                "rank {rank} step {step}: action declares {bytes} B but its region covers {region_bytes} B"
            ),
            Violation::RegionOutOfBounds { rank, step, buffer, end, len } => write!(
                f,
                "rank {rank} step {step}: {} region ends at {end}, buffer holds {len}",
                buffer.name()
            ),
            Violation::BadTag { rank, step, tag } => write!(f, "rank {rank} step {step}: inconsistent tag {tag}"),
            Violation::DuplicateTag { rank, tag } => write!(f, "rank {rank} uses tag {tag} twice"),
            Violation::UnmatchedSend { rank, step, tag } => {
                write!(f, "rank {rank} step {step}: send {tag} has no matching recv")
            }
            Violation::UnmatchedRecv { rank, step, tag } => {
                write!(f, "rank {rank} step {step}: recv {tag} has no matching send")
            }
            Violation::ByteMismatch { tag, sent, received } => {
                write!(f, "message {tag}: {sent} B sent, {received} B expected")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural checks: matching, ranges, sizes, step symmetry.
pub fn validate_schedule(s: &Schedule) -> ValidationReport {
    let mut v = Vec::new();
    let width = s.element_width.max(1);
    if s.ranks.len() != s.p {
        v.push(Violation::RankCount { ranks: s.ranks.len(), p: s.p });
    }

    // (src, dst, tag) -> (step, bytes)
    let mut sends: HashMap<(usize, usize, Tag), (usize, usize)> = HashMap::new();
    let mut recvs: HashMap<(usize, usize, Tag), (usize, usize)> = HashMap::new();

    for (rank, prog) in s.ranks.iter().enumerate() {
        if prog.steps.len() != s.steps() {
            v.push(Violation::StepCount {
                rank,
                steps: prog.steps.len(),
                expected: s.steps(),
            });
        }
        let check_region = |v: &mut Vec<Violation>, step: usize, r: &Region| match prog.buffer_elems(r.buffer, width) {
            Some(len) if r.end() <= len => {}
            len => v.push(Violation::RegionOutOfBounds {
                rank,
                step,
                buffer: r.buffer,
                end: r.end(),
                len: len.unwrap_or(0),
            }),
        };
        check_region(&mut v, 0, &prog.result);

        for (step, action) in prog.actions() {
            match action {
                Action::Send { peer, bytes, tag, src: region } | Action::Recv { peer, bytes, tag, dst: region } => {
                    let is_send = matches!(action, Action::Send { .. });
                    if *peer >= s.p {
                        v.push(Violation::PeerOutOfRange { rank, step, peer: *peer });
                    }
                    if *peer == rank {
                        v.push(Violation::SelfPeer { rank, step });
                    }
                    if *bytes == 0 {
                        v.push(Violation::ZeroBytes { rank, step });
                    }
                    if region.len() * width != *bytes {
                        v.push(Violation::SizeMismatch {
                            rank,
                            step,
                            bytes: *bytes,
                            region_bytes: region.len() * width,
                        });
                    }
                    check_region(&mut v, step, region);
                    let (src, dst) = if is_send { (rank, *peer) } else { (*peer, rank) };
                    if *tag != (Tag { step, src, dst }) {
                        v.push(Violation::BadTag { rank, step, tag: *tag });
                    }
                    let map = if is_send { &mut sends } else { &mut recvs };
                    if map.insert((src, dst, *tag), (step, *bytes)).is_some() {
                        v.push(Violation::DuplicateTag { rank, tag: *tag });
                    }
                }
                Action::ReduceLocal { elements, src, dst } => {
                    if *elements == 0 {
                        v.push(Violation::ZeroBytes { rank, step });
                    }
                    for r in [src, dst] {
                        if r.len() != *elements {
                            v.push(Violation::SizeMismatch {
                                rank,
                                step,
                                bytes: elements * width,
                                region_bytes: r.len() * width,
                            });
                        }
                        check_region(&mut v, step, r);
                    }
                }
                Action::Copy { bytes, src, dst } => {
                    if *bytes == 0 {
                        v.push(Violation::ZeroBytes { rank, step });
                    }
                    for r in [src, dst] {
                        if r.len() * width != *bytes {
                            v.push(Violation::SizeMismatch {
                                rank,
                                step,
                                bytes: *bytes,
                                region_bytes: r.len() * width,
                            });
                        }
                        check_region(&mut v, step, r);
                    }
                }
                Action::Alloc { bytes, .. } => {
                    if *bytes == 0 {
                        v.push(Violation::ZeroBytes { rank, step });
                    }
                }
                Action::Sync => {}
            }
        }
    }

    let mut unmatched: Vec<Violation> = Vec::new();
    for (&(src, dst, tag), &(step, sent)) in &sends {
        match recvs.get(&(src, dst, tag)) {
            None => unmatched.push(Violation::UnmatchedSend { rank: src, step, tag }),
            Some(&(rstep, _)) if rstep != step => unmatched.push(Violation::UnmatchedSend { rank: src, step, tag }),
            Some(&(_, received)) if received != sent => unmatched.push(Violation::ByteMismatch { tag, sent, received }),
            Some(_) => {}
        }
    }
    for (&(src, dst, tag), &(step, _)) in &recvs {
        match sends.get(&(src, dst, tag)) {
            Some(&(sstep, _)) if sstep == step => {}
            _ => unmatched.push(Violation::UnmatchedRecv { rank: dst, step, tag }),
        }
    }
    unmatched.sort_by_key(|x| x.to_string());
    v.extend(unmatched);
    ValidationReport { violations: v }
}
