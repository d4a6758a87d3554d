//! Reference collective algorithms expressed as explicit per-rank schedules,
//! and the step/volume/reduction counts they imply.

mod builders;
mod schedule;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use schedule::{
    validate_schedule, Action, Buffer, RankProgram, Region, Schedule, Tag, ValidationReport, Violation,
};

use crate::error::{Error, Result};
use crate::model::CollectiveKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmId {
    AllreduceRing,
    AllreduceRecursiveDoubling,
    AllreduceRabenseifner,
    ReduceScatterDistanceHalving,
    ReduceScatterDistanceDoubling,
    ReduceScatterRing,
    AllgatherRing,
    AllgatherDistanceDoubling,
    AlltoallPairwise,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 9] = [
        AlgorithmId::AllreduceRing,
        AlgorithmId::AllreduceRecursiveDoubling,
        AlgorithmId::AllreduceRabenseifner,
        AlgorithmId::ReduceScatterDistanceHalving,
        AlgorithmId::ReduceScatterDistanceDoubling,
        AlgorithmId::ReduceScatterRing,
        AlgorithmId::AllgatherRing,
        AlgorithmId::AllgatherDistanceDoubling,
        AlgorithmId::AlltoallPairwise,
    ];

    pub fn collective(self) -> CollectiveKind {
        use AlgorithmId::*;
        match self {
            AllreduceRing | AllreduceRecursiveDoubling | AllreduceRabenseifner => CollectiveKind::Allreduce,
            ReduceScatterDistanceHalving | ReduceScatterDistanceDoubling | ReduceScatterRing => {
                CollectiveKind::ReduceScatter
            }
            AllgatherRing | AllgatherDistanceDoubling => CollectiveKind::Allgather,
            AlltoallPairwise => CollectiveKind::Alltoall,
        }
    }

    /// Name within its collective, as used in descriptors and result files.
    pub fn name(self) -> &'static str {
        use AlgorithmId::*;
        match self {
            AllreduceRing | ReduceScatterRing | AllgatherRing => "ring",
            AllreduceRecursiveDoubling => "recursive_doubling",
            AllreduceRabenseifner => "rabenseifner",
            ReduceScatterDistanceHalving => "distance_halving",
            ReduceScatterDistanceDoubling | AllgatherDistanceDoubling => "distance_doubling",
            AlltoallPairwise => "pairwise",
        }
    }

    pub fn requires_power_of_two(self) -> bool {
        !matches!(
            self,
            AlgorithmId::AllreduceRing
                | AlgorithmId::ReduceScatterRing
                | AlgorithmId::AllgatherRing
                | AlgorithmId::AlltoallPairwise
        )
    }

    /// Whether the message must split into `p` equal blocks.
    pub fn requires_blocks(self) -> bool {
        self != AlgorithmId::AllreduceRecursiveDoubling
    }

    pub fn for_collective(kind: CollectiveKind) -> Vec<AlgorithmId> {
        AlgorithmId::ALL.into_iter().filter(|a| a.collective() == kind).collect()
    }

    pub fn parse(kind: CollectiveKind, name: &str) -> Result<AlgorithmId> {
        let norm = name.to_ascii_lowercase().replace('-', "_");
        let norm = match norm.as_str() {
            "rd" | "recursive_halving_doubling" => "recursive_doubling".to_string(),
            "halving" => "distance_halving".to_string(),
            "doubling" => "distance_doubling".to_string(),
            _ => norm,
        };
        AlgorithmId::for_collective(kind)
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::usage(format!("no algorithm `{name}` for {kind}")))
    }

    pub fn check_ranks(self, p: usize) -> Result<()> {
        if p < 2 {
            return Err(Error::Unsupported {
                algorithm: self,
                p,
                reason: "needs at least two ranks",
            });
        }
        if self.requires_power_of_two() && !p.is_power_of_two() {
            return Err(Error::Unsupported {
                algorithm: self,
                p,
                reason: "needs a power-of-two rank count",
            });
        }
        Ok(())
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.collective(), self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    /// Parses `collective/name`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, name) = s
            .split_once(['/', ':'])
            .ok_or_else(|| Error::usage(format!("expected `collective/algorithm`, got `{s}`")))?;
        AlgorithmId::parse(kind.parse()?, name)
    }
}

/// Builds the schedule of `alg` for `p` ranks and a `msg_bytes` message of
/// `element_width`-byte elements.
pub fn build_schedule(alg: AlgorithmId, p: usize, msg_bytes: usize, element_width: usize) -> Result<Schedule> {
    alg.check_ranks(p)?;
    if element_width == 0 {
        return Err(Error::usage("element width must be positive"));
    }
    if msg_bytes == 0 || !msg_bytes.is_multiple_of(element_width) {
        return Err(Error::usage(format!(
            "message size {msg_bytes} B is not a positive multiple of the {element_width}-byte element"
        )));
    }
    let n = msg_bytes / element_width;
    if alg.requires_blocks() && !n.is_multiple_of(p) {
        return Err(Error::usage(format!(
            "{alg} needs the element count ({n}) divisible by p={p}"
        )));
    }
    Ok(builders::build(alg, p, n, element_width, msg_bytes))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCost {
    /// Size of each message sent in this step.
    pub messages: Vec<usize>,
    pub bytes_sent: usize,
    pub reduced_elements: usize,
    pub copy_bytes: usize,
    pub allocs: usize,
}

/// Step count, volume and reduction work of one rank.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTerms {
    pub steps: usize,
    pub bytes_sent: usize,
    pub reduced_elements: usize,
    pub copy_bytes: usize,
    pub allocs: usize,
    pub per_step: Vec<StepCost>,
}

pub fn cost_terms(s: &Schedule, rank: usize) -> Result<CostTerms> {
    let prog = s
        .ranks
        .get(rank)
        .ok_or_else(|| Error::usage(format!("rank {rank} out of range for p={}", s.p)))?;
    let per_step: Vec<StepCost> = prog
        .steps
        .iter()
        .map(|actions| {
            let mut c = StepCost::default();
            for a in actions {
                match a {
                    Action::Send { bytes, .. } => {
                        c.messages.push(*bytes);
                        c.bytes_sent += bytes;
                    }
                    Action::ReduceLocal { elements, .. } => c.reduced_elements += elements,
                    Action::Copy { bytes, .. } => c.copy_bytes += bytes,
                    Action::Alloc { .. } => c.allocs += 1,
                    Action::Recv { .. } | Action::Sync => {}
                }
            }
            c
        })
        .collect();
    Ok(CostTerms {
        steps: per_step.len(),
        bytes_sent: per_step.iter().map(|c| c.bytes_sent).sum(),
        reduced_elements: per_step.iter().map(|c| c.reduced_elements).sum(),
        copy_bytes: per_step.iter().map(|c| c.copy_bytes).sum(),
        allocs: per_step.iter().map(|c| c.allocs).sum(),
        per_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(alg: AlgorithmId, p: usize, bytes: usize) -> Schedule {
        build_schedule(alg, p, bytes, 4).unwrap()
    }

    #[test]
    fn ring_allreduce_example() {
        let s = sched(AlgorithmId::AllreduceRing, 4, 4096);
        let c = cost_terms(&s, 0).unwrap();
        assert_eq!(c.steps, 6);
        assert_eq!(c.bytes_sent, 6144);
        assert_eq!(c.reduced_elements, 768);
    }

    #[test]
    fn recursive_doubling_example() {
        let s = sched(AlgorithmId::AllreduceRecursiveDoubling, 8, 4096);
        let c = cost_terms(&s, 3).unwrap();
        assert_eq!(c.steps, 3);
        assert_eq!(c.bytes_sent, 12288);
    }

    #[test]
    fn rabenseifner_example() {
        let s = sched(AlgorithmId::AllreduceRabenseifner, 8, 4096);
        let c = cost_terms(&s, 5).unwrap();
        assert_eq!(c.steps, 6);
        assert_eq!(c.bytes_sent, 7168);
    }

    #[test]
    fn distance_doubling_sends_halve_while_distance_doubles() {
        let s = sched(AlgorithmId::ReduceScatterDistanceDoubling, 8, 1024);
        for rank in 0..8 {
            let sends: Vec<(usize, usize)> = s.ranks[rank]
                .actions()
                .filter_map(|(_, a)| match a {
                    Action::Send { peer, bytes, .. } => Some((peer.abs_diff(rank), *bytes)),
                    _ => None,
                })
                .collect();
            assert_eq!(sends, vec![(1, 512), (2, 256), (4, 128)], "rank {rank}");
        }
        assert_eq!(cost_terms(&s, 0).unwrap().bytes_sent, 896);
    }

    #[test]
    fn distance_halving_partners() {
        let s = sched(AlgorithmId::ReduceScatterDistanceHalving, 8, 1024);
        let sends: Vec<(usize, usize)> = s.ranks[0]
            .actions()
            .filter_map(|(_, a)| match a {
                Action::Send { peer, bytes, .. } => Some((*peer, *bytes)),
                _ => None,
            })
            .collect();
        assert_eq!(sends, vec![(4, 512), (2, 256), (1, 128)]);
    }

    #[test]
    fn every_builder_output_validates() {
        for alg in AlgorithmId::ALL {
            for p in [2, 3, 4, 5, 6, 8, 16] {
                if alg.check_ranks(p).is_err() {
                    continue;
                }
                let s = sched(alg, p, 4 * p * 8);
                let report = validate_schedule(&s);
                assert!(report.is_valid(), "{alg} p={p}: {:?}", report.violations);
            }
        }
    }

    #[test]
    fn unmatched_send_is_reported() {
        let mut s = sched(AlgorithmId::AllreduceRing, 4, 64);
        let prog = &mut s.ranks[1];
        let idx = prog.steps[2].iter().position(|a| matches!(a, Action::Recv { .. })).unwrap();
        prog.steps[2].remove(idx);
        let report = validate_schedule(&s);
        assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
        assert!(matches!(report.violations[0], Violation::UnmatchedSend { rank: 0, step: 2, .. }));
    }

    #[test]
    fn out_of_range_peer_is_reported() {
        let mut s = sched(AlgorithmId::AlltoallPairwise, 4, 64);
        if let Some(Action::Send { peer, .. }) = s.ranks[0].steps[0].iter_mut().find(|a| matches!(a, Action::Send { .. })) {
            *peer = 4;
        }
        let report = validate_schedule(&s);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PeerOutOfRange { rank: 0, peer: 4, .. })));
    }

    #[test]
    fn constraint_errors() {
        assert!(matches!(
            build_schedule(AlgorithmId::AllreduceRabenseifner, 6, 96, 4),
            Err(Error::Unsupported { .. })
        ));
        assert!(matches!(
            build_schedule(AlgorithmId::AllreduceRing, 4, 40, 4),
            Err(Error::Usage(_))
        ));
        assert!(matches!(build_schedule(AlgorithmId::AllreduceRing, 4, 6, 4), Err(Error::Usage(_))));
        assert!(build_schedule(AlgorithmId::AllreduceRecursiveDoubling, 4, 12, 4).is_ok());
    }

    #[test]
    fn parse_names() {
        assert_eq!(
            AlgorithmId::parse(CollectiveKind::Allreduce, "ring").unwrap(),
            AlgorithmId::AllreduceRing
        );
        assert_eq!(
            "reduce_scatter/distance_doubling".parse::<AlgorithmId>().unwrap(),
            AlgorithmId::ReduceScatterDistanceDoubling
        );
        assert!(AlgorithmId::parse(CollectiveKind::Alltoall, "ring").is_err());
        for alg in AlgorithmId::ALL {
            assert_eq!(alg.to_string().parse::<AlgorithmId>().unwrap(), alg);
        }
    }
}
