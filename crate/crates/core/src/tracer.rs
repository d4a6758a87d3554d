//! Traffic placement: where each transfer of a schedule lands in a two-level
//! group/node topology, and the rank-to-cell map used to render it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::algorithms::{Action, Schedule};
use crate::error::{ConfigError, Error, FieldViolation, Result};

/// Groups of nodes of ranks, Dragonfly+-style.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub name: String,
    pub groups: usize,
    pub nodes_per_group: usize,
    pub ranks_per_node: usize,
    /// Reserved for deeper hierarchies; only two levels are modelled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

impl Topology {
    pub fn new(name: impl Into<String>, groups: usize, nodes_per_group: usize, ranks_per_node: usize) -> Self {
        Topology {
            name: name.into(),
            groups,
            nodes_per_group,
            ranks_per_node,
            levels: None,
        }
    }

    pub fn nodes(&self) -> usize {
        self.groups * self.nodes_per_group
    }

    pub fn capacity(&self) -> usize {
        self.nodes() * self.ranks_per_node
    }

    pub fn group_of_node(&self, node: usize) -> usize {
        node / self.nodes_per_group
    }

    pub fn violations(&self) -> Vec<FieldViolation> {
        let mut v = Vec::new();
        for (field, value) in [
            ("groups", self.groups),
            ("nodes_per_group", self.nodes_per_group),
            ("ranks_per_node", self.ranks_per_node),
        ] {
            if value == 0 {
                v.push(FieldViolation {
                    field: field.into(),
                    message: "must be at least 1".into(),
                });
            }
        }
        if matches!(self.levels, Some(l) if l != 2) {
            v.push(FieldViolation {
                field: "levels".into(),
                message: "only two-level group/node hierarchies are supported".into(),
            });
        }
        v
    }

    pub fn load(path: &Path) -> Result<Topology, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        let topo: Topology = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.into(),
            message: e.to_string(),
        })?;
        let violations = topo.violations();
        if violations.is_empty() {
            Ok(topo)
        } else {
            Err(ConfigError::Schema {
                path: path.into(),
                violations,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    /// Global node id, `group * nodes_per_group + node_in_group`.
    pub node: usize,
    pub group: usize,
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// Fill node by node, group by group.
    Block,
    /// Deal ranks to groups in turn, filling each group's nodes in order.
    #[serde(rename = "rr", alias = "round_robin")]
    RoundRobin,
}

impl AllocationPolicy {
    pub fn name(self) -> &'static str {
        match self {
            AllocationPolicy::Block => "block",
            AllocationPolicy::RoundRobin => "rr",
        }
    }
}

impl std::fmt::Display for AllocationPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AllocationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(AllocationPolicy::Block),
            "rr" | "round_robin" | "round-robin" | "roundrobin" => Ok(AllocationPolicy::RoundRobin),
            _ => Err(Error::usage(format!("unknown allocation policy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub ranks: Vec<Placement>,
}

pub const ALLOC_CSV_HEADER: &str = "rank,node,group,slot";

impl Allocation {
    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn check(&self, topo: &Topology) -> Result<()> {
        let mut per_node = vec![0usize; topo.nodes()];
        for (rank, pl) in self.ranks.iter().enumerate() {
            if pl.node >= topo.nodes() || pl.group != topo.group_of_node(pl.node) || pl.slot >= topo.ranks_per_node {
                return Err(Error::usage(format!(
                    "rank {rank} placement {pl:?} does not fit topology `{}`",
                    topo.name
                )));
            }
            per_node[pl.node] += 1;
            if per_node[pl.node] > topo.ranks_per_node {
                return Err(Error::usage(format!("node {} holds more than {} ranks", pl.node, topo.ranks_per_node)));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ALLOC_CSV_HEADER);
        out.push('\n');
        for (rank, pl) in self.ranks.iter().enumerate() {
            let _ = writeln!(out, "{rank},{},{},{}", pl.node, pl.group, pl.slot);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Allocation> {
        let mut lines = text.lines();
        if lines.next() != Some(ALLOC_CSV_HEADER) {
            return Err(Error::usage(format!("alloc.csv must start with `{ALLOC_CSV_HEADER}`")));
        }
        let mut ranks = Vec::new();
        for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let f: Vec<usize> = line
                .split(',')
                .map(|x| x.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::usage(format!("alloc.csv row {}: {e}", i + 1)))?;
            if f.len() != 4 || f[0] != i {
                return Err(Error::usage(format!("alloc.csv row {} is malformed: `{line}`", i + 1)));
            }
            ranks.push(Placement {
                node: f[1],
                group: f[2],
                slot: f[3],
            });
        }
        Ok(Allocation { ranks })
    }
}

pub fn make_allocation(policy: AllocationPolicy, p: usize, topo: &Topology) -> Result<Allocation> {
    if !topo.violations().is_empty() {
        return Err(Error::usage(format!("topology `{}` is invalid", topo.name)));
    }
    if p > topo.capacity() {
        return Err(Error::usage(format!(
            "{p} ranks exceed the capacity ({}) of topology `{}`",
            topo.capacity(),
            topo.name
        )));
    }
    let rpn = topo.ranks_per_node;
    let ranks = (0..p)
        .map(|r| match policy {
            AllocationPolicy::Block => {
                let node = r / rpn;
                Placement {
                    node,
                    group: topo.group_of_node(node),
                    slot: r % rpn,
                }
            }
            AllocationPolicy::RoundRobin => {
                let group = r % topo.groups;
                let idx = r / topo.groups;
                Placement {
                    node: group * topo.nodes_per_group + idx / rpn,
                    group,
                    slot: idx % rpn,
                }
            }
        })
        .collect();
    Ok(Allocation { ranks })
}

/// Where a transfer travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    IntraNode,
    IntraGroup,
    InterGroup,
}

impl LinkClass {
    pub const ALL: [LinkClass; 3] = [LinkClass::IntraNode, LinkClass::IntraGroup, LinkClass::InterGroup];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Class of the heaviest link a transfer between `a` and `b` traverses.
    pub fn between(a: &Placement, b: &Placement) -> LinkClass {
        if a.node == b.node {
            LinkClass::IntraNode
        } else if a.group == b.group {
            LinkClass::IntraGroup
        } else {
            LinkClass::InterGroup
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub label: String,
    pub intra_node_bytes: u64,
    /// Inter-node traffic that stays within a group.
    pub local_bytes: u64,
    /// Inter-group traffic.
    pub global_bytes: u64,
    /// `group_matrix[src][dst]`: bytes sent from group `src` to group `dst`.
    pub group_matrix: Vec<Vec<u64>>,
}

impl TrafficReport {
    pub fn total(&self) -> u64 {
        self.intra_node_bytes + self.local_bytes + self.global_bytes
    }
}

/// Classifies every send of `s`, counting each transfer once by the heaviest
/// link class it crosses.
pub fn trace(s: &Schedule, alloc: &Allocation, topo: &Topology) -> Result<TrafficReport> {
    if alloc.len() < s.p {
        return Err(Error::usage(format!("allocation covers {} of {} ranks", alloc.len(), s.p)));
    }
    alloc.check(topo)?;
    let mut report = TrafficReport {
        label: s.algorithm.to_string(),
        intra_node_bytes: 0,
        local_bytes: 0,
        global_bytes: 0,
        group_matrix: vec![vec![0; topo.groups]; topo.groups],
    };
    for (rank, prog) in s.ranks.iter().enumerate() {
        for (_, action) in prog.actions() {
            if let Action::Send { peer, bytes, .. } = action {
                let (from, to) = (&alloc.ranks[rank], &alloc.ranks[*peer]);
                let bytes = *bytes as u64;
                match LinkClass::between(from, to) {
                    LinkClass::IntraNode => report.intra_node_bytes += bytes,
                    LinkClass::IntraGroup => report.local_bytes += bytes,
                    LinkClass::InterGroup => {
                        report.global_bytes += bytes;
                        report.group_matrix[from.group][to.group] += bytes;
                    }
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub node: usize,
    pub ranks: Vec<usize>,
}

/// Rows are groups, cells are that group's nodes with the ranks they host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMap {
    pub rows: Vec<Vec<Cell>>,
}

impl CellMap {
    pub fn group_ranks(&self, group: usize) -> Vec<usize> {
        self.rows
            .get(group)
            .map(|row| row.iter().flat_map(|c| c.ranks.iter().copied()).collect())
            .unwrap_or_default()
    }

    /// Plain-text grid, one line per group: `g0: [0 1] [2] []`.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (g, row) in self.rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .map(|c| format!("[{}]", c.ranks.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")))
                .collect();
            let _ = writeln!(out, "g{g}: {}", cells.join(" "));
        }
        out
    }
}

pub fn rank_cell_map(alloc: &Allocation, topo: &Topology) -> CellMap {
    let mut rows: Vec<Vec<Cell>> = (0..topo.groups)
        .map(|g| {
            (0..topo.nodes_per_group)
                .map(|i| Cell {
                    node: g * topo.nodes_per_group + i,
                    ranks: Vec::new(),
                })
                .collect()
        })
        .collect();
    for (rank, pl) in alloc.ranks.iter().enumerate() {
        if let Some(cell) = rows
            .get_mut(pl.group)
            .and_then(|row| row.get_mut(pl.node % topo.nodes_per_group))
        {
            cell.ranks.push(rank);
        }
    }
    CellMap { rows }
}
