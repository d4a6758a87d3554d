//! Post-processing of result trees: tidy records, gain matrices, phase
//! breakdowns, tuning tables and plot artifacts.
//!
//! Every statistic here is a median. An *iteration time* is the slowest
//! rank's time in that iteration; Full records are reduced to it, other
//! modes already store it (Summary contributes its median, flagged).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::algorithms::{build_schedule, AlgorithmId};
use crate::error::{Error, Result};
use crate::model::{CollectiveKind, PhaseTag};
use crate::orchestrator::results::{parse_results, stats, ResultRow};
use crate::orchestrator::runner::read_index;
use crate::orchestrator::GranularityMode;

pub mod render;

pub use render::{render, render_strings, Artifact, PhaseBar, PlotMeta, Series};

/// One timing value with everything needed to place it.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub system: String,
    pub timestamp: String,
    pub test_id: String,
    pub backend: String,
    pub variant: String,
    pub collective: CollectiveKind,
    pub algorithm: String,
    pub ranks: usize,
    pub msg_bytes: u64,
    /// Absent for Summary rows.
    pub iteration: Option<usize>,
    /// Present for Full rows only.
    pub rank: Option<usize>,
    pub time_ns: f64,
    /// Full rows only, indexed by [`PhaseTag::index`].
    pub phase_ns: Option<[f64; 5]>,
    pub mode: GranularityMode,
}

impl Record {
    /// Summary rows stand for a whole run rather than one iteration.
    pub fn is_aggregate(&self) -> bool {
        self.mode == GranularityMode::Summary
    }
}

/// Where a result file came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Origin {
    pub system: String,
    pub timestamp: String,
    pub test_id: String,
    pub backend: String,
}

/// Turns a result file into records. Statistics and Minimal rows contribute
/// their per-iteration maximum, Summary rows their median.
pub fn records_from_text(text: &str, origin: &Origin) -> Result<(Vec<Record>, usize)> {
    let parsed = parse_results(text)?;
    let records = parsed
        .rows
        .into_iter()
        .map(|(key, row)| {
            let (iteration, rank, time_ns, phase_ns) = match row {
                ResultRow::Full {
                    iteration,
                    rank,
                    total_ns,
                    phase_ns,
                } => (Some(iteration), Some(rank), total_ns, Some(phase_ns)),
                ResultRow::Statistics { iteration, max_ns, .. } | ResultRow::Minimal { iteration, max_ns } => {
                    (Some(iteration), None, max_ns, None)
                }
                ResultRow::Summary { median_ns, .. } => (None, None, median_ns, None),
            };
            Record {
                system: origin.system.clone(),
                timestamp: origin.timestamp.clone(),
                test_id: origin.test_id.clone(),
                backend: origin.backend.clone(),
                variant: key.variant,
                collective: key.collective,
                algorithm: key.algorithm,
                ranks: key.ranks,
                msg_bytes: key.msg_bytes,
                iteration,
                rank,
                time_ns,
                phase_ns,
                mode: parsed.mode,
            }
        })
        .collect();
    Ok((records, parsed.skipped))
}

/// Which index rows to load. Empty fields match everything.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub test_id: Option<String>,
    pub timestamp: Option<String>,
    pub backend: Option<String>,
    pub variant: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Aggregated {
    pub records: Vec<Record>,
    /// Result rows that failed to parse.
    pub skipped_rows: usize,
    /// Selected result files or run directories that could not be read.
    pub unreadable: Vec<PathBuf>,
}

/// Loads every successful run the index lists and `sel` admits.
pub fn aggregate(index: &Path, sel: &Selection) -> Result<Aggregated> {
    let (rows, bad_index_rows) = read_index(index)?;
    let base = index.parent().unwrap_or(Path::new("."));
    let mut out = Aggregated {
        skipped_rows: bad_index_rows,
        ..Default::default()
    };
    let admits = |want: &Option<String>, have: &str| want.as_deref().is_none_or(|w| w == have);
    for row in rows {
        if row.status != "ok"
            || !admits(&sel.test_id, &row.test_id)
            || !admits(&sel.timestamp, &row.timestamp)
            || !admits(&sel.backend, &row.backend)
            || !admits(&sel.variant, &row.variants)
        {
            continue;
        }
        let dir = base.join(&row.path);
        let Ok(entries) = fs::read_dir(&dir) else {
            out.unreadable.push(dir);
            continue;
        };
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv") && !p.ends_with("alloc.csv"))
            .collect();
        files.sort();
        let origin = Origin {
            system: row.system.clone(),
            timestamp: row.timestamp.clone(),
            test_id: row.test_id.clone(),
            backend: row.backend.clone(),
        };
        for f in files {
            match fs::read_to_string(&f).map_err(|e| Error::io(&f, e)).and_then(|t| records_from_text(&t, &origin)) {
                Ok((recs, skipped)) => {
                    out.records.extend(recs);
                    out.skipped_rows += skipped;
                }
                Err(_) => out.unreadable.push(f),
            }
        }
    }
    Ok(out)
}

/// A `(ranks, msg_bytes)` cell.
pub type Cell = (usize, u64);

/// Iteration times per algorithm per cell.
fn iteration_times(records: &[Record]) -> BTreeMap<Cell, BTreeMap<String, Vec<f64>>> {
    // Reduce Full rows to the slowest rank of each iteration of each series.
    type Series<'a> = (&'a str, &'a str, &'a str, &'a str, &'a str, usize, u64, Option<usize>);
    let mut slowest: BTreeMap<Series, f64> = BTreeMap::new();
    let mut out: BTreeMap<Cell, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if r.rank.is_some() {
            let k = (
                r.system.as_str(),
                r.timestamp.as_str(),
                r.backend.as_str(),
                r.variant.as_str(),
                r.algorithm.as_str(),
                r.ranks,
                r.msg_bytes,
                r.iteration,
            );
            let e = slowest.entry(k).or_insert(f64::NEG_INFINITY);
            *e = e.max(r.time_ns);
        } else {
            out.entry((r.ranks, r.msg_bytes))
                .or_default()
                .entry(r.algorithm.clone())
                .or_default()
                .push(r.time_ns);
        }
    }
    for ((_, _, _, _, alg, p, n, _), t) in slowest {
        out.entry((p, n)).or_default().entry(alg.to_string()).or_default().push(t);
    }
    out
}

/// Median iteration time per algorithm per cell.
pub fn cell_medians(records: &[Record]) -> BTreeMap<Cell, BTreeMap<String, f64>> {
    iteration_times(records)
        .into_iter()
        .map(|(cell, algs)| (cell, algs.into_iter().map(|(a, v)| (a, stats::median(&v))).collect()))
        .collect()
}

/// Median iteration time against size, one series per algorithm, at `p`
/// ranks.
pub fn median_series(records: &[Record], p: usize) -> Vec<Series> {
    let mut by_alg: BTreeMap<String, Vec<(u64, f64)>> = BTreeMap::new();
    for ((ranks, bytes), algs) in cell_medians(records) {
        if ranks == p {
            for (alg, t) in algs {
                by_alg.entry(alg).or_default().push((bytes, t));
            }
        }
    }
    by_alg.into_iter().map(|(label, points)| Series { label, points }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainCell {
    /// Median of the best other algorithm over the reference's median.
    pub ratio: f64,
    /// The algorithm the reference is compared against.
    pub competitor: String,
}

/// Reference-vs-best-alternative ratios. Below 1 a faster alternative
/// exists; above 1 the reference wins by that factor over the runner-up.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix {
    pub reference: AlgorithmId,
    pub ranks: Vec<usize>,
    pub sizes: Vec<u64>,
    /// `cells[i][j]` for `ranks[i]`, `sizes[j]`; `None` when the cell lacks
    /// the reference or any alternative.
    pub cells: Vec<Vec<Option<GainCell>>>,
}

impl GainMatrix {
    pub fn get(&self, p: usize, bytes: u64) -> Option<&GainCell> {
        let i = self.ranks.iter().position(|&x| x == p)?;
        let j = self.sizes.iter().position(|&x| x == bytes)?;
        self.cells[i][j].as_ref()
    }

    pub fn is_all_missing(&self) -> bool {
        self.cells.iter().flatten().all(Option::is_none)
    }
}

/// Builds the gain matrix over records of `reference`'s collective. Pass
/// records of a single backend and variant.
pub fn gain_matrix(records: &[Record], reference: AlgorithmId) -> GainMatrix {
    let own: Vec<Record> = records
        .iter()
        .filter(|r| r.collective == reference.collective())
        .cloned()
        .collect();
    let medians = cell_medians(&own);
    let ranks: Vec<usize> = medians.keys().map(|c| c.0).collect::<BTreeSet<_>>().into_iter().collect();
    let sizes: Vec<u64> = medians.keys().map(|c| c.1).collect::<BTreeSet<_>>().into_iter().collect();
    let cells = ranks
        .iter()
        .map(|&p| {
            sizes
                .iter()
                .map(|&n| {
                    let algs = medians.get(&(p, n))?;
                    let reference_t = *algs.get(reference.name())?;
                    let (competitor, best) = algs
                        .iter()
                        .filter(|(a, _)| a.as_str() != reference.name())
                        .min_by(|a, b| a.1.total_cmp(b.1).then_with(|| a.0.cmp(b.0)))?;
                    let ratio = if reference_t == *best { 1.0 } else { best / reference_t };
                    Some(GainCell {
                        ratio,
                        competitor: competitor.clone(),
                    })
                })
                .collect()
        })
        .collect();
    GainMatrix {
        reference,
        ranks,
        sizes,
        cells,
    }
}

/// The four phases a breakdown attributes time to.
pub const BREAKDOWN_PHASES: [PhaseTag; 4] =
    [PhaseTag::Alloc, PhaseTag::Copy, PhaseTag::Reduction, PhaseTag::Communication];

#[derive(Debug, Clone, PartialEq)]
pub struct Breakdown {
    pub algorithm: String,
    pub ranks: usize,
    pub msg_bytes: u64,
    /// Total of the median record.
    pub total_ns: f64,
    /// Share of `total_ns` per phase; the remainder is unattributed.
    pub fractions: BTreeMap<PhaseTag, f64>,
}

impl Breakdown {
    pub fn fraction(&self, ph: PhaseTag) -> f64 {
        self.fractions.get(&ph).copied().unwrap_or(0.0)
    }
}

/// Phase shares of the median-total record (lower median for even counts)
/// of every (algorithm, ranks, size). Needs Full records.
pub fn phase_breakdown(records: &[Record]) -> Result<Vec<Breakdown>> {
    let mut groups: BTreeMap<(String, usize, u64), Vec<(f64, [f64; 5])>> = BTreeMap::new();
    for r in records {
        let phases = r.phase_ns.ok_or_else(|| {
            Error::usage(format!(
                "phase breakdown needs phase columns; {} {} p={} n={} is {}-granularity",
                r.collective, r.algorithm, r.ranks, r.msg_bytes, r.mode
            ))
        })?;
        groups
            .entry((r.algorithm.clone(), r.ranks, r.msg_bytes))
            .or_default()
            .push((r.time_ns, phases));
    }
    Ok(groups
        .into_iter()
        .map(|((algorithm, ranks, msg_bytes), mut v)| {
            v.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (total_ns, phases) = v[(v.len() - 1) / 2];
            let fractions = BREAKDOWN_PHASES
                .iter()
                .map(|&ph| {
                    let f = if total_ns > 0.0 { phases[ph.index()] / total_ns } else { 0.0 };
                    (ph, f)
                })
                .collect();
            Breakdown {
                algorithm,
                ranks,
                msg_bytes,
                total_ns,
                fractions,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuningRule {
    pub collective: CollectiveKind,
    pub ranks_min: usize,
    pub ranks_max: usize,
    pub bytes_min: u64,
    pub bytes_max: u64,
    pub algorithm: String,
}

/// Algorithm choice per (collective, rank interval, size interval).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TuningTable {
    pub rules: Vec<TuningRule>,
}

pub const TUNING_HEADER: &str = "# collective ranks_min ranks_max bytes_min bytes_max algorithm";

impl TuningTable {
    pub fn to_text(&self) -> String {
        let mut s = String::from(TUNING_HEADER);
        s.push('\n');
        for r in &self.rules {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                r.collective, r.ranks_min, r.ranks_max, r.bytes_min, r.bytes_max, r.algorithm
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<TuningTable> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::usage(format!("tuning rule on line {}: `{line}`", i + 1));
            if f.len() != 6 {
                return Err(bad());
            }
            let collective: CollectiveKind = f[0].parse()?;
            let rule = TuningRule {
                collective,
                ranks_min: f[1].parse().map_err(|_| bad())?,
                ranks_max: f[2].parse().map_err(|_| bad())?,
                bytes_min: f[3].parse().map_err(|_| bad())?,
                bytes_max: f[4].parse().map_err(|_| bad())?,
                algorithm: AlgorithmId::parse(collective, f[5])?.name().to_string(),
            };
            if rule.ranks_min > rule.ranks_max || rule.bytes_min > rule.bytes_max {
                return Err(bad());
            }
            rules.push(rule);
        }
        Ok(TuningTable { rules })
    }

    /// The rule covering `(p, bytes)`.
    pub fn lookup(&self, collective: CollectiveKind, p: usize, bytes: u64) -> Option<&str> {
        self.rules
            .iter()
            .find(|r| {
                r.collective == collective
                    && (r.ranks_min..=r.ranks_max).contains(&p)
                    && (r.bytes_min..=r.bytes_max).contains(&bytes)
            })
            .map(|r| r.algorithm.as_str())
    }
}

fn step_count(collective: CollectiveKind, alg: &str, p: usize) -> usize {
    AlgorithmId::parse(collective, alg)
        .and_then(|a| build_schedule(a, p, p, 1))
        .map(|s| s.steps())
        .unwrap_or(usize::MAX)
}

/// Picks the algorithm with the lowest median per measured cell, breaking
/// ties by fewer steps and then by name. A rule's intervals run from its
/// measured point up to just below the next one, so the rules partition
/// the measured domain.
pub fn emit_tuning_table(records: &[Record]) -> TuningTable {
    let kinds: BTreeSet<CollectiveKind> = records.iter().map(|r| r.collective).collect();
    let mut rules = Vec::new();
    for kind in kinds {
        let own: Vec<Record> = records.iter().filter(|r| r.collective == kind).cloned().collect();
        let medians = cell_medians(&own);
        let ranks: Vec<usize> = medians.keys().map(|c| c.0).collect::<BTreeSet<_>>().into_iter().collect();
        for (pi, &p) in ranks.iter().enumerate() {
            let ranks_max = ranks.get(pi + 1).map_or(p, |next| next - 1);
            let row: Vec<(u64, String)> = medians
                .iter()
                .filter(|(c, _)| c.0 == p)
                .map(|(c, algs)| {
                    let best = algs
                        .iter()
                        .min_by(|a, b| {
                            a.1.total_cmp(b.1)
                                .then_with(|| step_count(kind, a.0, p).cmp(&step_count(kind, b.0, p)))
                                .then_with(|| a.0.cmp(b.0))
                        })
                        .map(|(a, _)| a.clone())
                        .expect("cells are non-empty");
                    (c.1, best)
                })
                .collect();
            let mut i = 0;
            while i < row.len() {
                let mut j = i;
                while j + 1 < row.len() && row[j + 1].1 == row[i].1 {
                    j += 1;
                }
                rules.push(TuningRule {
                    collective: kind,
                    ranks_min: p,
                    ranks_max,
                    bytes_min: row[i].0,
                    bytes_max: row.get(j + 1).map_or(row[j].0, |next| next.0 - 1),
                    algorithm: row[i].1.clone(),
                });
                i = j + 1;
            }
        }
    }
    TuningTable { rules }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(alg: &str, p: usize, n: u64, it: usize, t: f64) -> Record {
        Record {
            system: "s".into(),
            timestamp: "t".into(),
            test_id: "x".into(),
            backend: "netsim".into(),
            variant: "default".into(),
            collective: CollectiveKind::Allreduce,
            algorithm: alg.into(),
            ranks: p,
            msg_bytes: n,
            iteration: Some(it),
            rank: None,
            time_ns: t,
            phase_ns: None,
            mode: GranularityMode::Minimal,
        }
    }

    fn ring() -> AlgorithmId {
        AlgorithmId::AllreduceRing
    }

    #[test]
    fn gain_ratio_definitions() {
        let recs = vec![
            rec("ring", 4, 1024, 0, 2.0),
            rec("rabenseifner", 4, 1024, 0, 1.0),
            rec("recursive_doubling", 4, 1024, 0, 3.0),
            rec("ring", 4, 2048, 0, 2.0),
            rec("rabenseifner", 4, 2048, 0, 3.0),
            rec("ring", 8, 1024, 0, 1.0),
            rec("rabenseifner", 8, 1024, 0, 1.0),
        ];
        let g = gain_matrix(&recs, ring());
        assert_eq!(g.get(4, 1024).unwrap().ratio, 0.5);
        assert_eq!(g.get(4, 1024).unwrap().competitor, "rabenseifner");
        assert_eq!(g.get(4, 2048).unwrap().ratio, 1.5);
        assert_eq!(g.get(8, 1024).unwrap().ratio, 1.0);
        assert!(g.get(8, 2048).is_none());
    }

    #[test]
    fn reference_only_is_all_missing() {
        let recs = vec![rec("ring", 4, 1024, 0, 2.0), rec("ring", 8, 2048, 0, 1.0)];
        assert!(gain_matrix(&recs, ring()).is_all_missing());
    }

    #[test]
    fn full_rows_reduce_to_the_slowest_rank() {
        let mut recs = Vec::new();
        for (it, times) in [[1.0, 5.0], [2.0, 3.0], [9.0, 1.0]].iter().enumerate() {
            for (r, &t) in times.iter().enumerate() {
                let mut x = rec("ring", 2, 64, it, t);
                x.rank = Some(r);
                x.mode = GranularityMode::Full;
                recs.push(x);
            }
        }
        assert_eq!(cell_medians(&recs)[&(2, 64)]["ring"], 5.0);
    }

    #[test]
    fn equal_phases_give_equal_fractions() {
        let mut r = rec("ring", 4, 64, 0, 4.0);
        r.phase_ns = Some([1.0, 1.0, 1.0, 1.0, 0.0]);
        let b = phase_breakdown(&[r]).unwrap();
        for ph in BREAKDOWN_PHASES {
            assert_eq!(b[0].fraction(ph), 0.25);
        }
    }

    #[test]
    fn breakdown_without_phase_columns_is_an_error() {
        assert!(phase_breakdown(&[rec("ring", 4, 64, 0, 1.0)]).is_err());
    }

    #[test]
    fn tuning_single_algorithm_and_ties() {
        let recs = vec![rec("ring", 4, 1024, 0, 1.0), rec("ring", 4, 2048, 0, 1.0)];
        let t = emit_tuning_table(&recs);
        assert_eq!(t.rules.len(), 1);
        assert_eq!(t.rules[0].algorithm, "ring");
        assert_eq!((t.rules[0].bytes_min, t.rules[0].bytes_max), (1024, 2048));

        // Equal medians: recursive doubling has fewer steps than ring.
        let tie = vec![rec("ring", 4, 1024, 0, 1.0), rec("recursive_doubling", 4, 1024, 0, 1.0)];
        assert_eq!(emit_tuning_table(&tie).rules[0].algorithm, "recursive_doubling");
    }

    #[test]
    fn tuning_rules_partition_and_round_trip() {
        let mut recs = Vec::new();
        for (p, n, r_t, d_t) in [(4, 1024, 2.0, 1.0), (4, 2048, 2.0, 1.0), (4, 4096, 1.0, 2.0), (8, 1024, 1.0, 2.0)] {
            recs.push(rec("ring", p, n, 0, r_t));
            recs.push(rec("recursive_doubling", p, n, 0, d_t));
        }
        let t = emit_tuning_table(&recs);
        assert_eq!(t.rules.len(), 3);
        assert_eq!(t.lookup(CollectiveKind::Allreduce, 4, 3000), Some("recursive_doubling"));
        assert_eq!(t.lookup(CollectiveKind::Allreduce, 4, 4096), Some("ring"));
        assert_eq!(t.lookup(CollectiveKind::Allreduce, 7, 2048), Some("recursive_doubling"));
        assert_eq!(t.lookup(CollectiveKind::Allreduce, 8, 1024), Some("ring"));
        assert_eq!(TuningTable::parse(&t.to_text()).unwrap(), t);
        assert!(TuningTable::parse("allreduce 4 8 1 2").is_err());
    }

    #[test]
    fn tuning_is_invariant_under_time_scaling() {
        let mut recs = Vec::new();
        for (i, n) in [1024u64, 2048, 4096].into_iter().enumerate() {
            recs.push(rec("ring", 4, n, 0, 3.0 - i as f64));
            recs.push(rec("rabenseifner", 4, n, 0, 1.7));
        }
        let scaled: Vec<Record> = recs.iter().cloned().map(|mut r| { r.time_ns *= 1e3; r }).collect();
        assert_eq!(emit_tuning_table(&recs), emit_tuning_table(&scaled));
    }
}
