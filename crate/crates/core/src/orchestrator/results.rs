use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fabric::Measurement;
use crate::model::{CollectiveKind, PhaseTag};

use super::config::GranularityMode;

pub const FULL_HEADER: &str = "collective,algorithm,ranks,msg_bytes,variant,iteration,rank,total_ns,alloc_ns,copy_ns,reduction_ns,communication_ns,sync_ns";
pub const STATISTICS_HEADER: &str = "collective,algorithm,ranks,msg_bytes,variant,iteration,min_ns,max_ns,mean_ns,median_ns";
pub const MINIMAL_HEADER: &str = "collective,algorithm,ranks,msg_bytes,variant,iteration,max_ns";
pub const SUMMARY_HEADER: &str = "collective,algorithm,ranks,msg_bytes,variant,min_ns,max_ns,mean_ns,median_ns,stddev_ns";

pub fn header(mode: GranularityMode) -> &'static str {
    match mode {
        GranularityMode::Full => FULL_HEADER,
        GranularityMode::Statistics => STATISTICS_HEADER,
        GranularityMode::Minimal => MINIMAL_HEADER,
        GranularityMode::Summary => SUMMARY_HEADER,
    }
}

/// Order statistics used by result files and analysis alike.
pub mod stats {
    pub fn min(v: &[f64]) -> f64 {
        v.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(v: &[f64]) -> f64 {
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Summed in slice order.
    pub fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    /// Mean of the two middle values for even lengths.
    pub fn median(v: &[f64]) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        }
    }

    /// Population standard deviation.
    pub fn stddev(v: &[f64]) -> f64 {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    }
}

/// Columns shared by every row of a result file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SeriesKey {
    pub collective: CollectiveKind,
    pub algorithm: String,
    pub ranks: usize,
    pub msg_bytes: u64,
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ResultRow {
    Full {
        iteration: usize,
        rank: usize,
        total_ns: f64,
        /// Indexed by [`PhaseTag::index`].
        phase_ns: [f64; 5],
    },
    Statistics {
        iteration: usize,
        min_ns: f64,
        max_ns: f64,
        mean_ns: f64,
        median_ns: f64,
    },
    Minimal {
        iteration: usize,
        max_ns: f64,
    },
    Summary {
        min_ns: f64,
        max_ns: f64,
        mean_ns: f64,
        median_ns: f64,
        stddev_ns: f64,
    },
}

/// Renders measurements of one series in `mode`. Measurements are ordered by
/// iteration, then rank, before any aggregation.
pub fn render_results(key: &SeriesKey, measurements: &[Measurement], mode: GranularityMode) -> Result<String> {
    if measurements.is_empty() {
        return Err(Error::usage("no measurements to write"));
    }
    let mut ms: Vec<&Measurement> = measurements.iter().collect();
    ms.sort_by_key(|m| (m.iteration, m.rank));
    let mut by_iter: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for m in &ms {
        by_iter.entry(m.iteration).or_default().push(m.total_ns);
    }
    let prefix = format!(
        "{},{},{},{},{}",
        key.collective, key.algorithm, key.ranks, key.msg_bytes, key.variant
    );

    let mut out = String::from(header(mode));
    out.push('\n');
    let mut line = |fields: Vec<String>| {
        out.push_str(&prefix);
        for f in fields {
            out.push(',');
            out.push_str(&f);
        }
        out.push('\n');
    };
    match mode {
        GranularityMode::Full => {
            for m in &ms {
                let mut f = vec![m.iteration.to_string(), m.rank.to_string(), m.total_ns.to_string()];
                f.extend(PhaseTag::ALL.iter().map(|&ph| m.phase(ph).to_string()));
                line(f);
            }
        }
        GranularityMode::Statistics => {
            for (it, v) in &by_iter {
                line(vec![
                    it.to_string(),
                    stats::min(v).to_string(),
                    stats::max(v).to_string(),
                    stats::mean(v).to_string(),
                    stats::median(v).to_string(),
                ]);
            }
        }
        GranularityMode::Minimal => {
            for (it, v) in &by_iter {
                line(vec![it.to_string(), stats::max(v).to_string()]);
            }
        }
        GranularityMode::Summary => {
            let all: Vec<f64> = ms.iter().map(|m| m.total_ns).collect();
            line(vec![
                stats::min(&all).to_string(),
                stats::max(&all).to_string(),
                stats::mean(&all).to_string(),
                stats::median(&all).to_string(),
                stats::stddev(&all).to_string(),
            ]);
        }
    }
    Ok(out)
}

pub fn write_results(key: &SeriesKey, measurements: &[Measurement], mode: GranularityMode, path: &Path) -> Result<()> {
    let text = render_results(key, measurements, mode)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResults {
    pub mode: GranularityMode,
    pub rows: Vec<(SeriesKey, ResultRow)>,
    /// Rows that did not parse.
    pub skipped: usize,
}

/// Parses a result file in any mode, skipping malformed rows. An unknown
/// header is an error.
pub fn parse_results(text: &str) -> Result<ParsedResults> {
    let mut lines = text.lines();
    let head = lines.next().unwrap_or_default().trim_end_matches('\r');
    let mode = GranularityMode::ALL
        .into_iter()
        .find(|&m| header(m) == head)
        .ok_or_else(|| Error::usage(format!("unrecognised result header `{head}`")))?;
    let mut rows = Vec::new();
    let mut skipped = 0;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    for rec in rdr.records().skip(1) {
        match rec.ok().and_then(|r| parse_row(mode, &r)) {
            Some(row) => rows.push(row),
            None => skipped += 1,
        }
    }
    Ok(ParsedResults { mode, rows, skipped })
}

fn parse_row(mode: GranularityMode, r: &csv::StringRecord) -> Option<(SeriesKey, ResultRow)> {
    if r.len() != header(mode).split(',').count() {
        return None;
    }
    let key = SeriesKey {
        collective: r[0].parse().ok()?,
        algorithm: r[1].to_string(),
        ranks: r[2].parse().ok()?,
        msg_bytes: r[3].parse().ok()?,
        variant: r[4].to_string(),
    };
    if key.algorithm.is_empty() || key.variant.is_empty() {
        return None;
    }
    let f = |i: usize| -> Option<f64> { r[i].parse::<f64>().ok().filter(|x| x.is_finite()) };
    let u = |i: usize| -> Option<usize> { r[i].parse().ok() };
    let row = match mode {
        GranularityMode::Full => ResultRow::Full {
            iteration: u(5)?,
            rank: u(6)?,
            total_ns: f(7)?,
            phase_ns: [f(8)?, f(9)?, f(10)?, f(11)?, f(12)?],
        },
        GranularityMode::Statistics => ResultRow::Statistics {
            iteration: u(5)?,
            min_ns: f(6)?,
            max_ns: f(7)?,
            mean_ns: f(8)?,
            median_ns: f(9)?,
        },
        GranularityMode::Minimal => ResultRow::Minimal {
            iteration: u(5)?,
            max_ns: f(6)?,
        },
        GranularityMode::Summary => ResultRow::Summary {
            min_ns: f(5)?,
            max_ns: f(6)?,
            mean_ns: f(7)?,
            median_ns: f(8)?,
            stddev_ns: f(9)?,
        },
    };
    Some((key, row))
}

/// Rebuilds measurements from Full rows.
pub fn measurements_from_full(rows: &[(SeriesKey, ResultRow)]) -> Vec<Measurement> {
    rows.iter()
        .filter_map(|(_, row)| match row {
            ResultRow::Full {
                iteration,
                rank,
                total_ns,
                phase_ns,
            } => Some(Measurement {
                point: String::new(),
                iteration: *iteration,
                rank: *rank,
                total_ns: *total_ns,
                phase_ns: PhaseTag::ALL.iter().map(|&ph| (ph, phase_ns[ph.index()])).collect(),
                per_step_ns: None,
            }),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> SeriesKey {
        SeriesKey {
            collective: CollectiveKind::Allreduce,
            algorithm: "ring".into(),
            ranks: 4,
            msg_bytes: 1024,
            variant: "default".into(),
        }
    }

    fn sample() -> Vec<Measurement> {
        let mut v = Vec::new();
        for it in 0..5 {
            for r in 0..4 {
                v.push(Measurement {
                    point: String::new(),
                    iteration: it,
                    rank: r,
                    total_ns: 100.0 + (it * 7 + r * 13 % 5) as f64 + 0.25 * r as f64,
                    phase_ns: PhaseTag::ALL.iter().map(|&ph| (ph, ph.index() as f64 * 1.5)).collect(),
                    per_step_ns: None,
                });
            }
        }
        v
    }

    fn data_rows(text: &str) -> usize {
        text.lines().count() - 1
    }

    #[test]
    fn row_counts_per_mode() {
        let ms = sample();
        let full = render_results(&key(), &ms, GranularityMode::Full).unwrap();
        assert_eq!(data_rows(&full), 20);
        assert!(full.starts_with(FULL_HEADER));
        let minimal = render_results(&key(), &ms, GranularityMode::Minimal).unwrap();
        assert_eq!(data_rows(&minimal), 5);
        let stats_ = render_results(&key(), &ms, GranularityMode::Statistics).unwrap();
        assert_eq!(data_rows(&stats_), 5);
        let summary = render_results(&key(), &ms, GranularityMode::Summary).unwrap();
        assert_eq!(data_rows(&summary), 1);
    }

    #[test]
    fn minimal_rows_are_per_iteration_maxima() {
        let ms = sample();
        let parsed = parse_results(&render_results(&key(), &ms, GranularityMode::Minimal).unwrap()).unwrap();
        for (_, row) in &parsed.rows {
            let ResultRow::Minimal { iteration, max_ns } = row else { panic!() };
            let want = ms.iter().filter(|m| m.iteration == *iteration).map(|m| m.total_ns).fold(0.0, f64::max);
            assert_eq!(*max_ns, want);
        }
    }

    #[test]
    fn summary_max_equals_global_max() {
        let ms = sample();
        let parsed = parse_results(&render_results(&key(), &ms, GranularityMode::Summary).unwrap()).unwrap();
        let ResultRow::Summary { max_ns, .. } = parsed.rows[0].1 else { panic!() };
        assert_eq!(max_ns, ms.iter().map(|m| m.total_ns).fold(0.0, f64::max));
    }

    #[test]
    fn every_mode_recomputes_from_full() {
        let ms = sample();
        let full = render_results(&key(), &ms, GranularityMode::Full).unwrap();
        let parsed = parse_results(&full).unwrap();
        let back = measurements_from_full(&parsed.rows);
        for mode in GranularityMode::ALL {
            assert_eq!(
                render_results(&key(), &back, mode).unwrap(),
                render_results(&key(), &ms, mode).unwrap()
            );
        }
    }

    #[test]
    fn corrupt_rows_are_counted_and_skipped() {
        let mut text = render_results(&key(), &sample(), GranularityMode::Minimal).unwrap();
        text.push_str("allreduce,ring,4,1024,default,9\n");
        text.push_str("allreduce,ring,4,1024,default,9,notanumber\n");
        let parsed = parse_results(&text).unwrap();
        assert_eq!((parsed.rows.len(), parsed.skipped), (5, 2));
        assert!(parse_results("a,b,c\n").is_err());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(render_results(&key(), &[], GranularityMode::Full).is_err());
    }

    #[test]
    fn order_statistics() {
        assert_eq!(stats::median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(stats::median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(stats::stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]), 2.0);
    }
}
