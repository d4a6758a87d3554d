//! Dependency-free SVG plots. Each plot comes with a CSV sidecar holding
//! the plotted numbers; every number shown in a text label is written to
//! the sidecar with the same formatting.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tracer::TrafficReport;

use super::{Breakdown, GainMatrix, BREAKDOWN_PHASES};

const PALETTE: [&str; 7] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1"];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlotMeta {
    pub test_id: String,
    pub system: String,
    pub variant: String,
}

/// Time per message size for one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(msg_bytes, time_ns)`, ascending in size.
    pub points: Vec<(u64, f64)>,
}

/// Phase shares of one bar.
pub type PhaseBar = Breakdown;

#[derive(Debug, Clone, Copy)]
pub enum Artifact<'a> {
    Heatmap(&'a GainMatrix),
    /// Times normalized to the fastest series at each size.
    Bars(&'a [Series]),
    Lines(&'a [Series]),
    Breakdown(&'a [PhaseBar]),
    /// Local and global bytes per traced schedule.
    TracerPanel(&'a [TrafficReport]),
}

impl Artifact<'_> {
    pub fn kind(&self) -> &'static str {
        match self {
            Artifact::Heatmap(_) => "heatmap",
            Artifact::Bars(_) => "bars",
            Artifact::Lines(_) => "lines",
            Artifact::Breakdown(_) => "breakdown",
            Artifact::TracerPanel(_) => "tracer",
        }
    }
}

/// Writes `<test_id>_<kind>.svg` and `.csv` into `dir`. Nothing is written
/// when the data is empty or malformed.
pub fn render(artifact: Artifact<'_>, meta: &PlotMeta, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let (svg, csv) = render_strings(artifact, meta)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stem = format!("{}_{}", meta.test_id, artifact.kind());
    let svg_path = dir.join(format!("{stem}.svg"));
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok((svg_path, csv_path))
}

pub fn render_strings(artifact: Artifact<'_>, meta: &PlotMeta) -> Result<(String, String)> {
    match artifact {
        Artifact::Heatmap(g) => heatmap(g, meta),
        Artifact::Bars(s) => bars(s, meta),
        Artifact::Lines(s) => lines(s, meta),
        Artifact::Breakdown(b) => breakdown(b, meta),
        Artifact::TracerPanel(t) => tracer_panel(t, meta),
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg {
            body: String::new(),
            width,
            height,
        }
    }

    fn rect(&mut self, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect class="{class}" x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.body,
            r##"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="#333"/>"##
        );
    }

    fn finish(self, kind: &str, meta: &PlotMeta) -> String {
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
                "\n<title>{kind}: {t}</title>\n",
                "<desc>test_id={t}; system={s}; variant={v}</desc>\n",
                r#"<metadata><plot kind="{kind}" test_id="{t}" system="{s}" variant="{v}"/></metadata>"#,
                "\n{body}</svg>\n"
            ),
            w = self.width,
            h = self.height,
            kind = kind,
            t = esc(&meta.test_id),
            s = esc(&meta.system),
            v = esc(&meta.variant),
            body = self.body,
        )
    }
}

fn ratio_label(r: f64) -> String {
    format!("{r:.3}")
}

fn heatmap(g: &GainMatrix, meta: &PlotMeta) -> Result<(String, String)> {
    if g.ranks.is_empty() || g.sizes.is_empty() {
        return Err(Error::usage("heatmap needs at least one cell"));
    }
    if g.cells.len() != g.ranks.len() || g.cells.iter().any(|row| row.len() != g.sizes.len()) {
        return Err(Error::usage("heatmap cells do not match its axes"));
    }
    let (cw, ch, left, top) = (80.0, 36.0, 70.0, 20.0);
    let mut svg = Svg::new(left + cw * g.sizes.len() as f64 + 10.0, top + ch * g.ranks.len() as f64 + 40.0);
    let mut csv = String::from("ranks,msg_bytes,ratio,competitor\n");
    for (i, &p) in g.ranks.iter().enumerate() {
        let y = top + ch * i as f64;
        svg.text(left - 6.0, y + ch / 2.0 + 4.0, "end", &p.to_string());
        for (j, &n) in g.sizes.iter().enumerate() {
            let x = left + cw * j as f64;
            match &g.cells[i][j] {
                Some(c) => {
                    // Red below 1 (an alternative is faster), blue above.
                    let t = (c.ratio.ln().abs() / 2f64.ln()).min(1.0);
                    let shade = (255.0 * (1.0 - 0.7 * t)) as u8;
                    let fill = if c.ratio < 1.0 {
                        format!("rgb(255,{shade},{shade})")
                    } else {
                        format!("rgb({shade},{shade},255)")
                    };
                    svg.rect("cell", x, y, cw, ch, &fill);
                    let label = ratio_label(c.ratio);
                    svg.text(x + cw / 2.0, y + ch / 2.0 + 4.0, "middle", &label);
                    let _ = writeln!(csv, "{p},{n},{label},{}", c.competitor);
                }
                None => {
                    svg.rect("cell missing", x, y, cw, ch, "#dddddd");
                    let _ = writeln!(csv, "{p},{n},,");
                }
            }
        }
    }
    let base = top + ch * g.ranks.len() as f64;
    for (j, &n) in g.sizes.iter().enumerate() {
        svg.text(left + cw * (j as f64 + 0.5), base + 16.0, "middle", &n.to_string());
    }
    svg.text(left + cw * g.sizes.len() as f64 / 2.0, base + 32.0, "middle", "message size [B]; rows: ranks");
    Ok((svg.finish("heatmap", meta), csv))
}

fn check_series(series: &[Series]) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::usage("nothing to plot"));
    }
    if series.iter().flat_map(|s| &s.points).any(|&(_, y)| !(y.is_finite() && y >= 0.0)) {
        return Err(Error::usage("plotted times must be finite and non-negative"));
    }
    Ok(())
}

fn bars(series: &[Series], meta: &PlotMeta) -> Result<(String, String)> {
    check_series(series)?;
    let xs: Vec<u64> = series[0].points.iter().map(|p| p.0).collect();
    if series.iter().any(|s| s.points.iter().map(|p| p.0).ne(xs.iter().copied())) {
        return Err(Error::usage("normalized bars need every series at the same sizes"));
    }
    let (bw, gap, left, top, plot_h) = (18.0, 16.0, 40.0, 20.0, 200.0);
    let group_w = bw * series.len() as f64 + gap;
    let mut svg = Svg::new(left + group_w * xs.len() as f64 + 140.0, top + plot_h + 60.0);
    let mut csv = String::from("msg_bytes,series,time_ns,normalized\n");
    let mut labels = Vec::new();
    let mut max_norm: f64 = 1.0;
    for (j, &x) in xs.iter().enumerate() {
        let best = series.iter().map(|s| s.points[j].1).fold(f64::INFINITY, f64::min);
        for s in series {
            let y = s.points[j].1;
            let norm = if best > 0.0 { y / best } else { 1.0 };
            max_norm = max_norm.max(norm);
            labels.push((j, norm));
            let _ = writeln!(csv, "{x},{},{y},{}", s.label, ratio_label(norm));
        }
    }
    let base = top + plot_h;
    for (k, &(j, norm)) in labels.iter().enumerate() {
        let si = k % series.len();
        let h = plot_h * norm / max_norm;
        let x = left + group_w * j as f64 + bw * si as f64;
        svg.rect("bar", x, base - h, bw - 2.0, h, PALETTE[si % PALETTE.len()]);
        svg.text(x + bw / 2.0, base - h - 3.0, "middle", &ratio_label(norm));
    }
    svg.line(left, base, left + group_w * xs.len() as f64, base);
    for (j, &x) in xs.iter().enumerate() {
        svg.text(left + group_w * j as f64 + group_w / 2.0 - gap / 2.0, base + 16.0, "middle", &x.to_string());
    }
    legend(&mut svg, series.iter().map(|s| s.label.as_str()), left + group_w * xs.len() as f64 + 10.0, top);
    svg.text(left, base + 36.0, "start", "time relative to the fastest algorithm, per message size [B]");
    Ok((svg.finish("bars", meta), csv))
}

fn legend<'a>(svg: &mut Svg, labels: impl Iterator<Item = &'a str>, x: f64, y: f64) {
    for (i, l) in labels.enumerate() {
        let yy = y + 16.0 * i as f64;
        svg.rect("legend", x, yy, 10.0, 10.0, PALETTE[i % PALETTE.len()]);
        svg.text(x + 14.0, yy + 9.0, "start", l);
    }
}

fn lines(series: &[Series], meta: &PlotMeta) -> Result<(String, String)> {
    check_series(series)?;
    let pts: Vec<(u64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if pts.iter().any(|&(x, y)| x == 0 || y <= 0.0) {
        return Err(Error::usage("log-scale lines need positive sizes and times"));
    }
    let xs: BTreeSet<u64> = pts.iter().map(|p| p.0).collect();
    let (lx, hx) = ((*xs.first().unwrap() as f64).log2(), (*xs.last().unwrap() as f64).log2());
    let ly = pts.iter().map(|p| p.1.log10()).fold(f64::INFINITY, f64::min);
    let hy = pts.iter().map(|p| p.1.log10()).fold(f64::NEG_INFINITY, f64::max);
    let (left, top, w, h) = (40.0, 20.0, 420.0, 220.0);
    let sx = |x: u64| left + if hx > lx { w * ((x as f64).log2() - lx) / (hx - lx) } else { w / 2.0 };
    let sy = |y: f64| top + h - if hy > ly { h * (y.log10() - ly) / (hy - ly) } else { h / 2.0 };
    let mut svg = Svg::new(left + w + 160.0, top + h + 60.0);
    let mut csv = String::from("series,msg_bytes,time_ns\n");
    for (i, s) in series.iter().enumerate() {
        let d: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg.body,
            r#"<polyline class="series" fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            PALETTE[i % PALETTE.len()],
            d.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(csv, "{},{x},{y}", s.label);
        }
    }
    svg.line(left, top + h, left + w, top + h);
    svg.line(left, top, left, top + h);
    for &x in &xs {
        svg.text(sx(x), top + h + 16.0, "middle", &x.to_string());
    }
    legend(&mut svg, series.iter().map(|s| s.label.as_str()), left + w + 16.0, top);
    svg.text(left + w / 2.0, top + h + 36.0, "middle", "message size [B], log scale; time, log scale");
    Ok((svg.finish("lines", meta), csv))
}

fn pct(f: f64) -> String {
    format!("{:.1}", f * 100.0)
}

fn breakdown(bars: &[PhaseBar], meta: &PlotMeta) -> Result<(String, String)> {
    if bars.is_empty() {
        return Err(Error::usage("nothing to plot"));
    }
    let (bw, gap, left, top, plot_h) = (40.0, 24.0, 40.0, 20.0, 220.0);
    let mut svg = Svg::new(left + (bw + gap) * bars.len() as f64 + 140.0, top + plot_h + 70.0);
    let mut csv = String::from("algorithm,ranks,msg_bytes,phase,fraction,percent\n");
    let base = top + plot_h;
    for (i, b) in bars.iter().enumerate() {
        let x = left + (bw + gap) * i as f64;
        let mut y = base;
        for (k, &ph) in BREAKDOWN_PHASES.iter().enumerate() {
            let f = b.fraction(ph);
            let _ = writeln!(csv, "{},{},{},{ph},{f},{}", b.algorithm, b.ranks, b.msg_bytes, pct(f));
            let h = plot_h * f.clamp(0.0, 1.0);
            y -= h;
            svg.rect("segment", x, y, bw, h, PALETTE[k]);
            if f >= 0.08 {
                svg.text(x + bw / 2.0, y + h / 2.0 + 4.0, "middle", &pct(f));
            }
        }
        svg.text(x + bw / 2.0, base + 14.0, "middle", &b.algorithm);
        svg.text(x + bw / 2.0, base + 28.0, "middle", &b.msg_bytes.to_string());
    }
    svg.line(left, base, left + (bw + gap) * bars.len() as f64, base);
    legend(
        &mut svg,
        BREAKDOWN_PHASES.iter().map(|p| p.name()),
        left + (bw + gap) * bars.len() as f64 + 10.0,
        top,
    );
    svg.text(left, base + 48.0, "start", "share of total time [%] by phase, per algorithm and size [B]");
    Ok((svg.finish("breakdown", meta), csv))
}

fn tracer_panel(reports: &[TrafficReport], meta: &PlotMeta) -> Result<(String, String)> {
    if reports.is_empty() {
        return Err(Error::usage("nothing to plot"));
    }
    let (bw, gap, left, top, plot_h) = (30.0, 30.0, 40.0, 20.0, 200.0);
    let max = reports.iter().map(|r| r.local_bytes.max(r.global_bytes)).max().unwrap_or(0).max(1) as f64;
    let mut svg = Svg::new(left + (2.0 * bw + gap) * reports.len() as f64 + 120.0, top + plot_h + 60.0);
    let mut csv = String::from("label,intra_node_bytes,local_bytes,global_bytes\n");
    let base = top + plot_h;
    for (i, r) in reports.iter().enumerate() {
        let x0 = left + (2.0 * bw + gap) * i as f64;
        for (k, v) in [r.local_bytes, r.global_bytes].into_iter().enumerate() {
            let h = plot_h * v as f64 / max;
            let x = x0 + bw * k as f64;
            svg.rect("bar", x, base - h, bw - 2.0, h, PALETTE[k]);
            svg.text(x + bw / 2.0, base - h - 3.0, "middle", &v.to_string());
        }
        svg.text(x0 + bw, base + 16.0, "middle", &r.label);
        let _ = writeln!(csv, "{},{},{},{}", r.label, r.intra_node_bytes, r.local_bytes, r.global_bytes);
    }
    svg.line(left, base, left + (2.0 * bw + gap) * reports.len() as f64, base);
    legend(&mut svg, ["local", "global"].into_iter(), left + (2.0 * bw + gap) * reports.len() as f64 + 10.0, top);
    svg.text(left, base + 36.0, "start", "bytes on intra-group and inter-group links");
    Ok((svg.finish("tracer", meta), csv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::AlgorithmId;
    use crate::analysis::GainCell;

    /// Numbers inside `<text>` elements.
    fn label_numbers(svg: &str) -> Vec<String> {
        let mut out = Vec::new();
        for chunk in svg.split("<text").skip(1) {
            let inner = chunk.split_once('>').unwrap().1.split_once("</text>").unwrap().0;
            let mut cur = String::new();
            for c in inner.chars().chain(std::iter::once(' ')) {
                if c.is_ascii_digit() || (c == '.' && !cur.is_empty()) {
                    cur.push(c);
                } else if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
        out
    }

    fn assert_sidecar_fidelity(svg: &str, csv: &str) {
        let fields: BTreeSet<&str> = csv.lines().skip(1).flat_map(|l| l.split(',')).collect();
        for n in label_numbers(svg) {
            assert!(fields.contains(n.as_str()), "{n} missing from sidecar");
        }
    }

    fn meta() -> PlotMeta {
        PlotMeta {
            test_id: "t1".into(),
            system: "desk".into(),
            variant: "default".into(),
        }
    }

    fn gm() -> GainMatrix {
        let c = |r| Some(GainCell { ratio: r, competitor: "rabenseifner".into() });
        GainMatrix {
            reference: AlgorithmId::AllreduceRing,
            ranks: vec![4, 8],
            sizes: vec![1024, 2048],
            cells: vec![vec![c(0.5), c(1.25)], vec![None, c(2.0)]],
        }
    }

    #[test]
    fn heatmap_has_one_cell_and_row_per_entry() {
        let (svg, csv) = render_strings(Artifact::Heatmap(&gm()), &meta()).unwrap();
        assert_eq!(svg.matches(r#"class="cell"#).count(), 4);
        assert_eq!(csv.lines().count() - 1, 4);
        assert!(svg.contains("test_id=t1; system=desk; variant=default"));
        assert_sidecar_fidelity(&svg, &csv);
    }

    #[test]
    fn every_kind_keeps_its_labels_in_the_sidecar() {
        let series = vec![
            Series { label: "ring".into(), points: vec![(1024, 12.5), (2048, 20.0)] },
            Series { label: "rabenseifner".into(), points: vec![(1024, 10.0), (2048, 25.0)] },
        ];
        let reports = vec![TrafficReport {
            label: "distance_doubling".into(),
            intra_node_bytes: 0,
            local_bytes: 6144,
            global_bytes: 1024,
            group_matrix: vec![],
        }];
        let bd = vec![Breakdown {
            algorithm: "ring".into(),
            ranks: 4,
            msg_bytes: 4096,
            total_ns: 10.0,
            fractions: BREAKDOWN_PHASES.iter().map(|&p| (p, 0.25)).collect(),
        }];
        for a in [
            Artifact::Bars(&series),
            Artifact::Lines(&series),
            Artifact::TracerPanel(&reports),
            Artifact::Breakdown(&bd),
        ] {
            let (svg, csv) = render_strings(a, &meta()).unwrap();
            assert!(svg.starts_with("<svg"));
            assert_sidecar_fidelity(&svg, &csv);
        }
    }

    #[test]
    fn empty_or_mismatched_data_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        assert!(render(Artifact::Lines(&[]), &meta(), dir.path()).is_err());
        assert!(render(Artifact::TracerPanel(&[]), &meta(), dir.path()).is_err());
        let ragged = vec![
            Series { label: "a".into(), points: vec![(1, 1.0)] },
            Series { label: "b".into(), points: vec![(2, 1.0)] },
        ];
        assert!(render(Artifact::Bars(&ragged), &meta(), dir.path()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
        let (svg, csv) = render(Artifact::Heatmap(&gm()), &meta(), dir.path()).unwrap();
        assert!(svg.ends_with("t1_heatmap.svg") && csv.ends_with("t1_heatmap.csv"));
    }
}
