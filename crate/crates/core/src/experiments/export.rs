//! Result files: evaluation CSVs, raw return distributions for violin
//! plots, summary JSON, and histogram CSV/SVG pairs.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{EvalRecord, HistogramSeries, HistogramStudy, SuiteSummary};

/// evals.csv schema v1.
pub const EVALS_CSV_HEADER: &str =
    "se_id,agent_kind,lr,batch,hidden,layers,mean_return,std_return,episodes,steps,eval_steps";

/// returns.csv schema v1: every individual test-episode return.
pub const RETURNS_CSV_HEADER: &str = "se_id,agent_kind,record,test_episode,return";

/// hist_<task>_<dim>.csv schema v1.
pub const HISTOGRAM_CSV_HEADER: &str = "bin_left,bin_right,count_blue,count_orange,count_green";

pub fn write_evals_csv(path: &Path, records: &[EvalRecord]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(EVALS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let n = r.returns.len().max(1) as f64;
        let var =
            r.returns.iter().map(|x| (x - r.mean_return) * (x - r.mean_return)).sum::<f64>() / n;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.se_id,
            r.agent_kind.name(),
            r.hps.learning_rate,
            r.hps.batch_size,
            r.hps.hidden_size,
            r.hps.hidden_layers,
            r.mean_return,
            var.sqrt(),
            r.episodes_used,
            r.env_steps_used,
            r.eval_steps_used
        )
        .expect("string write");
    }
    fs::write(path, out)
}

pub fn write_returns_csv(path: &Path, records: &[EvalRecord]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(RETURNS_CSV_HEADER);
    out.push('\n');
    for r in records {
        for (episode, ret) in r.returns.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.se_id,
                r.agent_kind.name(),
                r.record_index,
                episode,
                ret
            )
            .expect("string write");
        }
    }
    fs::write(path, out)
}

pub fn write_summary_json(path: &Path, summary: &SuiteSummary) -> io::Result<()> {
    let json = serde_json::to_string_pretty(summary).expect("summary serializes");
    fs::write(path, json)
}

pub fn write_histogram_csv(path: &Path, series: &HistogramSeries) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(HISTOGRAM_CSV_HEADER);
    out.push('\n');
    for bin in 0..series.counts[0].len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            series.bin_edges[bin],
            series.bin_edges[bin + 1],
            series.counts[0][bin],
            series.counts[1][bin],
            series.counts[2][bin]
        )
        .expect("string write");
    }
    fs::write(path, out)
}

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 360.0;
const MARGIN: f64 = 40.0;
const SERIES_COLORS: [&str; 3] = ["#1f77b4", "#ff7f0e", "#2ca02c"]; // blue, orange, green
const SERIES_LABELS: [&str; 3] = ["SE training", "real test", "SE replay"];

/// Overlaid translucent bar histogram, one file per dimension.
pub fn write_histogram_svg(path: &Path, series: &HistogramSeries) -> io::Result<()> {
    let bins = series.counts[0].len();
    let max_count = series
        .counts
        .iter()
        .flat_map(|c| c.iter())
        .copied()
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let plot_w = SVG_WIDTH - 2.0 * MARGIN;
    let plot_h = SVG_HEIGHT - 2.0 * MARGIN;
    let bar_w = plot_w / bins as f64;

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}">"#
    )
    .expect("string write");
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#).expect("string write");
    writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        SVG_WIDTH / 2.0,
        series.dim_name
    )
    .expect("string write");

    for (s, color) in SERIES_COLORS.iter().enumerate() {
        for bin in 0..bins {
            let count = series.counts[s][bin] as f64;
            if count == 0.0 {
                continue;
            }
            let h = plot_h * count / max_count;
            let x = MARGIN + bin as f64 * bar_w;
            let y = SVG_HEIGHT - MARGIN - h;
            writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.45"/>"#
            )
            .expect("string write");
        }
    }

    // axis line and range labels
    writeln!(
        svg,
        r#"<line x1="{MARGIN}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        SVG_HEIGHT - MARGIN,
        SVG_WIDTH - MARGIN,
        SVG_HEIGHT - MARGIN
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="11">{:.3}</text>"#,
        SVG_HEIGHT - MARGIN + 16.0,
        series.bin_edges[0]
    )
    .expect("string write");
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
        SVG_WIDTH - MARGIN,
        SVG_HEIGHT - MARGIN + 16.0,
        series.bin_edges[bins]
    )
    .expect("string write");
    for (s, label) in SERIES_LABELS.iter().enumerate() {
        writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="12" fill="{}" fill-opacity="0.45"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            SVG_WIDTH - 150.0,
            28.0 + 16.0 * s as f64,
            SERIES_COLORS[s],
            SVG_WIDTH - 134.0,
            38.0 + 16.0 * s as f64,
            label
        )
        .expect("string write");
    }
    writeln!(svg, "</svg>").expect("string write");
    fs::write(path, svg)
}

/// Write the per-dimension CSV/SVG pair for a whole study into `dir`.
pub fn write_histogram_study(dir: &Path, study: &HistogramStudy) -> io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for series in &study.series {
        let base = format!("hist_{}_{}", study.task.name(), series.dim_name);
        let csv = dir.join(format!("{base}.csv"));
        write_histogram_csv(&csv, series)?;
        written.push(csv.display().to_string());
        let svg = dir.join(format!("{base}.svg"));
        write_histogram_svg(&svg, series)?;
        written.push(svg.display().to_string());
    }
    Ok(written)
}
