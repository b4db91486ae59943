//! CSV outputs and deterministic SVG plots.
//!
//! Reals in every CSV use the log formatter, so identical inputs give
//! identical bytes and every value re-parses exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::PipelineEvaluation;
use crate::logs::fmt_real;
use crate::metrics::DiagnosisTable;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::data(format!("{}: {other:?}", path.display())),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One metric value: RCS grid points, single-objective RCS, ECE, PCOC, AUC
/// and histogram distances, in long format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub pipeline: String,
    pub metric: String,
    pub k: Option<usize>,
    pub c: Option<usize>,
    pub value: f64,
}

pub fn metric_rows(e: &PipelineEvaluation) -> Vec<MetricRow> {
    let row = |metric: &str, kc: Option<(usize, usize)>, value: f64| MetricRow {
        pipeline: e.pipeline.clone(),
        metric: metric.to_string(),
        k: kc.map(|x| x.0),
        c: kc.map(|x| x.1),
        value,
    };
    let mut rows = vec![
        row("rcs_macro", Some((e.primary.k, e.primary.c)), e.primary.rcs_macro),
        row("rcs_micro", Some((e.primary.k, e.primary.c)), e.primary.rcs_micro),
    ];
    for g in &e.grid {
        rows.push(row("grid_rcs_macro", Some((g.k, g.c)), g.rcs_macro));
        rows.push(row("grid_rcs_micro", Some((g.k, g.c)), g.rcs_micro));
    }
    for s in &e.single_objective {
        rows.push(row(&format!("single_objective_rcs:{}", s.objective), Some((s.k, s.c)), s.rcs_macro));
    }
    if let Some(c) = &e.calibration {
        rows.push(row("ece", None, c.ece));
        rows.push(row("pcoc", None, c.pcoc));
    }
    if let Some(a) = e.auc {
        rows.push(row("auc", None, a));
    }
    if let Some(h) = &e.histograms {
        rows.push(row("tv_preranking_set", None, h.tv_prerank_set));
        rows.push(row("tv_win_set", None, h.tv_win_set));
    }
    rows
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| {
            Ok(vec![
                r.pipeline.clone(),
                r.metric.clone(),
                opt_usize(r.k),
                opt_usize(r.c),
                fmt_real(r.value)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &["pipeline", "metric", "k", "c", "value"], rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Bucket table of the proxy calibration report.
pub fn write_calibration_csv(path: &Path, e: &PipelineEvaluation) -> Result<()> {
    let rows = e
        .calibration
        .iter()
        .flat_map(|c| c.buckets.iter())
        .map(|b| {
            Ok(vec![
                fmt_real(b.lo)?,
                fmt_real(b.hi)?,
                b.count.to_string(),
                fmt_real(b.mean_pred)?,
                fmt_real(b.mean_ref)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &["lo", "hi", "count", "mean_prerank", "mean_rank"], rows)
}

/// Columns the histogram plot reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub lo: f64,
    pub hi: f64,
    pub preranking_set_prerank: f64,
    pub preranking_set_rank: f64,
    pub win_set_prerank: f64,
    pub win_set_rank: f64,
}

pub fn histogram_rows(e: &PipelineEvaluation) -> Vec<HistogramRow> {
    let Some(h) = &e.histograms else {
        return Vec::new();
    };
    (0..h.buckets)
        .map(|i| HistogramRow {
            lo: i as f64 / h.buckets as f64,
            hi: (i + 1) as f64 / h.buckets as f64,
            preranking_set_prerank: h.prerank_set_pre[i],
            preranking_set_rank: h.prerank_set_rank[i],
            win_set_prerank: h.win_set_pre[i],
            win_set_rank: h.win_set_rank[i],
        })
        .collect()
}

const HISTOGRAM_HEADER: [&str; 6] = [
    "lo",
    "hi",
    "preranking_set_prerank",
    "preranking_set_rank",
    "win_set_prerank",
    "win_set_rank",
];

pub fn write_histograms_csv(path: &Path, rows: &[HistogramRow]) -> Result<()> {
    let rows = rows
        .iter()
        .map(|r| {
            [r.lo, r.hi, r.preranking_set_prerank, r.preranking_set_rank, r.win_set_prerank, r.win_set_rank]
                .into_iter()
                .map(fmt_real)
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &HISTOGRAM_HEADER, rows)
}

pub fn read_histograms_csv(path: &Path) -> Result<Vec<HistogramRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn write_diagnosis_csv(path: &Path, table: &DiagnosisTable) -> Result<()> {
    let rows = table
        .rows
        .iter()
        .map(|r| {
            Ok(vec![
                r.slot.clone(),
                r.prerank_rule.clone(),
                table.k.to_string(),
                table.c.to_string(),
                fmt_real(r.rcs_before)?,
                fmt_real(r.rcs_after)?,
                fmt_real(r.delta)?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(
        path,
        &["slot", "prerank_rule", "k", "c", "rcs_before", "rcs_after", "delta_rcs"],
        rows,
    )
}

pub fn write_loss_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let rows = trace
        .iter()
        .enumerate()
        .map(|(epoch, &loss)| Ok(vec![epoch.to_string(), fmt_real(loss)?]))
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &["epoch", "loss"], rows)
}

/// One line of the cross-pipeline summary, mirroring the
/// "single-objective RCS | RCS" layout plus calibration and AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub pipeline: String,
    /// `(objective, value)` in declaration order.
    pub single_objective: Vec<(String, f64)>,
    pub rcs: f64,
    pub ece: Option<f64>,
    pub pcoc: Option<f64>,
    pub auc: Option<f64>,
}

impl SummaryRow {
    /// Collect one pipeline's row from its metric rows.
    pub fn from_metrics(pipeline: &str, rows: &[MetricRow], objectives: &[String], mode_metric: &str) -> Result<Self> {
        let find = |metric: &str| rows.iter().find(|r| r.metric == metric).map(|r| r.value);
        let rcs = find(mode_metric).ok_or_else(|| Error::data(format!("{pipeline}: no `{mode_metric}` row")))?;
        let single_objective = objectives
            .iter()
            .map(|o| {
                let key = format!("single_objective_rcs:{o}");
                find(&key)
                    .map(|v| (o.clone(), v))
                    .ok_or_else(|| Error::data(format!("{pipeline}: no `{key}` row")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SummaryRow {
            pipeline: pipeline.to_string(),
            single_objective,
            rcs,
            ece: find("ece"),
            pcoc: find("pcoc"),
            auc: find("auc"),
        })
    }
}

fn cell(v: Option<f64>) -> Result<String> {
    v.map_or(Ok("n/a".to_string()), fmt_real)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let objectives: Vec<String> = rows
        .first()
        .map(|r| r.single_objective.iter().map(|s| s.0.clone()).collect())
        .unwrap_or_default();
    let mut header = vec!["pipeline".to_string()];
    header.extend(objectives.iter().map(|o| format!("single_objective_rcs_{o}")));
    header.extend(["rcs", "ece", "pcoc", "auc"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let out = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.pipeline.clone()];
            for (_, v) in &r.single_objective {
                row.push(fmt_real(*v)?);
            }
            row.push(fmt_real(r.rcs)?);
            row.push(cell(r.ece)?);
            row.push(cell(r.pcoc)?);
            row.push(cell(r.auc)?);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(path, &header, out)
}

/// Markdown rendering of the summary with percentages, for humans.
pub fn summary_markdown(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let objectives: Vec<&str> = rows
        .first()
        .map(|r| r.single_objective.iter().map(|s| s.0.as_str()).collect())
        .unwrap_or_default();
    out.push_str("| pipeline |");
    for o in &objectives {
        let _ = write!(out, " SO-RCS {o} |");
    }
    out.push_str(" RCS | ECE | PCOC | AUC |\n|---|");
    for _ in &objectives {
        out.push_str("---|");
    }
    out.push_str("---|---|---|---|\n");
    let pct = |v: f64| format!("{:.1}%", 100.0 * v);
    let num = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    for r in rows {
        let _ = write!(out, "| {} |", r.pipeline);
        for (_, v) in &r.single_objective {
            let _ = write!(out, " {} |", pct(*v));
        }
        let _ = writeln!(out, " {} | {} | {} | {} |", pct(r.rcs), num(r.ece), num(r.pcoc), num(r.auc));
    }
    out
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn svg_open(title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(s, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    // axes
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{:.2}\" stroke=\"black\"/>",
        HEIGHT - MARGIN
    );
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn x_of(v: f64) -> f64 {
    MARGIN + v * (WIDTH - 2.0 * MARGIN)
}

fn y_of(v: f64, top: f64) -> f64 {
    HEIGHT - MARGIN - v / top * (HEIGHT - 2.0 * MARGIN)
}

fn tick_labels(s: &mut String, top: f64) {
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{v:.2}</text>",
            x_of(v),
            HEIGHT - MARGIN + 14.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{:.3}</text>",
            MARGIN - 4.0,
            y_of(v * top, top) + 3.0,
            v * top
        );
    }
}

type Series = (&'static str, fn(&HistogramRow) -> f64);

/// Step plot of the four score distributions of one pipeline. An empty
/// table gives a plot with axes only.
pub fn histogram_svg(title: &str, rows: &[HistogramRow]) -> String {
    let mut s = svg_open(title);
    if !rows.is_empty() {
        let series: [Series; 4] = [
            ("pre-ranking set: pre-rank", |r| r.preranking_set_prerank),
            ("pre-ranking set: rank", |r| r.preranking_set_rank),
            ("win set: pre-rank", |r| r.win_set_prerank),
            ("win set: rank", |r| r.win_set_rank),
        ];
        let top = rows
            .iter()
            .flat_map(|r| series.iter().map(move |(_, f)| f(r)))
            .fold(0.0_f64, f64::max)
            .max(1e-9);
        tick_labels(&mut s, top);
        for (i, (label, f)) in series.iter().enumerate() {
            let mut points = String::new();
            for r in rows {
                let y = y_of(f(r), top);
                let _ = write!(points, "{:.2},{:.2} {:.2},{:.2} ", x_of(r.lo), y, x_of(r.hi), y);
            }
            let dash = if i >= 2 { " stroke-dasharray=\"4 2\"" } else { "" };
            let _ = writeln!(
                s,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
                COLORS[i],
                points.trim_end()
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>",
                WIDTH - MARGIN - 170.0,
                MARGIN + 14.0 * i as f64,
                COLORS[i],
                escape(label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Bar chart of RCS per pipeline, in summary order.
pub fn trend_svg(title: &str, rows: &[SummaryRow]) -> String {
    let mut s = svg_open(title);
    tick_labels_y_only(&mut s);
    let n = rows.len().max(1) as f64;
    let slot = (WIDTH - 2.0 * MARGIN) / n;
    for (i, r) in rows.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let y = y_of(r.rcs, 1.0);
        let _ = writeln!(
            s,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            slot * 0.7,
            HEIGHT - MARGIN - y,
            COLORS[0]
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            x + slot * 0.35,
            HEIGHT - MARGIN + 14.0,
            escape(&r.pipeline)
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{:.1}%</text>",
            x + slot * 0.35,
            y - 4.0,
            100.0 * r.rcs
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick_labels_y_only(s: &mut String) {
    for i in 0..=4 {
        let v = i as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{v:.2}</text>",
            MARGIN - 4.0,
            y_of(v, 1.0) + 3.0
        );
    }
}
