//! CSV and SVG output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use deepmetric_core::embedder::TrainHistory;
use deepmetric_core::metrics::{ConfusionMatrix, MetricsReport};
use deepmetric_core::Matrix;

use crate::error::{CliError, Result};

fn out_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Output { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Output { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

/// Writes rows with the csv crate; every record is a list of cells.
pub fn write_csv<I, R, C>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = C>,
    C: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(out_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(out_err(path))
}

/// A fraction as a percentage with one decimal.
pub fn percent(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn opt_percent(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), percent)
}

fn opt_number(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `epoch,softmax_loss,rtl_loss,val_accuracy`; absent values are empty.
pub fn write_history(path: &Path, history: &TrainHistory) -> Result<()> {
    let rows = history.epochs.iter().map(|r| {
        [r.epoch.to_string(), r.softmax_loss.to_string(), opt_number(r.rtl_loss), opt_number(r.val_accuracy)]
    });
    write_csv(path, &["epoch", "softmax_loss", "rtl_loss", "val_accuracy"], rows)
}

/// `metric,value` rows in percent. Clustering reports show "n/a" for the
/// classification rows.
pub fn metric_rows(report: &MetricsReport) -> Vec<(String, String)> {
    let s = report.scores;
    vec![
        ("accuracy_weighted".into(), opt_percent(s.map(|s| s.accuracy))),
        ("precision_macro".into(), opt_percent(s.map(|s| s.precision_macro))),
        ("recall_macro".into(), opt_percent(s.map(|s| s.recall_macro))),
        ("f1_macro".into(), opt_percent(s.map(|s| s.f1_macro))),
        ("rand_index".into(), opt_percent(report.rand_index)),
    ]
}

pub fn write_metrics(path: &Path, report: &MetricsReport, extra: &[(String, String)]) -> Result<()> {
    let rows = metric_rows(report).into_iter().chain(extra.iter().cloned()).map(|(k, v)| [k, v]);
    write_csv(path, &["metric", "value"], rows)
}

/// Rows are true classes, columns predicted classes, both by name.
pub fn write_confusion(path: &Path, confusion: &ConfusionMatrix, names: &[String]) -> Result<()> {
    let mut header = vec!["true\\predicted"];
    header.extend(names.iter().map(String::as_str));
    let rows = (0..confusion.classes()).map(|t| {
        std::iter::once(names[t].clone()).chain(confusion.row(t).iter().map(u64::to_string)).collect::<Vec<_>>()
    });
    write_csv(path, &header, rows)
}

pub struct LayoutPoint<'a> {
    pub id: usize,
    pub truth: usize,
    pub predicted: usize,
    pub split: &'a str,
}

pub fn write_layout(path: &Path, layout: &Matrix, points: &[LayoutPoint<'_>], names: &[String]) -> Result<()> {
    let rows = points.iter().zip(layout.iter_rows()).map(|(p, xy)| {
        [
            p.id.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
            names[p.truth].clone(),
            names[p.predicted].clone(),
            p.split.to_string(),
        ]
    });
    write_csv(path, &["id", "x", "y", "true_label", "predicted_label", "split"], rows)
}

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn colour(class: usize) -> String {
    match PALETTE.get(class) {
        Some(c) => (*c).to_string(),
        // Golden-angle hues beyond the fixed palette.
        None => format!("hsl({:.0},65%,45%)", (class as f64 * 137.508) % 360.0),
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Scatter plot coloured by true class. Training points are circles, test
/// points are squares. `caption` goes under the plot.
pub fn render_svg(layout: &Matrix, points: &[LayoutPoint<'_>], names: &[String], caption: &str) -> String {
    const PLOT: f64 = 480.0;
    const MARGIN: f64 = 20.0;
    const LEGEND: f64 = 160.0;
    let (width, height) = (PLOT + 2.0 * MARGIN + LEGEND, PLOT + 2.0 * MARGIN + 30.0);
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in layout.iter_rows() {
        for d in 0..2 {
            lo[d] = lo[d].min(r[d]);
            hi[d] = hi[d].max(r[d]);
        }
    }
    let span = |d: usize| if hi[d] > lo[d] { hi[d] - lo[d] } else { 1.0 };
    let px = |v: f64, d: usize| {
        let t = if lo[d].is_finite() { (v - lo[d]) / span(d) } else { 0.5 };
        if d == 0 { MARGIN + t * PLOT } else { MARGIN + (1.0 - t) * PLOT }
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<g id="points">"#);
    for (p, xy) in points.iter().zip(layout.iter_rows()) {
        let (x, y) = (px(xy[0], 0), px(xy[1], 1));
        let c = colour(p.truth);
        if p.split == "test" {
            let _ = writeln!(s, r#"<rect x="{:.2}" y="{:.2}" width="5" height="5" fill="{c}" stroke="black" stroke-width="0.5"/>"#, x - 2.5, y - 2.5);
        } else {
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{c}" fill-opacity="0.7"/>"#);
        }
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="legend">"#);
    let lx = PLOT + 2.0 * MARGIN;
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<g class="legend-entry"><circle cx="{:.1}" cy="{:.1}" r="5" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text></g>"#,
            lx + 6.0,
            y + 6.0,
            colour(i),
            lx + 16.0,
            y + 10.0,
            escape(name)
        );
    }
    let y = MARGIN + 16.0 * names.len() as f64 + 8.0;
    let _ = writeln!(s, r#"<text x="{lx:.1}" y="{:.1}">● train  ■ test</text>"#, y + 10.0);
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<text id="caption" x="{MARGIN}" y="{:.1}">{}</text>"#, height - 12.0, escape(caption));
    s.push_str("</svg>\n");
    s
}
