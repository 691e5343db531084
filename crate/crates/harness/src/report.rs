//! CSV tables and SVG cell maps for finished runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pointcount_core::metrics::MetricReport;
use pointcount_core::GridDims;
use serde::Serialize;

use crate::run::{load_run, RunMeta};
use crate::Error;

const CELL_PX: u32 = 48;
const MARGIN: u32 = 28;
/// Cells with an F1 of exactly zero.
pub const ZERO_FILL: &str = "#d62728";
/// Cells no sample touched.
pub const EMPTY_FILL: &str = "#bdbdbd";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub run: String,
    pub split: String,
    pub model: String,
    pub approach: String,
    pub samples: u64,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub macro_f1: Option<f64>,
    pub exact_match: Option<f64>,
    pub consistency: Option<f64>,
    pub oob_rate: Option<f64>,
}

fn pct(v: Option<f64>) -> Option<f64> {
    v.map(|x| (x * 1e4).round() / 100.0)
}

impl SummaryRow {
    /// Rates are written as percentages with two decimals.
    pub fn new(run: &str, meta: &RunMeta, r: &MetricReport) -> Self {
        SummaryRow {
            run: run.into(),
            split: meta.split.clone(),
            model: meta.model.clone(),
            approach: meta.approach.name().into(),
            samples: r.samples,
            accuracy: pct(Some(r.accuracy)).unwrap_or_default(),
            precision: pct(r.precision),
            recall: pct(r.recall),
            f1: pct(r.f1),
            macro_f1: pct(r.macro_f1),
            exact_match: pct(r.exact_match),
            consistency: pct(r.consistency),
            oob_rate: pct(r.oob_rate),
        }
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Manifest(format!("{}: {e}", path.display()))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Accuracy by ground-truth count and by number of distractors.
pub fn write_count_csv(path: &Path, runs: &[(String, MetricReport)]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["run", "by", "key", "n", "accuracy"]).map_err(csv_err(path))?;
    for (run, r) in runs {
        for (by, rows) in [("count", &r.per_count), ("distractors", &r.per_distractors)] {
            for row in rows.iter() {
                let acc = format!("{:.2}", row.accuracy * 100.0);
                w.write_record([run.as_str(), by, &row.key.to_string(), &row.n.to_string(), &acc]).map_err(csv_err(path))?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-cell F1 as a `rows × cols` table; empty fields for untouched cells.
pub fn write_cell_csv(path: &Path, cells: &[Option<f64>], dims: GridDims) -> Result<(), Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    for row in cells.chunks(usize::from(dims.cols)).take(usize::from(dims.rows)) {
        let fields: Vec<String> = row.iter().map(|c| c.map(|v| format!("{v:.1}")).unwrap_or_default()).collect();
        w.write_record(&fields).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// White to dark blue for 0..100; zero gets its own color.
fn fill(v: Option<f64>) -> String {
    match v {
        None => EMPTY_FILL.into(),
        Some(v) if v <= 0.0 => ZERO_FILL.into(),
        Some(v) => {
            let t = (v / 100.0).clamp(0.0, 1.0);
            let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
            format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
        }
    }
}

/// Cell-level F1 heatmap with the value printed in every cell.
pub fn heatmap_svg(cells: &[Option<f64>], dims: GridDims, title: &str) -> String {
    let (rows, cols) = (u32::from(dims.rows), u32::from(dims.cols));
    let w = cols * CELL_PX + 2 * MARGIN;
    let h = rows * CELL_PX + 2 * MARGIN;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif">"#);
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"#, w / 2, escape(title));
    for r in 0..rows {
        for c in 0..cols {
            let v = cells.get((r * cols + c) as usize).copied().flatten();
            let (x, y) = (MARGIN + c * CELL_PX, MARGIN + r * CELL_PX);
            let label = v.map(|v| format!("{v:.1}")).unwrap_or_else(|| "n/a".into());
            let ink = if v.is_some_and(|v| v > 55.0 || v <= 0.0) { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL_PX}" height="{CELL_PX}" fill="{}" stroke="#ffffff"/><text x="{}" y="{}" font-size="12" text-anchor="middle" fill="{ink}">{label}</text>"##,
                fill(v),
                x + CELL_PX / 2,
                y + CELL_PX / 2 + 4,
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportSummary {
    pub rows: usize,
    pub heatmaps: Vec<PathBuf>,
}

/// Collects finished runs into `summary.csv`, `per_count.csv` and one
/// `<run>_cell_f1.svg` per grid run.
pub fn report(run_dirs: &[PathBuf], out: &Path) -> Result<ReportSummary, Error> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    let mut heatmaps = Vec::new();
    for dir in run_dirs {
        let (meta, r) = load_run(dir)?;
        let name = dir.file_name().and_then(|s| s.to_str()).unwrap_or("run").to_owned();
        rows.push(SummaryRow::new(&name, &meta, &r));
        if let Some(dims) = r.dims {
            let title = format!("{name}: cell F1 (%), {} / {} / {}", meta.split, meta.model, meta.approach.name());
            let path = out.join(format!("{name}_cell_f1.svg"));
            std::fs::write(&path, heatmap_svg(&r.cell_f1, dims, &title)).map_err(|e| Error::io(&path, e))?;
            heatmaps.push(path);
        }
        counts.push((name, r));
    }
    write_summary_csv(&out.join("summary.csv"), &rows)?;
    write_count_csv(&out.join("per_count.csv"), &counts)?;
    Ok(ReportSummary { rows: rows.len(), heatmaps })
}
