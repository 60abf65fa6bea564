//! Heatmap emission for sweep reports: one CSV per metric (means) with
//! companion `_ci_low` / `_ci_high` CSVs, and optional SVG heatmaps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::{SimilarityMatrix, SweepReport};

fn matrix_csv(labels: &[String], values: &[Vec<Option<f64>>]) -> Result<Vec<u8>> {
    let mut out = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::Invalid(format!("cannot encode CSV: {e}"));
    out.write_record(std::iter::once("cell").chain(labels.iter().map(String::as_str)))
        .map_err(err)?;
    for (label, row) in labels.iter().zip(values) {
        let mut record = vec![label.clone()];
        record.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        out.write_record(&record).map_err(err)?;
    }
    out.into_inner()
        .map_err(|e| Error::Invalid(format!("cannot encode CSV: {e}")))
}

/// Fixed five-stop ramp (low → high).
const RAMP: [(u8, u8, u8); 5] = [
    (68, 1, 84),
    (59, 82, 139),
    (33, 145, 140),
    (94, 201, 98),
    (253, 231, 37),
];

fn ramp_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (t.floor() as usize).min(RAMP.len() - 2);
    let f = t - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    let mix = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A standalone SVG heatmap of the matrix means, colored over the metric's
/// full range.
pub fn heatmap_svg(matrix: &SimilarityMatrix) -> String {
    const CELL: usize = 48;
    const MARGIN: usize = 110;
    let n = matrix.labels.len();
    let size = MARGIN + n * CELL + 10;
    let (lo, hi) = matrix.metric.range();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{}" font-family="sans-serif" font-size="11">"#,
        size + 20
    );
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="16" font-size="13">{}</text>"#,
        matrix.metric
    );
    for (i, label) in matrix.labels.iter().enumerate() {
        let pos = MARGIN + i * CELL + CELL / 2;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{pos}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            MARGIN - 6,
            escape(label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{pos}" y="{}" text-anchor="end" transform="rotate(-60 {pos} {})">{}</text>"#,
            MARGIN - 6,
            MARGIN - 6,
            escape(label)
        );
    }
    for (i, row) in matrix.values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (x, y) = (MARGIN + j * CELL, MARGIN + i * CELL);
            let (fill, text) = match v {
                Some(v) => (ramp_color((v - lo) / (hi - lo)), format!("{v:.2}")),
                None => ("#cccccc".to_string(), "n/a".to_string()),
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="white"/>"#
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="middle" dominant-baseline="middle" fill="white">{text}</text>"#,
                x + CELL / 2,
                y + CELL / 2
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `<metric>.csv`, `<metric>_ci_low.csv`, `<metric>_ci_high.csv` and,
/// when requested, `<metric>.svg` for every matrix. Returns the written paths.
pub fn write_heatmaps(report: &SweepReport, dir: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for m in &report.matrices {
        for (suffix, values) in [("", &m.values), ("_ci_low", &m.ci_low), ("_ci_high", &m.ci_high)] {
            let path = dir.join(format!("{}{suffix}.csv", m.metric));
            fs::write(&path, matrix_csv(&m.labels, values)?).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        if svg {
            let path = dir.join(format!("{}.svg", m.metric));
            fs::write(&path, heatmap_svg(m)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}
