//! CSV, SVG and JSON report files for a finished sweep.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluator::SENTINEL_SCORE;
use crate::sweep::{aggregate_by_topk, OptimumReport, SweepCell, TopKSummary};

pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const HEATMAP_OK_ONLY_CSV: &str = "heatmap_ok_only.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const TOPK_CSV: &str = "topk.csv";
pub const CWU_SCATTER_CSV: &str = "cwu_scatter.csv";
pub const OPTIMUM_JSON: &str = "optimum.json";

/// Mean similarity by chunk size (rows) and k (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapGrid {
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl HeatmapGrid {
    /// Build from cells; `ok_only` uses the sentinel-free means.
    pub fn from_cells(cells: &[SweepCell], ok_only: bool) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidParameter("cannot build a heatmap from an empty grid".into()));
        }
        let mut rows: Vec<usize> = cells.iter().map(|c| c.chunk_size).collect();
        let mut cols: Vec<usize> = cells.iter().map(|c| c.top_k).collect();
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        let mut values = vec![vec![None; cols.len()]; rows.len()];
        let mut filled = vec![vec![false; cols.len()]; rows.len()];
        for c in cells {
            let r = rows.binary_search(&c.chunk_size).expect("row label present");
            let k = cols.binary_search(&c.top_k).expect("column label present");
            if std::mem::replace(&mut filled[r][k], true) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate cell ({}, {})",
                    c.chunk_size, c.top_k
                )));
            }
            values[r][k] = if ok_only { c.mean_similarity_ok } else { Some(c.mean_similarity) };
        }
        if filled.iter().flatten().any(|f| !f) {
            return Err(Error::InvalidParameter("grid has missing cells".into()));
        }
        Ok(Self {
            row_labels: rows,
            col_labels: cols,
            values,
        })
    }
}

fn fmt_opt(v: Option<f64>, decimals: usize) -> String {
    v.map(|v| format!("{v:.decimals$}")).unwrap_or_default()
}

pub fn heatmap_csv(grid: &HeatmapGrid) -> String {
    let mut out = String::from("chunk_size");
    for k in &grid.col_labels {
        let _ = write!(out, ",k={k}");
    }
    out.push('\n');
    for (c, row) in grid.row_labels.iter().zip(&grid.values) {
        let _ = write!(out, "{c}");
        for v in row {
            let _ = write!(out, ",{}", fmt_opt(*v, 4));
        }
        out.push('\n');
    }
    out
}

pub fn topk_csv(summary: &[TopKSummary]) -> String {
    let mut out = String::from("k,best_mean_S,best_C,mean_cwu_actual_pct\n");
    for s in summary {
        let _ = writeln!(
            out,
            "{},{:.4},{},{:.1}",
            s.top_k,
            s.best_mean_similarity,
            s.best_chunk_size,
            100.0 * s.mean_cwu_actual
        );
    }
    out
}

pub fn cwu_scatter_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("chunk_size,k,mean_cwu_actual,mean_S\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.4}",
            c.chunk_size, c.top_k, c.mean_cwu_actual, c.mean_similarity
        );
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Linear blend from cool blue at the sentinel value to warm red at 1.0.
fn cell_color(value: Option<f64>) -> String {
    const COOL: [f64; 3] = [59.0, 76.0, 192.0];
    const WARM: [f64; 3] = [180.0, 4.0, 38.0];
    let Some(v) = value else {
        return "#d9d9d9".into();
    };
    let t = ((v - SENTINEL_SCORE) / (1.0 - SENTINEL_SCORE)).clamp(0.0, 1.0);
    let ch = |i: usize| (COOL[i] + (WARM[i] - COOL[i]) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

pub fn heatmap_svg(grid: &HeatmapGrid, title: &str) -> String {
    const LEFT: usize = 90;
    const TOP: usize = 60;
    const CELL_W: usize = 64;
    const CELL_H: usize = 36;
    let width = LEFT + CELL_W * grid.col_labels.len() + 20;
    let height = TOP + CELL_H * grid.row_labels.len() + 50;

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        out,
        "<text class=\"title\" x=\"{LEFT}\" y=\"24\" font-size=\"15\">{}</text>",
        xml_escape(title)
    );
    for (j, k) in grid.col_labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text class=\"col-label\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">k={k}</text>",
            LEFT + j * CELL_W + CELL_W / 2,
            TOP - 8
        );
    }
    for (i, (c, row)) in grid.row_labels.iter().zip(&grid.values).enumerate() {
        let y = TOP + i * CELL_H;
        let _ = writeln!(
            out,
            "<text class=\"row-label\" x=\"{}\" y=\"{}\" text-anchor=\"end\">C={c}</text>",
            LEFT - 8,
            y + CELL_H / 2 + 4
        );
        for (j, v) in row.iter().enumerate() {
            let x = LEFT + j * CELL_W;
            let k = grid.col_labels[j];
            let _ = writeln!(
                out,
                "<rect class=\"cell\" data-chunk-size=\"{c}\" data-k=\"{k}\" x=\"{x}\" y=\"{y}\" \
                 width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{}\" stroke=\"#ffffff\"/>",
                cell_color(*v)
            );
            let _ = writeln!(
                out,
                "<text class=\"value\" data-chunk-size=\"{c}\" data-k=\"{k}\" x=\"{}\" y=\"{}\" \
                 text-anchor=\"middle\" fill=\"#ffffff\">{}</text>",
                x + CELL_W / 2,
                y + CELL_H / 2 + 4,
                fmt_opt(*v, 4)
            );
        }
    }
    let _ = writeln!(
        out,
        "<text class=\"legend\" x=\"{LEFT}\" y=\"{}\">color: {:.2} (blue) to 1.00 (red)</text>",
        TOP + CELL_H * grid.row_labels.len() + 30,
        SENTINEL_SCORE
    );
    out.push_str("</svg>\n");
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn emit_heatmap_csv(cells: &[SweepCell], path: &Path) -> Result<()> {
    write_file(path, &heatmap_csv(&HeatmapGrid::from_cells(cells, false)?))
}

pub fn emit_heatmap_svg(cells: &[SweepCell], title: &str, path: &Path) -> Result<()> {
    write_file(path, &heatmap_svg(&HeatmapGrid::from_cells(cells, false)?, title))
}

pub fn emit_topk_summary(cells: &[SweepCell], path: &Path) -> Result<()> {
    write_file(path, &topk_csv(&aggregate_by_topk(cells)))
}

pub fn emit_cwu_scatter(cells: &[SweepCell], path: &Path) -> Result<()> {
    if cells.is_empty() {
        return Err(Error::InvalidParameter("cannot report an empty grid".into()));
    }
    write_file(path, &cwu_scatter_csv(cells))
}

/// Write every report file into `dir`. With `exclude_sentinels`, a second
/// heatmap averaged over ok trials only is written as well.
pub fn emit_all(
    dir: &Path,
    cells: &[SweepCell],
    optimum: &OptimumReport,
    title: &str,
    exclude_sentinels: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    emit_heatmap_csv(cells, &dir.join(HEATMAP_CSV))?;
    emit_heatmap_svg(cells, title, &dir.join(HEATMAP_SVG))?;
    emit_topk_summary(cells, &dir.join(TOPK_CSV))?;
    emit_cwu_scatter(cells, &dir.join(CWU_SCATTER_CSV))?;
    write_file(&dir.join(OPTIMUM_JSON), &(serde_json::to_string_pretty(optimum)? + "\n"))?;
    if exclude_sentinels {
        write_file(
            &dir.join(HEATMAP_OK_ONLY_CSV),
            &heatmap_csv(&HeatmapGrid::from_cells(cells, true)?),
        )?;
    }
    Ok(())
}
