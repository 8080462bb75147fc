//! Output writers: bus-by-hour CSV matrices, JSON summaries, and compact
//! SVG distribution plots. All writes are atomic (temp file + rename) and
//! byte-deterministic for the same inputs.

use crate::grid::NetworkCase;
use std::io::Write;
use std::path::Path;

/// Round to `digits` significant digits and print without exponent where
/// reasonable. Used for CSV cells; JSON keeps full precision.
pub fn format_sig(v: f64, digits: i32) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let mag = v.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    let rounded = (v * scale).round() / scale;
    // Decimals needed so the last significant digit survives.
    let decimals = (digits - 1 - mag).max(0) as usize;
    let s = format!("{rounded:.decimals$}");
    // Trim trailing zeros after the point, but keep at least "x".
    if s.contains('.') {
        let t = s.trim_end_matches('0').trim_end_matches('.');
        t.to_string()
    } else {
        s
    }
}

/// Write bytes to `path` via a sibling temp file and rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Bus-by-hour matrix as CSV: header `bus,h0..h{T-1}`, one row per bus,
/// cells at 6 significant digits.
pub fn matrix_csv(case: &NetworkCase, matrix: &[Vec<f64>]) -> String {
    let t_all = matrix.first().map_or(0, |r| r.len());
    let mut out = String::from("bus");
    for t in 0..t_all {
        out.push_str(&format!(",h{t}"));
    }
    out.push('\n');
    for (j, row) in matrix.iter().enumerate() {
        out.push_str(&case.buses[j].id.to_string());
        for v in row {
            out.push(',');
            out.push_str(&format_sig(*v, 6));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(
    path: &Path,
    case: &NetworkCase,
    matrix: &[Vec<f64>],
) -> std::io::Result<()> {
    atomic_write(path, matrix_csv(case, matrix).as_bytes())
}

/// Serialize as pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

// --- hourly distribution plot ------------------------------------------------

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Per-hour min/quartile/median/max summary of a bus-by-hour matrix as a
/// small self-contained SVG box plot.
pub fn hourly_summary_svg(matrix: &[Vec<f64>], title: &str) -> String {
    let t_all = matrix.first().map_or(0, |r| r.len());
    let (w, h) = (60 + 28 * t_all.max(1), 260);
    let (top, bottom, left) = (30.0, 230.0, 50.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut stats = Vec::with_capacity(t_all);
    for t in 0..t_all {
        let mut col: Vec<f64> = matrix.iter().map(|row| row[t]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite matrix"));
        let s = (
            col[0],
            quantile(&col, 0.25),
            quantile(&col, 0.5),
            quantile(&col, 0.75),
            col[col.len() - 1],
        );
        lo = lo.min(s.0);
        hi = hi.max(s.4);
        stats.push(s);
    }
    if !lo.is_finite() || hi - lo < 1e-12 {
        let mid = if lo.is_finite() { lo } else { 0.0 };
        lo = mid - 1.0;
        hi = mid + 1.0;
    }
    let y = |v: f64| top + (bottom - top) * (hi - v) / (hi - lo);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"10\">\n\
         <text x=\"8\" y=\"16\">{title}</text>\n\
         <text x=\"8\" y=\"{:.1}\">{}</text>\n\
         <text x=\"8\" y=\"{:.1}\">{}</text>\n",
        y(hi) + 4.0,
        format_sig(hi, 4),
        y(lo) + 4.0,
        format_sig(lo, 4),
    );
    for (t, s) in stats.iter().enumerate() {
        let cx = left + 28.0 * t as f64 + 14.0;
        let (min, q1, med, q3, max) = *s;
        svg.push_str(&format!(
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"#555\"/>\n\
             <rect x=\"{:.1}\" y=\"{:.1}\" width=\"16\" height=\"{:.1}\" fill=\"#9ecae1\" stroke=\"#333\"/>\n\
             <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#333\"/>\n\
             <text x=\"{:.1}\" y=\"246\" text-anchor=\"middle\">{t}</text>\n",
            y(min),
            y(max),
            cx - 8.0,
            y(q3),
            (y(q1) - y(q3)).max(0.5),
            cx - 8.0,
            y(med),
            cx + 8.0,
            y(med),
            cx,
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_hourly_summary_svg(
    path: &Path,
    matrix: &[Vec<f64>],
    title: &str,
) -> std::io::Result<()> {
    atomic_write(path, hourly_summary_svg(matrix, title).as_bytes())
}

// ---------------------------------------------------------------------------
