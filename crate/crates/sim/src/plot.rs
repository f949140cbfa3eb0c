//! Regret table I/O and a small self-contained SVG line chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub epsilon: f64,
    pub algorithm: String,
    pub reps: usize,
    pub mean_regret: f64,
    pub median_regret: f64,
    pub max_regret: f64,
    pub budget: f64,
    pub mean_budget_used: f64,
}

pub fn write_table(path: &Path, seed: u64, hash: &str, rows: &[TableRow]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# master_seed={seed}").map_err(io_err(path))?;
    writeln!(out, "# config_hash={hash}").map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_table(path: &Path) -> Result<(u64, String, Vec<TableRow>)> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut seed = None;
    let mut hash = None;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        let Some(comment) = line.strip_prefix("# ") else { break };
        if let Some(v) = comment.strip_prefix("master_seed=") {
            seed = v.parse().ok();
        } else if let Some(v) = comment.strip_prefix("config_hash=") {
            hash = Some(v.to_string());
        }
    }
    let (Some(seed), Some(hash)) = (seed, hash) else {
        return Err(SimError::Config(format!("{} lacks seed/hash header", path.display())));
    };
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<TableRow>, _>>()?;
    Ok((seed, hash, rows))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 4] = ["#d4a017", "#1f5fa8", "#b03a2e", "#2e8b57"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean regret against ε, one polyline per algorithm. Series with a single
/// point are drawn as markers only.
pub fn emit_plot(rows: &[TableRow], seed: u64, hash: &str) -> Result<String> {
    if rows.is_empty() {
        return Err(SimError::Config("nothing to plot".into()));
    }
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        series.entry(&r.algorithm).or_default().push((r.epsilon, r.mean_regret));
    }
    for points in series.values_mut() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let (mut x0, mut x1) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.epsilon), hi.max(r.epsilon))
    });
    let (mut y0, mut y1) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.mean_regret), hi.max(r.mean_regret))
    });
    if x1 - x0 <= 0.0 {
        x0 -= 0.5 * x0.abs().max(1e-3);
        x1 += 0.5 * x1.abs().max(1e-3);
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5 * y0.abs().max(1.0);
        y1 += 0.5 * y1.abs().max(1.0);
    }
    let pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (x, y) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{xv:.4}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.1}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">ε</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">mean regret</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if points.len() > 1 {
            let coords: Vec<String> = points
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            );
        }
        for (x, y) in points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}"/>"#,
                px(*x),
                py(*y)
            );
        }
        let ly = TOP + 20.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="24">master_seed={seed} config={}</text>"#,
        &hash[..hash.len().min(12)]
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(epsilon: f64, algorithm: &str, mean_regret: f64) -> TableRow {
        TableRow {
            epsilon,
            algorithm: algorithm.into(),
            reps: 10,
            mean_regret,
            median_regret: mean_regret,
            max_regret: mean_regret,
            budget: 0.0,
            mean_budget_used: 0.0,
        }
    }

    #[test]
    fn two_series_give_two_polylines() {
        let rows = vec![
            row(0.0, "algorithm1", 100.0),
            row(0.02, "algorithm1", 120.0),
            row(0.0, "scrible_baseline", 90.0),
            row(0.02, "scrible_baseline", 400.0),
        ];
        let svg = emit_plot(&rows, 7, "abcdef0123456789").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("master_seed=7"));
        assert!(svg.contains(">ε<") && svg.contains(">mean regret<"));
        assert_eq!(svg, emit_plot(&rows, 7, "abcdef0123456789").unwrap());
    }

    #[test]
    fn single_points_are_markers_only() {
        let svg = emit_plot(&[row(0.01, "a", 1.0), row(0.01, "b", 2.0)], 1, "ff").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(emit_plot(&[], 1, "ff").is_err());
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![row(0.005, "algorithm1", 12.5), row(0.005, "scrible_baseline", 1e-7)];
        write_table(&path, 42, "deadbeef", &rows).unwrap();
        let (seed, hash, back) = read_table(&path).unwrap();
        assert_eq!((seed, hash.as_str()), (42, "deadbeef"));
        assert_eq!(back, rows);
    }
}
