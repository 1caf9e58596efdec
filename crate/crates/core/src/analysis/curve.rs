use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::population_sd;
use crate::error::{Error, Result};

/// Mean and spread of the evaluation return across seeds at one step count.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub env_steps: u64,
    pub mean: f64,
    pub sd: f64,
    pub seeds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveSeries {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

/// `(env_steps, return_mean)` rows of an evaluation CSV.
pub fn read_eval_curve(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Precondition(format!("{}: no `{name}` column", path.display())))
    };
    let (steps, ret) = (col("env_steps")?, col("return_mean")?);
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Precondition(format!("{}: {e}", path.display())))?;
        let parse_err = || Error::Precondition(format!("{}: bad number on data row {}", path.display(), line + 1));
        let s: u64 = record[steps].parse().map_err(|_| parse_err())?;
        let r: f64 = record[ret].parse().map_err(|_| parse_err())?;
        out.push((s, r));
    }
    Ok(out)
}

/// Across-seed mean and population SD at every step count present in all
/// seeds' curves.
pub fn learning_curve(per_seed: &[Vec<(u64, f64)>]) -> Vec<CurvePoint> {
    let mut at: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for curve in per_seed {
        for &(s, r) in curve {
            at.entry(s).or_default().push(r);
        }
    }
    at.into_iter()
        .filter(|(_, v)| v.len() == per_seed.len())
        .map(|(env_steps, v)| CurvePoint {
            env_steps,
            mean: v.iter().sum::<f64>() / v.len() as f64,
            sd: population_sd(&v),
            seeds: v.len(),
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Return-vs-steps plot with a mean ± SD band per series.
pub fn learning_curve_svg(series: &[CurveSeries]) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let points = series.iter().flat_map(|s| &s.points);
    let x_max = points.clone().map(|p| p.env_steps).max().unwrap_or(1).max(1) as f64;
    let mut y_min = points.clone().map(|p| p.mean - p.sd).fold(f64::INFINITY, f64::min);
    let mut y_max = points.map(|p| p.mean + p.sd).fold(f64::NEG_INFINITY, f64::max);
    if !y_min.is_finite() || !y_max.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let sx = |s: f64| left + s / x_max * (w - left - right);
    let sy = |v: f64| top + (y_max - v) / (y_max - y_min) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (sx(0.0), sx(x_max), sy(y_min), sy(y_max));
    let _ = writeln!(svg, r#"<path d="M{x0:.1},{y1:.1} V{y0:.1} H{x1:.1}" stroke="black" fill="none"/>"#);
    for k in 0..=4 {
        let v = y_min + (y_max - y_min) * k as f64 / 4.0;
        let s = x_max * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.2}</text><text x="{:.1}" y="{:.1}" text-anchor="middle">{s:.0}</text>"#,
            left - 6.0,
            sy(v) + 4.0,
            sx(s),
            h - bottom + 18.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">environment steps</text><text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">evaluation return</text>"#,
        (left + w - right) / 2.0,
        h - 10.0,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        if s.points.is_empty() {
            continue;
        }
        let upper: Vec<String> = s.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.env_steps as f64), sy(p.mean + p.sd))).collect();
        let lower: Vec<String> =
            s.points.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.env_steps as f64), sy(p.mean - p.sd))).collect();
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let mean: Vec<String> = s.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.env_steps as f64), sy(p.mean))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            mean.join(" ")
        );
        let ly = top + 16.0 * (k as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{} ({} seeds)</text>"#,
            left + 12.0,
            escape(&s.label),
            s.points.iter().map(|p| p.seeds).max().unwrap_or(0)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
