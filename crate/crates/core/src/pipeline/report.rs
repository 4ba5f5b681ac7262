use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::Summary;
use crate::annot::Setting;
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "setting,repetition,epoch,F,P,R,F_o,P_o,R_o";

#[derive(Clone, Debug)]
pub struct ReportOutcome {
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
    pub rows: usize,
    /// Run directories without a readable `summary.json`.
    pub skipped: Vec<PathBuf>,
}

pub fn report_csv(summaries: &[Summary]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for s in summaries {
        for e in &s.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.setting,
                s.repetition,
                e.epoch,
                e.pixel.f1,
                e.pixel.precision,
                e.pixel.recall,
                e.object.f1,
                e.object.precision,
                e.object.recall
            );
        }
    }
    out
}

fn color(setting: Setting) -> &'static str {
    match setting {
        Setting::SC => "#1f77b4",
        Setting::SE => "#ff7f0e",
        Setting::MC => "#2ca02c",
        Setting::ME => "#d62728",
    }
}

/// Line chart of mean F (solid) and F_o (dashed) against epoch, one color
/// per setting, averaged over repetitions.
pub fn report_svg(summaries: &[Summary]) -> String {
    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 130.0, 20.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    // setting -> epoch -> (sum F, sum F_o, n)
    let mut curves: BTreeMap<String, (Setting, BTreeMap<u32, (f64, f64, u32)>)> = BTreeMap::new();
    let mut max_epoch = 1;
    for s in summaries {
        let entry = curves.entry(s.setting.to_string()).or_insert((s.setting, BTreeMap::new()));
        for e in &s.epochs {
            let acc = entry.1.entry(e.epoch).or_insert((0.0, 0.0, 0));
            acc.0 += e.pixel.f1;
            acc.1 += e.object.f1;
            acc.2 += 1;
            max_epoch = max_epoch.max(e.epoch);
        }
    }
    let x_of = |epoch: u32| left + pw * if max_epoch > 1 { (epoch - 1) as f64 / (max_epoch - 1) as f64 } else { 0.5 };
    let y_of = |v: f64| top + ph * (1.0 - v.clamp(0.0, 1.0));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    for epoch in 1..=max_epoch {
        let x = x_of(epoch);
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{epoch}</text>"#,
            top + ph + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">epoch</text>"#,
        left + pw / 2.0,
        h - 10.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">F1</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (row, (name, (setting, points))) in curves.iter().enumerate() {
        let c = color(*setting);
        for (dash, pick) in [("", 0usize), (r#" stroke-dasharray="6 4""#, 1)] {
            let pts: Vec<String> = points
                .iter()
                .map(|(&e, &(f, fo, n))| {
                    let v = if pick == 0 { f } else { fo } / n as f64;
                    format!("{:.1},{:.1}", x_of(e), y_of(v))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{c}" stroke-width="2"{dash} points="{}"/>"#,
                pts.join(" ")
            );
        }
        let ly = top + 14.0 + row as f64 * 34.0;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.1}" y2="{ly}" stroke="{c}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{name} F</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
        let ly2 = ly + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly2}" x2="{:.1}" y2="{ly2}" stroke="{c}" stroke-width="2" stroke-dasharray="6 4"/><text x="{:.1}" y="{:.1}">{name} F_o</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly2 + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Collects `summary.json` from each run directory and writes
/// `report.csv` and `report.svg` into `out_dir`. Runs without a summary
/// are listed in [`ReportOutcome::skipped`].
pub fn emit_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<ReportOutcome> {
    let mut summaries = Vec::new();
    let mut skipped = Vec::new();
    for dir in run_dirs {
        match Summary::read(&dir.join("summary.json")) {
            Ok(s) => summaries.push(s),
            Err(e) => {
                log::warn!("skipping {}: {e}", dir.display());
                skipped.push(dir.clone());
            }
        }
    }
    if summaries.is_empty() {
        return Err(Error::Data("no run directory contains a summary.json".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let csv = report_csv(&summaries);
    let rows = csv.lines().count() - 1;
    let csv_path = out_dir.join("report.csv");
    let svg_path = out_dir.join("report.svg");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&svg_path, report_svg(&summaries)).map_err(|e| Error::io(&svg_path, e))?;
    Ok(ReportOutcome {
        csv_path,
        svg_path,
        rows,
        skipped,
    })
}
