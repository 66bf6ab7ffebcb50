//! `restune plot`: SVG charts and downsampled CSVs of metric logs.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use restune_core::pipeline::metrics::read_metrics;
use restune_core::pipeline::MetricRecord;

use crate::artifacts::RunManifest;

/// Evenly spaced indices into `n` items, first and last included, at most
/// `max` of them.
pub fn downsample_indices(n: usize, max: usize) -> Vec<usize> {
    if n == 0 || max == 0 {
        return Vec::new();
    }
    if n <= max {
        return (0..n).collect();
    }
    if max == 1 {
        return vec![n - 1];
    }
    let mut out: Vec<usize> = (0..max)
        .map(|k| ((k as f64) * (n - 1) as f64 / (max - 1) as f64).round() as usize)
        .collect();
    out.dedup();
    out
}

pub struct Series<'a> {
    pub name: &'a str,
    pub colour: &'a str,
    pub points: Vec<(f64, f64)>,
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 36.0;
const PAD_B: f64 = 46.0;

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 0.0 { lo.abs() * 0.1 } else { 1.0 };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A standalone line chart.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x0, x1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = W - PAD_L - PAD_R;
    let ph = H - PAD_T - PAD_B;
    let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| PAD_T + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.2}" y1="{PAD_T}" x2="{px:.2}" y2="{:.2}" stroke="#ddd"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{xv:.3}</text>"##,
            PAD_T + ph,
            PAD_T + ph + 15.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{PAD_L}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.4}</text>"##,
            PAD_L + pw,
            PAD_L - 5.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        PAD_L + pw / 2.0,
        H - 8.0,
        esc(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        PAD_T + ph / 2.0,
        PAD_T + ph / 2.0,
        esc(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        if pts.len() == 1 {
            let (x, y) = pts[0].split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3" fill="{}"/>"#, ser.colour);
        } else if !pts.is_empty() {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                ser.colour,
                pts.join(" ")
            );
        }
        let ly = PAD_T + 14.0 + 14.0 * i as f64;
        let lx = PAD_L + pw - 120.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            ser.colour,
            lx + 24.0,
            esc(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn metric_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if let Ok(m) = RunManifest::read(dir) {
        return Ok(m.stages.iter().map(|s| dir.join(&s.files.metrics)).collect());
    }
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("metrics_") && n.ends_with(".csv"))
        })
        .collect();
    v.sort();
    Ok(v)
}

fn write_downsampled(path: &Path, log: &[MetricRecord], idx: &[usize]) -> Result<()> {
    let mut out = csv::Writer::from_writer(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    out.write_record(["t", "h2", "err_x", "err_y", "err_theta_or_z", "update_index"])?;
    for &i in idx {
        let r = &log[i];
        out.write_record([
            r.t.to_string(),
            r.h2.to_string(),
            r.err[0].to_string(),
            r.err[1].to_string(),
            r.err[2].to_string(),
            r.update_index.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `<stem>_h2.svg`, `<stem>_errors.svg` and `<stem>_downsampled.csv`
/// per metric log into `out`; returns the files written.
pub fn cmd_plot(dir: &Path, out: &Path, max_points: usize) -> Result<Vec<PathBuf>> {
    if max_points == 0 {
        bail!("--max-points must be >= 1");
    }
    let files = metric_files(dir)?;
    if files.is_empty() {
        bail!("no metric logs in {}", dir.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for f in files {
        if !f.is_file() {
            bail!("missing artifact {}", f.display());
        }
        let log = read_metrics(File::open(&f)?).with_context(|| format!("reading {}", f.display()))?;
        if log.is_empty() {
            bail!("empty metric log {}", f.display());
        }
        let stem = f
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("metrics")
            .trim_start_matches("metrics_")
            .to_string();
        let idx = downsample_indices(log.len(), max_points);
        let pick = |g: &dyn Fn(&MetricRecord) -> f64| idx.iter().map(|&i| (log[i].t, g(&log[i]))).collect::<Vec<_>>();
        let stage = &log[0].stage;

        let h2 = line_chart(
            &format!("H2 norm, {stage}"),
            "t [s]",
            "||x_ref - x_pred||",
            &[Series {
                name: "h2",
                colour: "#1f77b4",
                points: pick(&|r| r.h2),
            }],
        );
        let errs = line_chart(
            &format!("Per-channel error, {stage}"),
            "t [s]",
            "reference - predicted",
            &[
                Series {
                    name: "x",
                    colour: "#1f77b4",
                    points: pick(&|r| r.err[0]),
                },
                Series {
                    name: "y",
                    colour: "#ff7f0e",
                    points: pick(&|r| r.err[1]),
                },
                Series {
                    name: "theta / z",
                    colour: "#2ca02c",
                    points: pick(&|r| r.err[2]),
                },
            ],
        );
        for (name, body) in [(format!("{stem}_h2.svg"), h2), (format!("{stem}_errors.svg"), errs)] {
            let p = out.join(name);
            File::create(&p)
                .and_then(|mut fh| fh.write_all(body.as_bytes()))
                .with_context(|| format!("writing {}", p.display()))?;
            written.push(p);
        }
        let p = out.join(format!("{stem}_downsampled.csv"));
        write_downsampled(&p, &log, &idx)?;
        written.push(p);
    }
    Ok(written)
}
