//! `restune compare`: per-stage H2 statistics of two runs side by side.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use restune_core::pipeline::metrics::read_metrics;
use restune_core::pipeline::MetricSummary;

use crate::artifacts::RunManifest;

#[derive(Debug, Clone, PartialEq)]
pub struct Side {
    pub mean: f64,
    pub trailing: f64,
    pub convergence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub stage: String,
    pub a: Option<Side>,
    pub b: Option<Side>,
}

impl CompareRow {
    pub fn delta_mean(&self) -> Option<f64> {
        Some(self.b.as_ref()?.mean - self.a.as_ref()?.mean)
    }

    pub fn delta_trailing(&self) -> Option<f64> {
        Some(self.b.as_ref()?.trailing - self.a.as_ref()?.trailing)
    }

    pub fn delta_convergence(&self) -> Option<f64> {
        Some(self.b.as_ref()?.convergence? - self.a.as_ref()?.convergence?)
    }
}

fn load(dir: &Path) -> Result<Vec<(String, Side)>> {
    let m = RunManifest::read(dir)?;
    if !m.is_complete() {
        let failed = m
            .stages
            .iter()
            .find(|s| s.status != "complete")
            .map_or_else(|| "unknown".to_string(), |s| s.name.clone());
        bail!("run {} is incomplete (stage `{failed}` failed)", dir.display());
    }
    m.stages
        .iter()
        .map(|s| {
            let path = dir.join(&s.files.metrics);
            if !path.is_file() {
                bail!("missing artifact {}", path.display());
            }
            let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
            let log = read_metrics(f).with_context(|| format!("reading {}", path.display()))?;
            let sum = MetricSummary::from_records(&log).with_context(|| format!("summarizing {}", path.display()))?;
            Ok((
                s.name.clone(),
                Side {
                    mean: sum.mean_h2,
                    trailing: sum.trailing_mean_h2,
                    convergence: sum.convergence_time,
                },
            ))
        })
        .collect()
}

/// Stages are matched by name in run A's order; unmatched stages of either
/// run get a one-sided row.
pub fn compare_runs(a: &Path, b: &Path) -> Result<Vec<CompareRow>> {
    let sa = load(a)?;
    let mut sb = load(b)?;
    let mut rows = Vec::new();
    for (name, side) in sa {
        let other = sb.iter().position(|(n, _)| *n == name).map(|i| sb.remove(i).1);
        rows.push(CompareRow {
            stage: name,
            a: Some(side),
            b: other,
        });
    }
    rows.extend(sb.into_iter().map(|(name, side)| CompareRow {
        stage: name,
        a: None,
        b: Some(side),
    }));
    Ok(rows)
}

const COLUMNS: [&str; 10] = [
    "stage",
    "mean_h2_a",
    "mean_h2_b",
    "delta_mean_h2",
    "trailing_h2_a",
    "trailing_h2_b",
    "delta_trailing_h2",
    "convergence_t_a",
    "convergence_t_b",
    "delta_convergence_t",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fields(r: &CompareRow) -> [Option<f64>; 9] {
    [
        r.a.as_ref().map(|s| s.mean),
        r.b.as_ref().map(|s| s.mean),
        r.delta_mean(),
        r.a.as_ref().map(|s| s.trailing),
        r.b.as_ref().map(|s| s.trailing),
        r.delta_trailing(),
        r.a.as_ref().and_then(|s| s.convergence),
        r.b.as_ref().and_then(|s| s.convergence),
        r.delta_convergence(),
    ]
}

pub fn write_csv<W: Write>(w: W, rows: &[CompareRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(COLUMNS)?;
    for r in rows {
        let mut rec = vec![r.stage.clone()];
        rec.extend(fields(r).into_iter().map(cell));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn table(rows: &[CompareRow]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
    let mut grid: Vec<Vec<String>> = vec![COLUMNS.iter().map(|c| c.to_string()).collect()];
    for r in rows {
        let mut line = vec![r.stage.clone()];
        line.extend(fields(r).into_iter().map(fmt));
        grid.push(line);
    }
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|c| grid.iter().map(|row| row[c].len()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for (i, row) in grid.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
            .collect();
        s.push_str(cells.join("  ").trim_end());
        s.push('\n');
        if i == 0 {
            s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            s.push('\n');
        }
    }
    s
}
