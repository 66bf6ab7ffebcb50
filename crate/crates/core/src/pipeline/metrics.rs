//! Per-step error metrics, the output low-pass filter and the metric CSV
//! layout.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `‖reference − predicted‖₂` over the three channels.
pub fn h2_norm(reference: [f64; 3], predicted: [f64; 3]) -> f64 {
    let d = [
        reference[0] - predicted[0],
        reference[1] - predicted[1],
        reference[2] - predicted[2],
    ];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// First-order exponential filter `out = (1−a)·prev + a·raw`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowPassState {
    prev: [f64; 3],
    a: f64,
}

impl LowPassState {
    pub fn new(a: f64) -> Result<Self> {
        Self::with_previous(a, [0.0; 3])
    }

    pub fn with_previous(a: f64, prev: [f64; 3]) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::invalid("filter_alpha", format!("must lie in [0, 1], got {a}")));
        }
        Ok(LowPassState { prev, a })
    }

    pub fn coefficient(&self) -> f64 {
        self.a
    }

    pub fn previous(&self) -> [f64; 3] {
        self.prev
    }

    pub fn apply(&mut self, raw: [f64; 3]) -> [f64; 3] {
        let a = self.a;
        let out = [
            (1.0 - a) * self.prev[0] + a * raw[0],
            (1.0 - a) * self.prev[1] + a * raw[1],
            (1.0 - a) * self.prev[2] + a * raw[2],
        ];
        self.prev = out;
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub t: f64,
    pub stage: String,
    pub h2: f64,
    /// `reference − predicted` per channel.
    pub err: [f64; 3],
    /// Number of updates applied before this step's prediction.
    pub update_index: u64,
    pub innovation_norm: f64,
    pub trace_p: f64,
    pub reference: [f64; 3],
    pub predicted: [f64; 3],
}

impl MetricRecord {
    pub fn new(t: f64, stage: &str, reference: [f64; 3], predicted: [f64; 3]) -> Self {
        MetricRecord {
            t,
            stage: stage.to_string(),
            h2: h2_norm(reference, predicted),
            err: [
                reference[0] - predicted[0],
                reference[1] - predicted[1],
                reference[2] - predicted[2],
            ],
            update_index: 0,
            innovation_norm: 0.0,
            trace_p: 0.0,
            reference,
            predicted,
        }
    }
}

/// One tuner update as seen by the diagnostics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub update_index: u64,
    /// Time of the newest history record used.
    pub t: f64,
    pub innovation_norm: f64,
    pub delta_norm: f64,
    pub trace_p: f64,
    pub s_condition: f64,
    pub p_jitter: f64,
    pub s_jitter: f64,
    pub elapsed_ms: f64,
}

pub const METRIC_COLUMNS: [&str; 15] = [
    "t",
    "stage",
    "h2",
    "err_x",
    "err_y",
    "err_theta_or_z",
    "update_index",
    "innovation_norm",
    "trace_P",
    "ref_x",
    "ref_y",
    "ref_theta_or_z",
    "pred_x",
    "pred_y",
    "pred_theta_or_z",
];

pub const UPDATE_COLUMNS: [&str; 9] = [
    "update_index",
    "innovation_norm",
    "trace_P",
    "elapsed_ms",
    "t",
    "delta_norm",
    "s_condition",
    "p_jitter",
    "s_jitter",
];

pub fn write_metrics<W: Write>(w: W, records: &[MetricRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRIC_COLUMNS).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.t.to_string(), r.stage.clone(), r.h2.to_string()];
        row.extend(r.err.iter().map(f64::to_string));
        row.push(r.update_index.to_string());
        row.push(r.innovation_norm.to_string());
        row.push(r.trace_p.to_string());
        row.extend(r.reference.iter().map(f64::to_string));
        row.extend(r.predicted.iter().map(f64::to_string));
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("metric log is missing column `{name}`")))
    };
    let idx: Vec<usize> = METRIC_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let f = |i: usize| -> Result<f64> {
            let raw = row.get(idx[i]).unwrap_or("");
            raw.parse()
                .map_err(|_| Error::Format(format!("row {}: bad `{}` value {raw:?}", line + 2, METRIC_COLUMNS[i])))
        };
        out.push(MetricRecord {
            t: f(0)?,
            stage: row.get(idx[1]).unwrap_or("").to_string(),
            h2: f(2)?,
            err: [f(3)?, f(4)?, f(5)?],
            update_index: f(6)? as u64,
            innovation_norm: f(7)?,
            trace_p: f(8)?,
            reference: [f(9)?, f(10)?, f(11)?],
            predicted: [f(12)?, f(13)?, f(14)?],
        });
    }
    Ok(out)
}

pub fn write_updates<W: Write>(w: W, records: &[UpdateRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(UPDATE_COLUMNS).map_err(csv_err)?;
    for r in records {
        out.write_record([
            r.update_index.to_string(),
            r.innovation_norm.to_string(),
            r.trace_p.to_string(),
            r.elapsed_ms.to_string(),
            r.t.to_string(),
            r.delta_norm.to_string(),
            r.s_condition.to_string(),
            r.p_jitter.to_string(),
            r.s_jitter.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Aggregate view of one stage's metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub records: usize,
    pub mean_h2: f64,
    pub leading_mean_h2: f64,
    pub trailing_mean_h2: f64,
    pub final_quarter_mean_h2: f64,
    pub updates: u64,
    /// Start of the first block after which every block mean stays within
    /// twice the trailing mean.
    pub convergence_time: Option<f64>,
}

fn mean(v: &[MetricRecord]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().map(|r| r.h2).sum::<f64>() / v.len() as f64
}

/// Leading/trailing windows are the first/last 10% of records (at least one).
pub fn leading_trailing(records: &[MetricRecord]) -> (f64, f64) {
    let n = records.len();
    let w = (n / 10).max(1).min(n);
    (mean(&records[..w]), mean(&records[n - w..]))
}

impl MetricSummary {
    pub fn from_records(records: &[MetricRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("metrics", "empty metric log"));
        }
        let n = records.len();
        let (leading, trailing) = leading_trailing(records);
        let quarter = (n / 4).max(1);
        let block = (n / 50).max(1);
        let blocks: Vec<&[MetricRecord]> = records.chunks(block).collect();
        let bound = 2.0 * trailing + f64::EPSILON;
        let mut first_ok = None;
        for (i, b) in blocks.iter().enumerate().rev() {
            if mean(b) <= bound {
                first_ok = Some(i);
            } else {
                break;
            }
        }
        Ok(MetricSummary {
            records: n,
            mean_h2: mean(records),
            leading_mean_h2: leading,
            trailing_mean_h2: trailing,
            final_quarter_mean_h2: mean(&records[n - quarter..]),
            updates: records.last().map(|r| r.update_index).unwrap_or(0),
            convergence_time: first_ok.map(|i| blocks[i][0].t),
        })
    }
}
