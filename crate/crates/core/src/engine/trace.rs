use std::io::Write;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::Result;

pub const TRACE_FORMAT: &str = "train-trace/1";

/// Metrics at one recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub loss_per_behavior: Vec<f64>,
    /// `‖ΔW‖`.
    pub norm_dw: f64,
    /// `‖W_U(t) − W_U(0)‖` = `√2 ‖ΔW‖` (rank-one displacement).
    pub norm_matrix: f64,
    /// Boundary cosine to each behavior's reference direction; `None` while the boundary is zero.
    pub cos_per_behavior: Vec<Option<f64>>,
    pub acc_per_behavior: Vec<f64>,
    pub acc_pooled: f64,
    /// Seconds since training started. Not exported.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub format: String,
    pub config: TrainConfig,
    pub behaviors: Vec<String>,
    pub records: Vec<TraceRecord>,
    /// `ΔW` at each recorded step when `config.record_weights` is set.
    #[serde(skip)]
    pub weights: Vec<Vec<f64>>,
}

fn num(x: f64) -> String {
    // Display prints the shortest string that parses back to the same f64
    format!("{x}")
}

impl TrainTrace {
    pub fn new(config: TrainConfig, behaviors: Vec<String>) -> Self {
        Self { format: TRACE_FORMAT.into(), config, behaviors, records: Vec::new(), weights: Vec::new() }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn at_step(&self, step: usize) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.step == step)
    }

    /// Loss column of behavior `i`, as `(step, loss)`.
    pub fn behavior_loss(&self, i: usize) -> Vec<(usize, f64)> {
        self.records.iter().map(|r| (r.step, r.loss_per_behavior[i])).collect()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut cols = vec!["step".to_string(), "loss".to_string()];
        cols.extend(self.behaviors.iter().map(|b| format!("loss_{b}")));
        cols.push("norm_dw".into());
        cols.push("norm_matrix".into());
        cols.extend(self.behaviors.iter().map(|b| format!("cos_{b}")));
        cols.extend(self.behaviors.iter().map(|b| format!("acc_{b}")));
        cols
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.csv_header()).map_err(csv_io)?;
        for r in &self.records {
            let mut row = vec![r.step.to_string(), num(r.loss)];
            row.extend(r.loss_per_behavior.iter().map(|x| num(*x)));
            row.push(num(r.norm_dw));
            row.push(num(r.norm_matrix));
            row.extend(r.cos_per_behavior.iter().map(|c| c.map(num).unwrap_or_default()));
            row.extend(r.acc_per_behavior.iter().map(|x| num(*x)));
            out.write_record(&row).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn csv_io(e: csv::Error) -> crate::error::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => crate::error::Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
