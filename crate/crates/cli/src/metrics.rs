//! Per-epoch metrics CSV.
//!
//! Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `epoch` | 1-based epoch index |
//! | `split` | `train` (running values over the epoch's batches) or `test` (evaluation after the epoch) |
//! | `loss` | objective per sample |
//! | `accuracy` | fraction of argmax predictions equal to the label, in `[0, 1]` |
//! | `wall_seconds` | seconds since training started |
//! | `max_weight_delta` | largest `‖W_j − W_{j−1}‖_F` over consecutive steps |
//! | `safeguard_residual_max` | largest `|column sum − 1|` seen by the probability safeguard |
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! row parses back to an identical [`MetricsRow`].

use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_seconds: f64,
    pub max_weight_delta: f64,
    pub safeguard_residual_max: f64,
}

pub const HEADER: [&str; 7] = [
    "epoch",
    "split",
    "loss",
    "accuracy",
    "wall_seconds",
    "max_weight_delta",
    "safeguard_residual_max",
];

/// Appends rows to a metrics file, flushing after each one.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    last_epoch: usize,
}

impl MetricsWriter {
    /// Creates (or truncates) the file and writes the header.
    pub fn create(path: &Path) -> Result<Self> {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut inner = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(file);
        inner.write_record(HEADER)?;
        inner.flush()?;
        Ok(MetricsWriter {
            inner,
            last_epoch: 0,
        })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        if !(0.0..=1.0).contains(&row.accuracy) {
            bail!("accuracy {} outside [0, 1]", row.accuracy);
        }
        if row.epoch < self.last_epoch {
            bail!("epoch {} after epoch {}", row.epoch, self.last_epoch);
        }
        self.last_epoch = row.epoch;
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        bail!("{}: unexpected header {header:?}", path.display());
    }
    r.deserialize()
        .map(|row| row.with_context(|| format!("bad row in {}", path.display())))
        .collect()
}
