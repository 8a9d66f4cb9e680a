//! Spectral diagnostics of trained weights.
//!
//! For every step weight `W_j` the report gives the largest real part of the
//! eigenvalues of its operator matrix (`bcirc(W_j)` for the circulant
//! algebra) and the largest `|Re λ|` of the leapfrog system
//! `[[0, K], [-K^T, 0]]`. Weights whose dense operator would exceed the
//! materialization cap are skipped with a note. CSV columns:
//! `block,kind,step,max_real_eig,antisymmetric_max_abs_real,note`, with empty
//! cells for skipped values.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use tnn_core::checkpoint::{load_network, step_weights};
use tnn_core::spectrum::{antisymmetric_spectrum, operator_spectrum};
use tnn_core::{Checkpoint, Error, Tensor3, Transform};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnoseRow {
    pub block: usize,
    pub kind: &'static str,
    pub step: usize,
    pub max_real_eig: Option<f64>,
    pub antisymmetric_max_abs_real: Option<f64>,
    pub note: String,
}

fn measure(r: tnn_core::Result<f64>, what: &str, notes: &mut Vec<String>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(e @ (Error::MaterializationCap { .. } | Error::DimensionMismatch { .. })) => {
            notes.push(format!("{what} skipped: {e}"));
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

fn diagnose_weight(w: &Tensor3, t: &Transform) -> Result<(Option<f64>, Option<f64>, String)> {
    let mut notes = Vec::new();
    let max_real = measure(
        operator_spectrum(w, t).map(|s| s.max_real()),
        "operator",
        &mut notes,
    )?;
    let anti = measure(
        antisymmetric_spectrum(w, t).map(|s| s.max_abs_real()),
        "antisymmetric system",
        &mut notes,
    )?;
    Ok((max_real, anti, notes.join("; ")))
}

/// Spectra of every step weight of a checkpoint.
pub fn diagnose(checkpoint: &Path) -> Result<Vec<DiagnoseRow>> {
    let ck = Checkpoint::read(checkpoint)?;
    let net = load_network(&ck)?;
    let mut rows = Vec::new();
    for (block, kind, weights) in step_weights(&net) {
        for (step, w) in weights.into_iter().enumerate() {
            let (max_real_eig, antisymmetric_max_abs_real, note) =
                diagnose_weight(w, &net.transform)?;
            rows.push(DiagnoseRow {
                block,
                kind,
                step,
                max_real_eig,
                antisymmetric_max_abs_real,
                note,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[DiagnoseRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One human-readable line per row.
pub fn format_row(r: &DiagnoseRow) -> String {
    let show = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3e}"));
    let mut line = format!(
        "block {} ({}) step {}: max Re(eig) = {}, antisymmetric max |Re(eig)| = {}",
        r.block,
        r.kind,
        r.step,
        show(r.max_real_eig),
        show(r.antisymmetric_max_abs_real)
    );
    if !r.note.is_empty() {
        line.push_str(&format!(" [{}]", r.note));
    }
    line
}
