//! Plain-text writers for result tables. Floats go out with 17 significant
//! digits so a parse gives back the same bits.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::diagnostics::HistogramDensity;
use crate::error::{Error, Result};

/// `v` in scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// CSV with a header row; each record is a list of pre-formatted fields.
pub fn write_csv(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_histogram(path: &Path, h: &HistogramDensity) -> Result<()> {
    let rows = h
        .bins()
        .into_iter()
        .zip(&h.masses)
        .map(|((lo, hi), m)| vec![fmt17(lo), fmt17(hi), fmt17(*m)]);
    write_csv(path, &["bin_lo", "bin_hi", "density"], rows)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// File name fragment for a probability level, e.g. `0.995` -> `0.995`.
pub fn tau_label(tau: f64) -> String {
    let s = format!("{tau}");
    s.replace('-', "m")
}
