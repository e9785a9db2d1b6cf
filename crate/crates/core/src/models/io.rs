//! CSV round trip for observation sets: one response column plus numeric covariates.

use std::path::Path;

use super::ObservationSet;
use crate::error::{Error, Result};
use crate::output::{self, fmt17};

/// Reads a headed CSV; `response` names the response column and every other
/// column becomes a covariate, in file order. The intercept is added here.
pub fn read_observations(path: &Path, response: &str) -> Result<(ObservationSet, Vec<String>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let y_col = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::Ingestion {
            row: None,
            message: format!(
                "no column named '{response}' (columns: {})",
                headers.join(", ")
            ),
        })?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != y_col)
        .map(|(_, h)| h.clone())
        .collect();
    let mut ys = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        if record.len() != headers.len() {
            return Err(Error::Ingestion {
                row: Some(line),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let mut k = 0;
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Ingestion {
                row: Some(line),
                message: format!("column '{}': '{field}' is not a number", headers[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row: Some(line),
                    message: format!("column '{}' is not finite", headers[j]),
                });
            }
            if j == y_col {
                ys.push(v);
            } else {
                xs[k].push(v);
                k += 1;
            }
        }
    }
    if ys.is_empty() {
        return Err(Error::Ingestion {
            row: None,
            message: "file has no data rows".into(),
        });
    }
    Ok((ObservationSet::from_covariates(&xs, ys, None)?, names))
}

/// Writes `y, x1, ..., xk` with 17 significant digits.
pub fn write_observations(path: &Path, data: &ObservationSet) -> Result<()> {
    let k = data.p() - 1;
    let mut header = vec!["y".to_string()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..data.n()).map(|i| {
        let mut row = vec![fmt17(data.response[i])];
        row.extend((0..k).map(|j| fmt17(data.design[(i, j + 1)])));
        row
    });
    output::write_csv(path, &header, rows)
}
