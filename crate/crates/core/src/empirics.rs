//! Daily return series: ingestion, left-tail events over normalized time and
//! mode-partitioned variances of the event times.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, HistogramDensity, ModePartition, MultiModeVariance, TailSide};
use crate::error::{Error, Result};
use crate::models::dist::student_t_upper_quantile;
use crate::output::{self, fmt17};
use crate::rng;

const DATE_FORMATS: &[&str] = &["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y", "%Y%m%d"];

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    DATE_FORMATS
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(s.trim(), f).ok())
}

/// Log returns with their dates and normalized times `t_i = i / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    /// Date of each return (the later of the two prices).
    pub dates: Vec<NaiveDate>,
    /// `T + 1` levels when built from prices.
    pub prices: Option<Vec<f64>>,
    pub returns: Vec<f64>,
    pub t: Vec<f64>,
}

fn normalized_times(len: usize) -> Vec<f64> {
    (1..=len).map(|i| i as f64 / len as f64).collect()
}

impl ReturnSeries {
    pub fn from_prices(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if prices.len() < 2 || dates.len() != prices.len() {
            return Err(Error::Ingestion {
                row: None,
                message: format!("need at least two prices with dates, got {}", prices.len()),
            });
        }
        check_dates(&dates)?;
        if let Some(i) = prices.iter().position(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Ingestion {
                row: Some(i + 2),
                message: format!("price {} is not positive", prices[i]),
            });
        }
        let returns: Vec<f64> = prices.windows(2).map(|p| (p[1] / p[0]).ln()).collect();
        Ok(ReturnSeries {
            t: normalized_times(returns.len()),
            dates: dates[1..].to_vec(),
            prices: Some(prices),
            returns,
        })
    }

    pub fn from_returns(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if returns.is_empty() || dates.len() != returns.len() {
            return Err(Error::Ingestion {
                row: None,
                message: format!("need at least one return with dates, got {}", returns.len()),
            });
        }
        check_dates(&dates)?;
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::Ingestion {
                row: Some(i + 2),
                message: "return is not finite".into(),
            });
        }
        Ok(ReturnSeries {
            t: normalized_times(returns.len()),
            dates,
            prices: None,
            returns,
        })
    }

    /// `T`, the number of returns.
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn date_range(&self) -> (NaiveDate, NaiveDate) {
        (self.dates[0], self.dates[self.len() - 1])
    }
}

fn check_dates(dates: &[NaiveDate]) -> Result<()> {
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] <= w[0] {
            let what = if w[1] == w[0] {
                "duplicate"
            } else {
                "out-of-order"
            };
            return Err(Error::Ingestion {
                row: Some(i + 3),
                message: format!("{what} date {} after {}", w[1], w[0]),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Prices,
    Returns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub date_col: String,
    pub value_col: String,
    pub kind: ValueKind,
}

/// Reads a headed CSV of dates and either prices or returns. Row numbers in
/// errors count the header as line 1.
pub fn load_price_series(path: &Path, mapping: &ColumnMapping) -> Result<ReturnSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingestion {
                row: None,
                message: format!(
                    "no column named '{name}' (columns: {})",
                    headers.iter().collect::<Vec<_>>().join(", ")
                ),
            })
    };
    let (dc, vc) = (col(&mapping.date_col)?, col(&mapping.value_col)?);
    let mut dates = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |c: usize| record.get(c).unwrap_or("");
        let date = parse_date(field(dc)).ok_or_else(|| Error::Ingestion {
            row: Some(line),
            message: format!("cannot parse date '{}'", field(dc)),
        })?;
        let value: f64 = field(vc).parse().map_err(|_| Error::Ingestion {
            row: Some(line),
            message: format!("'{}' is not a number", field(vc)),
        })?;
        dates.push(date);
        values.push(value);
    }
    match mapping.kind {
        ValueKind::Prices => ReturnSeries::from_prices(dates, values),
        ValueKind::Returns => ReturnSeries::from_returns(dates, values),
    }
}

/// Returns dated within `[start, end]`, with `t` renormalized to the subperiod.
pub fn subperiod(series: &ReturnSeries, start: NaiveDate, end: NaiveDate) -> Result<ReturnSeries> {
    if start > end {
        return Err(Error::Domain(format!(
            "subperiod start {start} is after end {end}"
        )));
    }
    let a = series.dates.partition_point(|d| *d < start);
    let b = series.dates.partition_point(|d| *d <= end);
    if a >= b {
        return Err(Error::Domain(format!(
            "no returns dated between {start} and {end}"
        )));
    }
    Ok(ReturnSeries {
        dates: series.dates[a..b].to_vec(),
        prices: series.prices.as_ref().map(|p| p[a..=b].to_vec()),
        returns: series.returns[a..b].to_vec(),
        t: normalized_times(b - a),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PresetEntry {
    #[serde(default)]
    description: String,
    modes: Option<Vec<f64>>,
    extends: Option<String>,
    #[serde(default)]
    add: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PresetFile {
    presets: BTreeMap<String, PresetEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModePreset {
    pub name: String,
    pub description: String,
    pub modes: Vec<f64>,
}

/// Named mode sets, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpecLibrary {
    pub presets: Vec<ModePreset>,
}

pub const BUNDLED_PRESETS: &str = include_str!("../presets/modes.toml");

impl ModeSpecLibrary {
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED_PRESETS).expect("bundled presets parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: PresetFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("mode presets: {e}")))?;
        let mut presets = Vec::new();
        for name in file.presets.keys() {
            let modes = resolve_preset(&file.presets, name, 0)?;
            if let Some(m) = modes.iter().find(|m| !(0.0..=1.0).contains(*m)) {
                return Err(Error::Config(format!(
                    "preset '{name}': mode {m} outside [0, 1]"
                )));
            }
            presets.push(ModePreset {
                name: name.clone(),
                description: file.presets[name].description.clone(),
                modes,
            });
        }
        Ok(ModeSpecLibrary { presets })
    }

    pub fn get(&self, name: &str) -> Option<&ModePreset> {
        self.presets.iter().find(|p| p.name == name)
    }

    /// A preset name or a comma-separated list of mode locations.
    pub fn resolve(&self, spec: &str) -> Result<ModePartition> {
        if let Some(p) = self.get(spec) {
            return ModePartition::from_modes(p.modes.clone());
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            spec.split(',').map(|s| s.trim().parse::<f64>()).collect();
        match parsed {
            Ok(modes) => ModePartition::from_modes(modes),
            Err(_) => Err(Error::Config(format!(
                "'{spec}' is neither a mode list nor a preset ({})",
                self.presets
                    .iter()
                    .map(|p| p.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))),
        }
    }
}

fn resolve_preset(
    all: &BTreeMap<String, PresetEntry>,
    name: &str,
    depth: usize,
) -> Result<Vec<f64>> {
    if depth > all.len() {
        return Err(Error::Config(format!("preset '{name}' extends itself")));
    }
    let entry = all
        .get(name)
        .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
    let mut modes = match (&entry.modes, &entry.extends) {
        (Some(m), None) => m.clone(),
        (None, Some(parent)) => resolve_preset(all, parent, depth + 1)?,
        _ => {
            return Err(Error::Config(format!(
                "preset '{name}' needs exactly one of 'modes' or 'extends'"
            )))
        }
    };
    modes.extend(&entry.add);
    modes.sort_by(f64::total_cmp);
    modes.dedup();
    Ok(modes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftTailRecord {
    pub tau: f64,
    /// `Q_tau` of the returns.
    pub quantile: f64,
    /// Number of returns `<= Q_tau`.
    pub n_observations: usize,
    pub density: HistogramDensity,
    pub var_km: MultiModeVariance,
    /// `Var_KM` of all `t` under the same partition.
    pub unconditional_var_km: f64,
    pub ratio: f64,
    /// Plain variance of all `t`.
    pub plain_unconditional: f64,
    pub plain_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub t_len: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub modes: ModePartition,
    pub h: f64,
    pub records: Vec<LeftTailRecord>,
    pub warnings: Vec<String>,
}

/// Smallest expected tail count before a small-sample warning.
pub const SMALL_TAIL: f64 = 10.0;

/// Density of event times and `Var_KM` for the loss events `{Y <= Q_tau}`.
pub fn left_tail_report(
    series: &ReturnSeries,
    taus: &[f64],
    modes: &ModePartition,
    h: f64,
) -> Result<EmpiricalReport> {
    if series.is_empty() {
        return Err(Error::Domain("return series is empty".into()));
    }
    let all = vec![true; series.len()];
    let unconditional = diagnostics::multimode_variance(&series.t, &all, modes)?.total;
    let plain = diagnostics::multimode_variance(&series.t, &all, &ModePartition::single())?.total;
    let mut warnings = Vec::new();
    let mut records = Vec::with_capacity(taus.len());
    for &tau in taus {
        let expected = tau * series.len() as f64;
        if expected < SMALL_TAIL {
            let msg = format!("tau {tau}: only about {expected:.1} tail events expected");
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let (q, mask) = diagnostics::tail_mask(&series.returns, tau, TailSide::Left)?;
        let n_observations = mask.iter().filter(|&&m| m).count();
        if n_observations == 0 {
            return Err(Error::InsufficientTailData {
                needed: 1,
                found: 0,
            });
        }
        let density =
            diagnostics::histogram_density(&series.t, &mask, TailSide::Left.mass(tau), h)?;
        let var_km = diagnostics::multimode_variance(&series.t, &mask, modes)?;
        warnings.extend(var_km.warnings.iter().map(|m| format!("tau {tau}: {m}")));
        records.push(LeftTailRecord {
            tau,
            quantile: q,
            n_observations,
            density,
            ratio: var_km.total / unconditional,
            plain_ratio: var_km.total / plain,
            var_km,
            unconditional_var_km: unconditional,
            plain_unconditional: plain,
        });
    }
    let (first_date, last_date) = series.date_range();
    Ok(EmpiricalReport {
        t_len: series.len(),
        first_date,
        last_date,
        modes: modes.clone(),
        h,
        records,
        warnings,
    })
}

/// Writes `report.json` and one `density_tau_<tau>.csv` per tau.
pub fn write_report(report: &EmpiricalReport, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    output::ensure_dir(dir)?;
    let mut written = Vec::new();
    for r in &report.records {
        let path = dir.join(format!("density_tau_{}.csv", output::tau_label(r.tau)));
        output::write_histogram(&path, &r.density)?;
        written.push(path);
    }
    let path = dir.join("report.json");
    output::write_json(&path, report)?;
    written.push(path);
    Ok(written)
}

/// `T + 1` business-day prices driven by i.i.d. Student-t(4) returns with
/// scale 0.01, starting at 100 on `start`.
pub fn synthetic_prices(t_len: usize, seed: u64, start: NaiveDate) -> (Vec<NaiveDate>, Vec<f64>) {
    let mut returns = Vec::with_capacity(t_len);
    for (b, _, len) in rng::blocks(t_len) {
        let mut r = rng::stream(seed, b);
        returns
            .extend((0..len).map(|_| 0.01 * student_t_upper_quantile(rng::open_unit(&mut r), 4.0)));
    }
    let mut dates = Vec::with_capacity(t_len + 1);
    let mut d = start;
    while dates.len() <= t_len {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    let mut prices = Vec::with_capacity(t_len + 1);
    let mut log_p: f64 = 100f64.ln();
    prices.push(100.0);
    for r in returns {
        log_p += r;
        prices.push(log_p.exp());
    }
    (dates, prices)
}

pub fn write_price_csv(path: &Path, dates: &[NaiveDate], prices: &[f64]) -> Result<()> {
    let rows = dates
        .iter()
        .zip(prices)
        .map(|(d, p)| vec![d.format("%Y-%m-%d").to_string(), fmt17(*p)]);
    output::write_csv(path, &["date", "close"], rows)
}
