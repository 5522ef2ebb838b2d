//! Non-overlapping Allan deviation of shot series and the conversion of a
//! position uncertainty into a field uncertainty.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Near-logarithmic ensemble sizes, clipped to what the data supports.
pub const DEFAULT_SIZES: [usize; 11] = [1, 2, 3, 5, 8, 13, 22, 36, 60, 100, 200];
pub const DEFAULT_PLATEAU_WINDOW: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("ensemble size {n} gives {groups} complete groups from {len} samples; at least 2 are needed")]
    TooFewGroups { n: usize, groups: usize, len: usize },
    #[error("curve has {0} entries; at least 5 are needed")]
    TooFewEntries(usize),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for StatsError {
    fn from(e: csv::Error) -> Self {
        StatsError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    Y,
    Z,
}

impl Coordinate {
    pub fn column(&self) -> &'static str {
        match self {
            Coordinate::Y => "y_px",
            Coordinate::Z => "z_px",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSeries {
    pub values: Vec<f64>,
    pub coordinate: Coordinate,
}

impl PositionSeries {
    pub fn new(values: Vec<f64>, coordinate: Coordinate) -> Result<Self, StatsError> {
        if values.len() < 2 {
            return Err(StatsError::InvalidSeries(format!("{} samples; at least 2 are needed", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::InvalidSeries(format!("sample {i} is not finite")));
        }
        Ok(PositionSeries { values, coordinate })
    }

    /// Reads one coordinate from a shot-record CSV (column `y_px` or `z_px`,
    /// skipping rows whose `qc` is not `pass`), or from a plain single-column
    /// CSV with or without a header.
    pub fn read_csv<R: Read>(reader: R, coordinate: Coordinate) -> Result<Self, StatsError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows = rdr.records();
        let Some(first) = rows.next().transpose()? else {
            return Err(StatsError::InvalidSeries("empty file".into()));
        };
        let mut values = Vec::new();
        let parse = |s: &str| s.parse::<f64>().map_err(|_| StatsError::InvalidSeries(format!("not a number: {s:?}")));
        match first.get(0).map(parse) {
            Some(Ok(v)) => {
                // Headerless single column.
                values.push(v);
                for row in rows {
                    values.push(parse(row?.get(0).unwrap_or_default())?);
                }
            }
            _ => {
                let column = first
                    .iter()
                    .position(|h| h == coordinate.column())
                    .or_else(|| (first.len() == 1).then_some(0))
                    .ok_or_else(|| StatsError::InvalidSeries(format!("no {} column", coordinate.column())))?;
                let qc = first.iter().position(|h| h == "qc");
                for row in rows {
                    let row = row?;
                    if qc.is_some_and(|q| row.get(q) != Some("pass")) {
                        continue;
                    }
                    values.push(parse(row.get(column).unwrap_or_default())?);
                }
            }
        }
        PositionSeries::new(values, coordinate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanEntry {
    pub n: usize,
    pub sigma_px: f64,
    pub n_groups: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanCurve {
    pub coordinate: Coordinate,
    pub entries: Vec<AllanEntry>,
}

impl AllanCurve {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), StatsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n", "sigma_px", "n_groups"])?;
        for e in &self.entries {
            w.write_record([e.n.to_string(), e.sigma_px.to_string(), e.n_groups.to_string()])?;
        }
        w.flush().map_err(|e| StatsError::Csv(e.to_string()))
    }
}

/// Sample (n−1) standard deviation.
pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// The default ladder restricted to sizes with at least two groups.
pub fn default_sizes(len: usize) -> Vec<usize> {
    DEFAULT_SIZES.iter().copied().filter(|&n| len / n >= 2).collect()
}

/// Non-overlapping Allan deviation: for each `n`, the sample standard
/// deviation of the means of consecutive disjoint groups of `n` samples.
/// Trailing samples that do not fill a group are dropped.
pub fn allan_deviation(series: &PositionSeries, sizes: &[usize]) -> Result<AllanCurve, StatsError> {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let len = series.values.len();
    let mut entries = Vec::with_capacity(sorted.len());
    for n in sorted {
        let groups = len.checked_div(n).unwrap_or(0);
        if groups < 2 {
            return Err(StatsError::TooFewGroups { n, groups, len });
        }
        let means: Vec<f64> =
            series.values.chunks_exact(n).map(|chunk| chunk.iter().sum::<f64>() / n as f64).collect();
        entries.push(AllanEntry { n, sigma_px: sample_std(&means), n_groups: groups });
    }
    Ok(AllanCurve { coordinate: series.coordinate, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    pub floor_px: f64,
    /// Sample standard deviation of σ over the window (0 for one entry).
    pub spread_px: f64,
    pub entries_used: usize,
}

/// Mean σ over the largest-n fraction `plateau_window` of the curve.
pub fn noise_floor(curve: &AllanCurve, plateau_window: f64) -> Result<NoiseFloor, StatsError> {
    let len = curve.entries.len();
    if len < 5 {
        return Err(StatsError::TooFewEntries(len));
    }
    if !(plateau_window > 0.0 && plateau_window <= 1.0) {
        return Err(StatsError::InvalidSeries(format!("plateau window {plateau_window} outside (0, 1]")));
    }
    let used = ((len as f64 * plateau_window).ceil() as usize).clamp(1, len);
    let sigmas: Vec<f64> = curve.entries[len - used..].iter().map(|e| e.sigma_px).collect();
    let floor = sigmas.iter().sum::<f64>() / used as f64;
    let spread = if used > 1 { sample_std(&sigmas) } else { 0.0 };
    Ok(NoiseFloor { floor_px: floor, spread_px: spread, entries_used: used })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldUncertainty {
    pub delta_position_um: f64,
    pub gradient_g_per_mm: f64,
    pub delta_b_gauss: f64,
}

/// `ΔB = (∂B/∂r)·Δr`, with Δr in μm and the gradient in G/mm.
pub fn field_uncertainty(delta_position_um: f64, gradient_g_per_mm: f64) -> FieldUncertainty {
    FieldUncertainty {
        delta_position_um,
        gradient_g_per_mm,
        delta_b_gauss: gradient_g_per_mm.abs() * delta_position_um * 1e-3,
    }
}
