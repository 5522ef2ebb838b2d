//! The polarity-reversal measurement: shots at alternating quadrupole
//! polarity over a grid of bias currents, cluster statistics, midpoints and
//! the compensation-current regression.

mod analysis;
mod config;
mod experiment;
mod records;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::ImagingError;
use crate::magnetostatics::FieldError;
use crate::trap::TrapError;

pub use analysis::{
    compensation_regression, infer_stray_field, rhombus, summarize_cluster, AxisCompensation, ClusterSummary,
    CompensationResult, RegressionWeighting, RhombusPoint, StrayFieldEstimate,
};
pub use config::{
    AssemblySource, BiasGrid, BiasPairs, CloudSettings, ExperimentConfig, GridLayout, ImagingSettings, NoiseSettings,
    QuadrupoleDrive,
};
pub use experiment::{compute_alpha, AlphaCoefficients, CampaignResult, Experiment, ShotSpec};
pub use records::{read_records_csv, write_records_csv, ShotRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("cluster has no usable shots")]
    EmptyCluster,
    #[error("records mix different conditions: {0}")]
    MixedCondition(String),
    #[error("regression design is degenerate: all currents are equal")]
    DegenerateDesign,
    #[error("regression slope is zero; no crossing exists")]
    ZeroSlope,
    #[error("α is zero on the {0} axis")]
    ZeroAlpha(Axis),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Trap(#[from] TrapError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

impl From<csv::Error> for ProtocolError {
    fn from(e: csv::Error) -> Self {
        ProtocolError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(&self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Bias-coil currents, A.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasSetting {
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
}

impl BiasSetting {
    pub fn new(ix: f64, iy: f64, iz: f64) -> Self {
        BiasSetting { ix, iy, iz }
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.ix,
            Axis::Y => self.iy,
            Axis::Z => self.iz,
        }
    }

    pub fn validate(&self, supply_limit_a: f64) -> Result<(), ProtocolError> {
        for (axis, i) in [("x", self.ix), ("y", self.iy), ("z", self.iz)] {
            if !i.is_finite() || i.abs() > supply_limit_a {
                return Err(ProtocolError::InvalidConfig(format!(
                    "bias current I{axis} = {i} A exceeds the {supply_limit_a} A supply limit"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Fast,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Mean,
    SigmaClipped,
}
