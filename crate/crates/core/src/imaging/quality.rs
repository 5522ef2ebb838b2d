use serde::{Deserialize, Serialize};

use super::GaussianFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityThresholds {
    pub max_center_uncertainty_px: f64,
    pub max_abs_skewness: f64,
    pub min_snr: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        QualityThresholds { max_center_uncertainty_px: 0.1, max_abs_skewness: 1.0, min_snr: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcReason {
    NotConverged,
    CenterUncertainty,
    Skewness,
    Snr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub passed: bool,
    pub reasons: Vec<QcReason>,
}

/// Applies the three per-frame gates: centre uncertainty, residual skewness
/// and amplitude-to-offset ratio. Every violated gate is reported. NaN
/// values fail their gate.
pub fn quality_gate(fit: &GaussianFit, thresholds: &QualityThresholds) -> QualityVerdict {
    let mut reasons = Vec::new();
    if !fit.converged {
        reasons.push(QcReason::NotConverged);
    }
    if !fit.center_uncertainty.iter().all(|&u| u < thresholds.max_center_uncertainty_px) {
        reasons.push(QcReason::CenterUncertainty);
    }
    if !fit.residual_skewness.iter().all(|&s| s.abs() < thresholds.max_abs_skewness) {
        reasons.push(QcReason::Skewness);
    }
    if !(fit.snr > thresholds.min_snr) {
        reasons.push(QcReason::Snr);
    }
    QualityVerdict { passed: reasons.is_empty(), reasons }
}
