use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::experiment::AlphaCoefficients;
use super::{Axis, BiasSetting, Estimator, ProtocolError, ShotRecord};

const CLIP_SIGMAS: f64 = 3.0;
const CLIP_MAX_PASSES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub bias: BiasSetting,
    pub polarity: i8,
    pub mean_center: [f64; 2],
    /// Sample standard deviation over √n; absent for a single shot.
    pub center_stderr: Option<[f64; 2]>,
    pub n_shots: usize,
    /// Shots removed by sigma clipping.
    pub n_rejected: usize,
    pub estimator: Estimator,
}

fn mean_and_std(points: &[[f64; 2]]) -> ([f64; 2], Option<[f64; 2]>) {
    let n = points.len() as f64;
    let mean = [0, 1].map(|k| points.iter().map(|p| p[k]).sum::<f64>() / n);
    let std = (points.len() > 1)
        .then(|| [0, 1].map(|k| (points.iter().map(|p| (p[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()));
    (mean, std)
}

/// Mean (or 3σ-clipped mean, at most five passes) of the fitted centres of
/// QC-passing shots that share one bias setting and polarity. A shot is
/// clipped when either coordinate is more than 3σ from the current mean.
pub fn summarize_cluster(records: &[ShotRecord], estimator: Estimator) -> Result<ClusterSummary, ProtocolError> {
    let Some(first) = records.first() else {
        return Err(ProtocolError::EmptyCluster);
    };
    if let Some(other) = records.iter().find(|r| r.bias != first.bias || r.polarity != first.polarity) {
        return Err(ProtocolError::MixedCondition(format!(
            "shot {} ({:?}, {:+}) vs shot {} ({:?}, {:+})",
            first.shot_id, first.bias, first.polarity, other.shot_id, other.bias, other.polarity
        )));
    }
    let mut points: Vec<[f64; 2]> =
        records.iter().filter(|r| r.qc_passed).filter_map(|r| r.fitted_center).collect();
    if points.is_empty() {
        return Err(ProtocolError::EmptyCluster);
    }
    let total = points.len();
    if estimator == Estimator::SigmaClipped {
        for _ in 0..CLIP_MAX_PASSES {
            let (mean, std) = mean_and_std(&points);
            let Some(std) = std else { break };
            let kept: Vec<[f64; 2]> = points
                .iter()
                .copied()
                .filter(|p| (0..2).all(|k| (p[k] - mean[k]).abs() <= CLIP_SIGMAS * std[k]))
                .collect();
            if kept.len() == points.len() || kept.is_empty() {
                break;
            }
            points = kept;
        }
    }
    let (mean, std) = mean_and_std(&points);
    let n = points.len();
    Ok(ClusterSummary {
        bias: first.bias,
        polarity: first.polarity,
        mean_center: mean,
        center_stderr: std.map(|s| s.map(|v| v / (n as f64).sqrt())),
        n_shots: n,
        n_rejected: total - n,
        estimator,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhombusPoint {
    pub bias: BiasSetting,
    /// Average of the two polarity means, px.
    pub midpoint: [f64; 2],
    /// Positive-polarity mean minus negative-polarity mean, px.
    pub displacement: [f64; 2],
    pub midpoint_stderr: Option<[f64; 2]>,
    pub displacement_stderr: Option<[f64; 2]>,
}

pub fn rhombus(positive: &ClusterSummary, negative: &ClusterSummary) -> Result<RhombusPoint, ProtocolError> {
    if positive.polarity != 1 || negative.polarity != -1 {
        return Err(ProtocolError::MixedCondition(format!(
            "expected polarities (+1, −1), got ({:+}, {:+})",
            positive.polarity, negative.polarity
        )));
    }
    if positive.bias != negative.bias {
        return Err(ProtocolError::MixedCondition(format!("bias {:?} vs {:?}", positive.bias, negative.bias)));
    }
    let (p, n) = (positive.mean_center, negative.mean_center);
    let combined = match (positive.center_stderr, negative.center_stderr) {
        (Some(a), Some(b)) => Some([0, 1].map(|k| (a[k] * a[k] + b[k] * b[k]).sqrt())),
        _ => None,
    };
    Ok(RhombusPoint {
        bias: positive.bias,
        midpoint: [0.5 * (p[0] + n[0]), 0.5 * (p[1] + n[1])],
        displacement: [p[0] - n[0], p[1] - n[1]],
        midpoint_stderr: combined.map(|s| s.map(|v| 0.5 * v)),
        displacement_stderr: combined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressionWeighting {
    /// Ordinary least squares.
    #[default]
    Ols,
    /// Weights 1/stderr² of each displacement.
    Weighted,
}

/// Linear fit `Δ = intercept + slope·I` along one axis and its zero
/// crossing `I@ = −intercept/slope`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisCompensation {
    pub axis: Axis,
    pub current_at: f64,
    /// px/A
    pub slope: f64,
    pub intercept: f64,
    /// First-order propagated standard error of the crossing, A. Absent
    /// when the fit has no residual degrees of freedom.
    pub crossing_stderr: Option<f64>,
    /// Half-width of the two-sided 95% Student-t interval, A.
    pub crossing_ci95: Option<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompensationResult {
    pub y: Option<AxisCompensation>,
    pub z: Option<AxisCompensation>,
}

impl CompensationResult {
    pub fn get(&self, axis: Axis) -> Option<&AxisCompensation> {
        match axis {
            Axis::Y => self.y.as_ref(),
            Axis::Z => self.z.as_ref(),
            Axis::X => None,
        }
    }

    pub fn set(&mut self, axis: Axis, entry: AxisCompensation) {
        match axis {
            Axis::Y => self.y = Some(entry),
            Axis::Z => self.z = Some(entry),
            Axis::X => {}
        }
    }
}

/// Regresses the displacement along `axis` (y or z of the image) against the
/// bias current of the same axis.
pub fn compensation_regression(
    points: &[RhombusPoint],
    axis: Axis,
    weighting: RegressionWeighting,
) -> Result<AxisCompensation, ProtocolError> {
    let component = match axis {
        Axis::Y => 0,
        Axis::Z => 1,
        Axis::X => return Err(ProtocolError::InvalidConfig("the x axis is along the line of sight".into())),
    };
    let data: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|p| {
            let w = match (weighting, p.displacement_stderr) {
                (RegressionWeighting::Weighted, Some(s)) if s[component] > 0.0 => 1.0 / (s[component] * s[component]),
                _ => 1.0,
            };
            (p.bias.get(axis), p.displacement[component], w)
        })
        .collect();
    let n = data.len();
    if n < 2 || data.iter().all(|d| d.0 == data[0].0) {
        return Err(ProtocolError::DegenerateDesign);
    }
    let sw: f64 = data.iter().map(|d| d.2).sum();
    let xm = data.iter().map(|d| d.2 * d.0).sum::<f64>() / sw;
    let ym = data.iter().map(|d| d.2 * d.1).sum::<f64>() / sw;
    let sxx: f64 = data.iter().map(|d| d.2 * (d.0 - xm).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(ProtocolError::DegenerateDesign);
    }
    let sxy: f64 = data.iter().map(|d| d.2 * (d.0 - xm) * (d.1 - ym)).sum();
    let slope = sxy / sxx;
    if slope == 0.0 {
        return Err(ProtocolError::ZeroSlope);
    }
    let intercept = ym - slope * xm;
    let crossing = -intercept / slope;

    let dof = n as f64 - 2.0;
    let (stderr, ci95) = if dof > 0.0 {
        let rss: f64 = data.iter().map(|d| d.2 * (d.1 - intercept - slope * d.0).powi(2)).sum();
        let s2 = rss / dof;
        // Var(b) = s²/Sxx, Var(a) = s²(1/Sw + x̄²/Sxx), Cov(a, b) = −x̄ s²/Sxx.
        let var_b = s2 / sxx;
        let var_a = s2 * (1.0 / sw + xm * xm / sxx);
        let cov_ab = -xm * s2 / sxx;
        let var_x0 = (var_a + crossing * crossing * var_b + 2.0 * crossing * cov_ab) / (slope * slope);
        let se = var_x0.max(0.0).sqrt();
        let t = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom").inverse_cdf(0.975);
        (Some(se), Some(t * se))
    } else {
        (None, None)
    };
    Ok(AxisCompensation {
        axis,
        current_at: crossing,
        slope,
        intercept,
        crossing_stderr: stderr,
        crossing_ci95: ci95,
        n_points: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrayFieldEstimate {
    /// G
    pub b_y: Option<f64>,
    pub b_z: Option<f64>,
    pub b_y_stderr: Option<f64>,
    pub b_z_stderr: Option<f64>,
}

/// `B_stray,i = −α_i · I_i@` for each axis with a crossing.
pub fn infer_stray_field(
    result: &CompensationResult,
    alpha: &AlphaCoefficients,
) -> Result<StrayFieldEstimate, ProtocolError> {
    let mut estimate = StrayFieldEstimate { b_y: None, b_z: None, b_y_stderr: None, b_z_stderr: None };
    for axis in [Axis::Y, Axis::Z] {
        let Some(entry) = result.get(axis) else { continue };
        let a = alpha.get(axis);
        if a == 0.0 {
            return Err(ProtocolError::ZeroAlpha(axis));
        }
        let b = -a * entry.current_at;
        let se = entry.crossing_stderr.map(|s| a.abs() * s);
        match axis {
            Axis::Y => (estimate.b_y, estimate.b_y_stderr) = (Some(b), se),
            _ => (estimate.b_z, estimate.b_z_stderr) = (Some(b), se),
        }
    }
    Ok(estimate)
}
