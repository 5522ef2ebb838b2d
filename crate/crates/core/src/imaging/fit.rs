use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use super::{ImagingError, OdImage};

pub const FIT_MAX_ITERATIONS: usize = 200;

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

// Parameter order: amplitude, center y, center z, σy, σz, offset.
const A: usize = 0;
const Y0: usize = 1;
const Z0: usize = 2;
const SY: usize = 3;
const SZ: usize = 4;
const C: usize = 5;

/// Result of the axis-aligned 2D Gaussian fit. Coordinates are pixels:
/// `y` along columns, `z` along rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub center: [f64; 2],
    pub widths: [f64; 2],
    pub amplitude: f64,
    pub offset: f64,
    pub center_uncertainty: [f64; 2],
    pub residual_skewness: [f64; 2],
    /// Amplitude over offset; infinite when the offset is not positive.
    pub snr: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Problem<'a> {
    image: &'a OdImage,
}

impl Problem<'_> {
    fn profiles(p: &Vec6, n: usize, center: usize, width: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let d = (i as f64 - p[center]) / p[width];
                (-0.5 * d * d).exp()
            })
            .collect()
    }

    fn cost(&self, p: &Vec6) -> f64 {
        let (w, h) = (self.image.width(), self.image.height());
        let gy = Self::profiles(p, w, Y0, SY);
        let gz = Self::profiles(p, h, Z0, SZ);
        let mut sum = 0.0;
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if self.image.is_clamped(i) {
                    continue;
                }
                let r = p[A] * gy[col] * gz[row] + p[C] - self.image.od[i] as f64;
                sum += r * r;
            }
        }
        sum
    }

    /// Returns `(JᵀJ, Jᵀr, Σr², N)`.
    fn normal_equations(&self, p: &Vec6) -> (Mat6, Vec6, f64, usize) {
        let (w, h) = (self.image.width(), self.image.height());
        let gy = Self::profiles(p, w, Y0, SY);
        let gz = Self::profiles(p, h, Z0, SZ);
        let mut jtj = Mat6::zeros();
        let mut jtr = Vec6::zeros();
        let mut cost = 0.0;
        let mut n = 0;
        for row in 0..h {
            let dz = row as f64 - p[Z0];
            for col in 0..w {
                let i = row * w + col;
                if self.image.is_clamped(i) {
                    continue;
                }
                let dy = col as f64 - p[Y0];
                let g = gy[col] * gz[row];
                let ag = p[A] * g;
                let r = ag + p[C] - self.image.od[i] as f64;
                let j = Vec6::new(
                    g,
                    ag * dy / (p[SY] * p[SY]),
                    ag * dz / (p[SZ] * p[SZ]),
                    ag * dy * dy / (p[SY] * p[SY] * p[SY]),
                    ag * dz * dz / (p[SZ] * p[SZ] * p[SZ]),
                    1.0,
                );
                jtj.syger(1.0, &j, &j, 1.0);
                jtr += j * r;
                cost += r * r;
                n += 1;
            }
        }
        jtj.fill_upper_triangle_with_lower_triangle();
        (jtj, jtr, cost, n)
    }

    /// Moment-based start: offset from the frame border, then centroid and
    /// width of each offset-subtracted marginal.
    fn initial_guess(&self) -> Result<Vec6, ImagingError> {
        let (w, h) = (self.image.width(), self.image.height());
        let mut border: Vec<f64> = (0..w * h)
            .filter(|&i| {
                let (col, row) = (i % w, i / w);
                (col == 0 || row == 0 || col == w - 1 || row == h - 1) && !self.image.is_clamped(i)
            })
            .map(|i| self.image.od[i] as f64)
            .collect();
        border.sort_by(f64::total_cmp);
        let offset = border.get(border.len() / 2).copied().unwrap_or(0.0);

        let mut cols = vec![0.0; w];
        let mut rows = vec![0.0; h];
        for i in (0..w * h).filter(|&i| !self.image.is_clamped(i)) {
            let v = self.image.od[i] as f64 - offset;
            cols[i % w] += v;
            rows[i / w] += v;
        }
        let (Some((y0, wy, peak_y)), Some((z0, wz, _))) = (marginal_moments(&cols), marginal_moments(&rows)) else {
            return Err(ImagingError::FitDegenerate("image has no structure above its offset".into()));
        };
        let amplitude = peak_y / ((2.0 * std::f64::consts::PI).sqrt() * wz);
        Ok(Vec6::new(amplitude, y0, z0, wy, wz, offset))
    }
}

/// Fits `A·exp(−(y−y₀)²/2σy² − (z−z₀)²/2σz²) + C` by Levenberg–Marquardt
/// from a moment-based start. Clamped pixels are left out; all others have
/// unit weight.
pub fn fit_gaussian(image: &OdImage) -> Result<GaussianFit, ImagingError> {
    if image.od.iter().any(|v| !v.is_finite()) {
        return Err(ImagingError::InvalidParameter("optical density must be finite".into()));
    }
    let problem = Problem { image };
    let mut p = problem.initial_guess()?;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    let (mut jtj, mut jtr, mut cost, mut n) = problem.normal_equations(&p);
    while iterations < FIT_MAX_ITERATIONS {
        iterations += 1;
        let mut damped = jtj;
        for k in 0..6 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= 10.0;
            if lambda > 1e16 {
                return Err(ImagingError::FitDegenerate("normal equations are not positive definite".into()));
            }
            continue;
        };
        let step = chol.solve(&(-jtr));
        let trial = p + step;
        let trial_cost = if trial[SY] > 0.0 && trial[SZ] > 0.0 { problem.cost(&trial) } else { f64::INFINITY };
        if trial_cost.is_finite() && trial_cost <= cost {
            let small = (0..6).all(|k| step[k].abs() <= 1e-10 * (p[k].abs() + 1e-6));
            p = trial;
            lambda = (lambda * 0.1).max(1e-12);
            (jtj, jtr, cost, n) = problem.normal_equations(&p);
            if small {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // No downhill step is left at machine precision.
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(ImagingError::NoConvergence { iterations });
    }
    if !(p[A] > 0.0) {
        return Err(ImagingError::FitDegenerate(format!("fitted amplitude {} is not positive", p[A])));
    }
    let covariance = jtj
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| ImagingError::FitDegenerate("normal equations are not positive definite".into()))?;
    let dof = n.saturating_sub(6).max(1) as f64;
    let variance = cost / dof;
    let skewness = marginal_skewness(image, &p);
    Ok(GaussianFit {
        center: [p[Y0], p[Z0]],
        widths: [p[SY], p[SZ]],
        amplitude: p[A],
        offset: p[C],
        center_uncertainty: [(variance * covariance[(Y0, Y0)]).sqrt(), (variance * covariance[(Z0, Z0)]).sqrt()],
        residual_skewness: skewness,
        snr: if p[C] > 0.0 { p[A] / p[C] } else { f64::INFINITY },
        converged,
        iterations,
    })
}

/// Centroid, width and peak of a marginal from its samples above 20% of the
/// peak. A Gaussian cut at that level has 0.79 of its full RMS width.
fn marginal_moments(marginal: &[f64]) -> Option<(f64, f64, f64)> {
    let peak = marginal.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return None;
    }
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (i, &m) in marginal.iter().enumerate().filter(|(_, &m)| m > 0.2 * peak) {
        s0 += m;
        s1 += m * i as f64;
        s2 += m * (i as f64) * (i as f64);
    }
    let mean = s1 / s0;
    let width = ((s2 / s0 - mean * mean).max(0.0).sqrt() / 0.79).max(0.5);
    Some((mean, width, peak))
}

/// Third standardized moment of each offset-subtracted marginal, taken over
/// a window of ±4 fitted widths around the fitted centre so that far-wing
/// noise does not dominate the cubic lever arm.
fn marginal_skewness(image: &OdImage, p: &Vec6) -> [f64; 2] {
    let (w, h) = (image.width(), image.height());
    let window = |center: f64, width: f64, n: usize| {
        let lo = (center - 4.0 * width).floor().max(0.0) as usize;
        let hi = ((center + 4.0 * width).ceil().max(0.0) as usize).min(n - 1);
        lo..=hi
    };
    let cols_range = window(p[Y0], p[SY], w);
    let rows_range = window(p[Z0], p[SZ], h);
    let mut cols = vec![0.0; w];
    let mut rows = vec![0.0; h];
    for row in rows_range.clone() {
        for col in cols_range.clone() {
            let i = row * w + col;
            if image.is_clamped(i) {
                continue;
            }
            let v = image.od[i] as f64 - p[C];
            cols[col] += v;
            rows[row] += v;
        }
    }
    [standardized_third_moment(&cols[cols_range]), standardized_third_moment(&rows[rows_range])]
}

fn standardized_third_moment(weights: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return f64::NAN;
    }
    let mean = weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / total;
    let (mut m2, mut m3) = (0.0, 0.0);
    for (i, w) in weights.iter().enumerate() {
        let d = i as f64 - mean;
        m2 += w * d * d;
        m3 += w * d * d * d;
    }
    m2 /= total;
    m3 /= total;
    if m2 > 0.0 {
        m3 / m2.powf(1.5)
    } else {
        f64::NAN
    }
}
