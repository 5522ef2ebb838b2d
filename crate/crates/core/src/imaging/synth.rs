use serde::{Deserialize, Serialize};

use super::{ImagingError, ImagingGeometry, OdImage};
use crate::magnetostatics::Vec3;
use crate::trap::{AtomSpecies, ExternalField, FieldState, QuadrupoleParams, BOLTZMANN};

/// Placeholder cloud temperature; the experiment does not report one. At
/// 10 μK and 2.5 G/mm the cloud fits well inside the default 200 px frame.
pub const DEFAULT_TEMPERATURE_UK: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudModel {
    pub species: AtomSpecies,
    pub temperature_uk: f64,
    pub peak_od: f64,
    pub field_state: FieldState,
    pub include_gravity: bool,
}

impl Default for CloudModel {
    fn default() -> Self {
        CloudModel {
            species: AtomSpecies::rb87(),
            temperature_uk: DEFAULT_TEMPERATURE_UK,
            peak_od: 1.0,
            field_state: FieldState::new(QuadrupoleParams::new(2.5), ExternalField::homogeneous(Vec3::zeros())),
            include_gravity: false,
        }
    }
}

impl CloudModel {
    fn thermal_energy(&self) -> f64 {
        BOLTZMANN * self.temperature_uk * 1e-6
    }

    /// Inverse field scale of the Boltzmann factor, 1/G.
    pub fn zeeman_over_kt(&self) -> f64 {
        self.species.zeeman_per_gauss() / self.thermal_energy()
    }

    /// Inverse length scale of the gravitational Boltzmann factor, 1/mm.
    pub fn weight_over_kt(&self) -> f64 {
        self.species.weight_per_mm() / self.thermal_energy()
    }
}

/// `x·K₁(x)` for `x ≥ 0`, from `K₁(x) = ∫₀^∞ exp(−x cosh t) cosh t dt`.
/// The trapezoidal rule converges geometrically on this integrand; a step of
/// 1/8 is far below double precision.
pub fn bessel_k1_scaled(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    const STEP: f64 = 0.125;
    let mut sum = 0.5 * (-x).exp();
    let mut t = STEP;
    loop {
        let c = t.cosh();
        let term = (-x * c).exp() * c;
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        t += STEP;
    }
    x * sum * STEP
}

/// Synthesizes the OD image of a thermal cloud in the linear trap field.
///
/// The column density along the line of sight is the exact line integral of
/// `exp(−U/kT)` for the potential `μ|M(r − r₀)| + m g z`, with `M` the total
/// linear field matrix and `r₀` its zero, scaled so the brightest pixel is
/// `peak_od`. The zero sits at the frame centre shifted by `center_offset_px`
/// (columns, rows).
pub fn synthesize_od(
    model: &CloudModel,
    geometry: &ImagingGeometry,
    center_offset_px: (f64, f64),
) -> Result<OdImage, ImagingError> {
    geometry.validate()?;
    if !(model.temperature_uk > 0.0) || !(model.peak_od > 0.0) {
        return Err(ImagingError::InvalidParameter("temperature and peak OD must be positive".into()));
    }
    let q = model.field_state.quadrupole;
    if q.strength == 0.0 || (model.include_gravity && !model.species.is_trapped_by(q)) {
        return Err(ImagingError::UntrappedCloud);
    }
    let m = model.field_state.linear_matrix();
    let s = m.transpose() * m;
    let lambda = model.zeeman_over_kt();
    let gamma = if model.include_gravity { model.weight_over_kt() } else { 0.0 };

    let mut sight = Vec3::zeros();
    sight[geometry.line_of_sight_axis()] = 1.0;
    let transverse = geometry.transverse_axis();
    let ss = sight.dot(&(s * sight));
    let k = lambda * ss.sqrt();
    let (cx, cy) = geometry.center();
    let scale = geometry.mm_per_pixel();

    let mut column = Vec::with_capacity(geometry.width * geometry.height);
    for row in 0..geometry.height {
        let z = (row as f64 - cy - center_offset_px.1) * scale;
        for col in 0..geometry.width {
            let mut p = Vec3::zeros();
            p[transverse] = (col as f64 - cx - center_offset_px.0) * scale;
            p.z = z;
            let sp = s * p;
            let cross = sight.dot(&sp);
            let rho = ((p.dot(&sp) - cross * cross / ss) / ss).max(0.0).sqrt();
            // ∫ exp(−k √(v² + ρ²)) dv = 2ρ K₁(kρ) = 2 (kρ) K₁(kρ) / k
            let magnetic = 2.0 * bessel_k1_scaled(k * rho) / k;
            column.push(magnetic * (-gamma * z).exp());
        }
    }
    let peak = column.iter().cloned().fold(0.0, f64::max);
    let od = column.iter().map(|&c| (model.peak_od * c / peak) as f32).collect();
    OdImage::new(od, *geometry)
}
