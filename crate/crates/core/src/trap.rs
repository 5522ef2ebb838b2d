//! Quadrupole trap model: field, potential, the field zero displaced by
//! external fields, and a numerical zero finder for arbitrary coil fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::magnetostatics::{central_jacobian, CompiledAssembly, FieldError, Mat3, Vec3, MOT};

pub const BOHR_MAGNETON: f64 = 9.2740100783e-24;
pub const RB87_MASS: f64 = 1.44316060e-25;
pub const STANDARD_GRAVITY: f64 = 9.80665;
pub const BOLTZMANN: f64 = 1.380649e-23;
pub const TESLA_PER_GAUSS: f64 = 1e-4;
pub const METRE_PER_MM: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrapError {
    #[error("quadrupole strength is zero")]
    ZeroQuadrupole,
    #[error("trap matrix is singular (condition number {condition:e}); the external gradient cancels the quadrupole")]
    SingularTrap { condition: f64 },
    #[error("zero search did not converge after {iterations} iterations (residual {residual_gauss:e} G)")]
    NoConvergence { iterations: usize, residual_gauss: f64 },
    #[error("finite-difference Jacobian is singular at {position:?}")]
    SingularJacobian { position: [f64; 3] },
    #[error("external gradient is not divergence-free (trace {trace:e} G/mm)")]
    NonPhysicalGradient { trace: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    pub mass_kg: f64,
    /// g_F · m_F
    pub g_factor_product: f64,
    /// J/T
    pub bohr_magneton: f64,
    /// m/s²
    pub gravity: f64,
}

impl AtomSpecies {
    /// ⁸⁷Rb in |F=2, m_F=2⟩.
    pub fn rb87() -> Self {
        AtomSpecies { mass_kg: RB87_MASS, g_factor_product: 1.0, bohr_magneton: BOHR_MAGNETON, gravity: STANDARD_GRAVITY }
    }

    /// Zeeman energy per Gauss of field modulus (J/G).
    pub fn zeeman_per_gauss(&self) -> f64 {
        self.bohr_magneton * self.g_factor_product * TESLA_PER_GAUSS
    }

    /// Gravitational energy per mm of height (J/mm).
    pub fn weight_per_mm(&self) -> f64 {
        self.mass_kg * self.gravity * METRE_PER_MM
    }

    /// Whether the axial magnetic force `2|Q|` beats gravity, so that the
    /// potential minimum stays at the field zero.
    pub fn is_trapped_by(&self, q: QuadrupoleParams) -> bool {
        2.0 * q.strength.abs() * self.zeeman_per_gauss() > self.weight_per_mm()
    }
}

impl Default for AtomSpecies {
    fn default() -> Self {
        Self::rb87()
    }
}

/// Ideal quadrupole `B = Q (x, y, −2z)`. The sign of Q is the polarity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadrupoleParams {
    /// G/mm
    pub strength: f64,
}

impl QuadrupoleParams {
    pub fn new(strength: f64) -> Self {
        QuadrupoleParams { strength }
    }

    pub fn polarity(&self) -> f64 {
        self.strength.signum()
    }

    pub fn flipped(&self) -> Self {
        QuadrupoleParams { strength: -self.strength }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&Vec3::new(self.strength, self.strength, -2.0 * self.strength))
    }
}

/// External field, linearized about the trap centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExternalField {
    /// Field at the centre, G.
    pub homogeneous: Vec3,
    /// `∂B_i/∂x_j` at the centre, G/mm.
    pub gradient: Mat3,
}

impl ExternalField {
    pub fn homogeneous(b: Vec3) -> Self {
        ExternalField { homogeneous: b, gradient: Mat3::zeros() }
    }

    pub fn with_gradient(b: Vec3, gradient: Mat3) -> Self {
        ExternalField { homogeneous: b, gradient }
    }

    /// Rejects non-finite values and, unless `allow_divergence`, gradients
    /// whose trace exceeds 1e-6 G/mm.
    pub fn validate(&self, allow_divergence: bool) -> Result<(), TrapError> {
        if !self.homogeneous.iter().chain(self.gradient.iter()).all(|v| v.is_finite()) {
            return Err(TrapError::InvalidParameter("external field has non-finite components".into()));
        }
        let trace = self.gradient.trace();
        if !allow_divergence && trace.abs() >= 1e-6 {
            return Err(TrapError::NonPhysicalGradient { trace });
        }
        Ok(())
    }

    pub fn at(&self, r: &Vec3) -> Vec3 {
        self.homogeneous + self.gradient * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub quadrupole: QuadrupoleParams,
    pub external: ExternalField,
}

impl FieldState {
    pub fn new(quadrupole: QuadrupoleParams, external: ExternalField) -> Self {
        FieldState { quadrupole, external }
    }

    pub fn field_at(&self, r: &Vec3) -> Vec3 {
        quadrupole_field(self.quadrupole, r) + self.external.at(r)
    }

    /// Total linear part `Q̲ + ∇B_ext`.
    pub fn linear_matrix(&self) -> Mat3 {
        self.quadrupole.matrix() + self.external.gradient
    }

    pub fn zero(&self) -> Result<Vec3, TrapError> {
        displaced_zero_inhomogeneous(self.quadrupole, &self.external)
    }
}

pub fn quadrupole_field(q: QuadrupoleParams, at: &Vec3) -> Vec3 {
    Vec3::new(at.x, at.y, -2.0 * at.z) * q.strength
}

/// Field zero under a homogeneous external field: `(−Bx/Q, −By/Q, Bz/2Q)`.
pub fn displaced_zero_homogeneous(q: QuadrupoleParams, b_ext: &Vec3) -> Result<Vec3, TrapError> {
    if q.strength == 0.0 {
        return Err(TrapError::ZeroQuadrupole);
    }
    Ok(Vec3::new(-b_ext.x / q.strength, -b_ext.y / q.strength, b_ext.z / (2.0 * q.strength)))
}

/// Condition number of `Q̲ + G` above which the zero is treated as undefined.
/// Beyond it a 1e-8 relative error in the gradient moves the zero by more
/// than the field itself.
pub const MAX_TRAP_CONDITION: f64 = 1e8;

/// Field zero of `Q̲ r + B₀ + G r`, i.e. the solution of `(Q̲ + G) r₀ = −B₀`.
pub fn displaced_zero_inhomogeneous(q: QuadrupoleParams, ext: &ExternalField) -> Result<Vec3, TrapError> {
    if q.strength == 0.0 {
        return Err(TrapError::ZeroQuadrupole);
    }
    if ext.gradient == Mat3::zeros() {
        return displaced_zero_homogeneous(q, &ext.homogeneous);
    }
    let m = q.matrix() + ext.gradient;
    let sv = m.singular_values();
    // Measured against the quadrupole scale too, so that a gradient which
    // cancels Q̲ almost entirely is caught even when all singular values
    // are equally small.
    let (smax, smin) = (sv.max().max(2.0 * q.strength.abs()), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition < MAX_TRAP_CONDITION) {
        return Err(TrapError::SingularTrap { condition });
    }
    m.lu().solve(&(-ext.homogeneous)).ok_or(TrapError::SingularTrap { condition })
}

/// Trap potential (J) `μ_B g_F m_F |B|`, plus `m g z` when `include_gravity`.
pub fn potential(species: &AtomSpecies, state: &FieldState, at: &Vec3, include_gravity: bool) -> f64 {
    let magnetic = species.zeeman_per_gauss() * state.field_at(at).norm();
    if include_gravity {
        magnetic + species.weight_per_mm() * at.z
    } else {
        magnetic
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Convergence threshold on |B|, G.
    pub tolerance_gauss: f64,
    pub max_iterations: usize,
    /// Finite-difference step for the Jacobian, mm.
    pub jacobian_step_mm: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tolerance_gauss: 1e-9, max_iterations: 100, jacobian_step_mm: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSolution {
    /// mm
    pub position: Vec3,
    /// |B| at `position`, G.
    pub residual_gauss: f64,
    pub iterations: usize,
}

/// Damped Newton search for a zero of a vector field. The step is halved
/// until the residual norm decreases.
pub fn find_zero_numerical<F>(mut field: F, initial_guess: Vec3, options: NewtonOptions) -> Result<ZeroSolution, TrapError>
where
    F: FnMut(&Vec3) -> Result<Vec3, FieldError>,
{
    let mut r = initial_guess;
    let mut b = field(&r)?;
    let mut residual = b.norm();
    let mut iterations = 0;
    while !(residual < options.tolerance_gauss) {
        if iterations >= options.max_iterations || !residual.is_finite() {
            return Err(TrapError::NoConvergence { iterations, residual_gauss: residual });
        }
        let jac = central_jacobian(&mut field, &r, options.jacobian_step_mm)?;
        let step = jac.lu().solve(&(-b)).filter(|s| s.iter().all(|v| v.is_finite())).ok_or(
            TrapError::SingularJacobian { position: [r.x, r.y, r.z] },
        )?;
        let mut scale = 1.0;
        loop {
            let trial = r + step * scale;
            let bt = field(&trial)?;
            let rt = bt.norm();
            if rt < residual {
                r = trial;
                b = bt;
                residual = rt;
                break;
            }
            scale *= 0.5;
            if scale < 1e-12 {
                return Err(TrapError::NoConvergence { iterations, residual_gauss: residual });
            }
        }
        iterations += 1;
    }
    Ok(ZeroSolution { position: r, residual_gauss: residual, iterations })
}

/// Fractional turn-count difference between the two MOT coils that makes a
/// ±0.3 mA common-mode excursion at 4.7 A move the zero by 0.5 μm.
/// Reproduced by `calibrate_winding_asymmetry` in the tests.
pub const CALIBRATED_WINDING_ASYMMETRY: f64 = 0.5025;

/// Response of the trap zero to a common-mode change of the quadrupole
/// current.
///
/// The two coils of the pair carry `(1 ± asymmetry/2)` times their nominal
/// ampere-turns. At the nominal current the residual homogeneous field this
/// imbalance produces is assumed compensated by fixed bias fields, so the
/// zero sits at the centre; a current change then leaves part of the
/// imbalance uncompensated and the zero moves axially.
#[derive(Debug, Clone, PartialEq)]
pub struct CommonModeModel {
    pub link: String,
    pub nominal_current: f64,
    pub winding_asymmetry: f64,
}

impl Default for CommonModeModel {
    fn default() -> Self {
        CommonModeModel { link: MOT.to_string(), nominal_current: 4.7, winding_asymmetry: CALIBRATED_WINDING_ASYMMETRY }
    }
}

impl CommonModeModel {
    fn member_currents(&self, compiled: &CompiledAssembly, amps: f64) -> Result<Vec<f64>, TrapError> {
        let terms = compiled.logical_terms(&self.link)?;
        if terms.len() != 2 {
            return Err(TrapError::InvalidParameter(format!("{} is not a coil pair", self.link)));
        }
        let mut currents = vec![0.0; compiled.member_names().count()];
        let weights = [1.0 + 0.5 * self.winding_asymmetry, 1.0 - 0.5 * self.winding_asymmetry];
        for (&(idx, sign), w) in terms.iter().zip(weights) {
            currents[idx] += sign * amps * w;
        }
        Ok(currents)
    }

    /// Numerically located field zero (mm) with the pair at `nominal + delta`.
    pub fn zero_at(&self, compiled: &CompiledAssembly, delta: f64) -> Result<ZeroSolution, TrapError> {
        let nominal = self.member_currents(compiled, self.nominal_current)?;
        let compensation = -compiled.field_from_member_currents(&nominal, &Vec3::zeros())?;
        let currents = self.member_currents(compiled, self.nominal_current + delta)?;
        find_zero_numerical(
            |r| Ok(compiled.field_from_member_currents(&currents, r)? + compensation),
            Vec3::zeros(),
            NewtonOptions::default(),
        )
    }

    /// Axial zero displacement (μm) caused by `delta` amperes.
    pub fn axial_shift_um(&self, compiled: &CompiledAssembly, delta: f64) -> Result<f64, TrapError> {
        let base = self.zero_at(compiled, 0.0)?.position.z;
        let moved = self.zero_at(compiled, delta)?.position.z;
        Ok((moved - base) * 1e3)
    }
}

/// Axial zero displacement (μm) for a common-mode change `delta` (A) of the
/// MOT current around `nominal_current`, using the default asymmetry.
pub fn current_sensitivity(compiled: &CompiledAssembly, nominal_current: f64, delta: f64) -> Result<f64, TrapError> {
    CommonModeModel { nominal_current, ..CommonModeModel::default() }.axial_shift_um(compiled, delta)
}

/// Secant search for the winding asymmetry at which `delta` produces an
/// axial shift of magnitude `target_um`.
pub fn calibrate_winding_asymmetry(
    compiled: &CompiledAssembly,
    nominal_current: f64,
    delta: f64,
    target_um: f64,
) -> Result<f64, TrapError> {
    let shift = |asym: f64| -> Result<f64, TrapError> {
        let model = CommonModeModel { nominal_current, winding_asymmetry: asym, ..CommonModeModel::default() };
        Ok(model.axial_shift_um(compiled, delta)?.abs() - target_um)
    };
    let (mut a0, mut a1) = (0.005, 0.05);
    let (mut f0, mut f1) = (shift(a0)?, shift(a1)?);
    for _ in 0..30 {
        if (f1 - f0).abs() < 1e-15 {
            break;
        }
        let a2 = a1 - f1 * (a1 - a0) / (f1 - f0);
        (a0, f0) = (a1, f1);
        a1 = a2;
        f1 = shift(a1)?;
        if f1.abs() < 1e-9 * target_um.abs().max(1e-12) {
            return Ok(a1);
        }
    }
    Err(TrapError::NoConvergence { iterations: 30, residual_gauss: f1 })
}
