//! The reference electromagnet configuration: in-vacuum MOT pair, the MOT+
//! bias pair just outside it, and two external rectangular compensation pairs.

use std::sync::OnceLock;

use super::assembly::{CoilAssembly, Drive, DEFAULT_GRADIENT_STEP_MM, DEFAULT_SEGMENTS_PER_LOOP};
use super::conductor::{Conductor, FilamentPolygon, VolumeCoil};
use super::{FieldError, Vec3};

/// Logical current of the anti-driven quadrupole pair.
pub const MOT: &str = "mot";
/// Logical current of the co-driven axial (z) bias pair.
pub const MOT_PLUS: &str = "mot_plus";
/// Logical current of the external x compensation pair.
pub const COMP_X: &str = "comp_x";
/// Logical current of the external y compensation pair.
pub const COMP_Y: &str = "comp_y";

/// Geometry of the reference assembly. All lengths in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceGeometry {
    pub coil_inner_radius: f64,
    pub coil_radial_build: f64,
    pub coil_axial_thickness: f64,
    /// Gap between the facing inner surfaces of the MOT coils.
    pub mot_separation: f64,
    /// Gap between the facing inner surfaces of the MOT+ coils.
    pub mot_plus_separation: f64,
    pub filament_grid: (usize, usize),
    pub comp_width: f64,
    pub comp_height: f64,
    /// Distance between the planes of each compensation pair.
    pub comp_separation: f64,
    pub comp_turns: f64,
    /// Quadrupole strength Q (G/mm) the MOT pair must reach at `nominal_current`.
    pub target_gradient: f64,
    /// MOT drive current (A) at which `target_gradient` is reached.
    pub nominal_current: f64,
}

impl Default for ReferenceGeometry {
    fn default() -> Self {
        ReferenceGeometry {
            coil_inner_radius: 32.0,
            coil_radial_build: 16.0,
            coil_axial_thickness: 10.0,
            mot_separation: 34.0,
            mot_plus_separation: 74.0,
            filament_grid: (8, 5),
            comp_width: 400.0,
            comp_height: 400.0,
            comp_separation: 500.0,
            comp_turns: 40.0,
            target_gradient: 2.5,
            nominal_current: 4.7,
        }
    }
}

impl ReferenceGeometry {
    fn volume_coil(&self, separation: f64, upper: bool, turns: f64) -> VolumeCoil {
        let offset = 0.5 * separation + 0.5 * self.coil_axial_thickness;
        VolumeCoil {
            inner_radius: self.coil_inner_radius,
            radial_build: self.coil_radial_build,
            axial_thickness: self.coil_axial_thickness,
            axial_center: if upper { offset } else { -offset },
            turns,
            filament_grid: self.filament_grid,
        }
    }

    fn mot_pair(&self, turns: f64) -> CoilAssembly {
        let mut a = CoilAssembly::default();
        // Positive drive on the lower coil and reversed on the upper one gives
        // dBz/dz < 0 at the centre, i.e. Q > 0.
        a.add("mot_lower", Conductor::Volume(self.volume_coil(self.mot_separation, false, turns)))
            .add("mot_upper", Conductor::Volume(self.volume_coil(self.mot_separation, true, turns)))
            .link(MOT, "mot_lower", "mot_upper", -1.0);
        a
    }

    /// Effective turns per MOT coil such that the transverse gradient at the
    /// centre equals `target_gradient` at `nominal_current`.
    pub fn calibrate_mot_turns(&self) -> Result<f64, FieldError> {
        let unit = self.mot_pair(1.0).compile(DEFAULT_SEGMENTS_PER_LOOP)?;
        let g = unit.gradient(&Drive::single(MOT, 1.0), &Vec3::zeros(), DEFAULT_GRADIENT_STEP_MM)?;
        let q_per_ampere_turn = g[(0, 0)];
        if q_per_ampere_turn.abs() < f64::EPSILON {
            return Err(FieldError::InvalidGeometry("MOT pair produces no gradient".into()));
        }
        Ok(self.target_gradient / (self.nominal_current * q_per_ampere_turn))
    }

    pub fn build(&self) -> Result<CoilAssembly, FieldError> {
        let turns = self.calibrate_mot_turns()?;
        Ok(self.build_with_turns(turns))
    }

    /// Assembly with an explicit MOT/MOT+ turn count.
    pub fn build_with_turns(&self, turns: f64) -> CoilAssembly {
        let mut a = self.mot_pair(turns);
        a.add("mot_plus_lower", Conductor::Volume(self.volume_coil(self.mot_plus_separation, false, turns)))
            .add("mot_plus_upper", Conductor::Volume(self.volume_coil(self.mot_plus_separation, true, turns)))
            .link(MOT_PLUS, "mot_plus_lower", "mot_plus_upper", 1.0);
        for (axis, link, lo, hi) in [(0, COMP_X, "comp_x_minus", "comp_x_plus"), (1, COMP_Y, "comp_y_minus", "comp_y_plus")] {
            for (name, side) in [(lo, -1.0), (hi, 1.0)] {
                let mut center = Vec3::zeros();
                center[axis] = side * 0.5 * self.comp_separation;
                let mut rect = FilamentPolygon::rectangle(center, axis, self.comp_width, self.comp_height)
                    .expect("reference rectangle is valid");
                rect.turns = self.comp_turns;
                a.add(name, Conductor::Polygon(rect));
            }
            a.link(link, lo, hi, 1.0);
        }
        a
    }
}

/// The default reference assembly (calibrated once per process).
pub fn reference_assembly() -> CoilAssembly {
    static CACHE: OnceLock<CoilAssembly> = OnceLock::new();
    CACHE
        .get_or_init(|| ReferenceGeometry::default().build().expect("default reference geometry is valid"))
        .clone()
}

/// Calibrated effective turns of each MOT coil in the default reference assembly.
pub fn reference_mot_turns() -> f64 {
    match &reference_assembly().member("mot_lower").expect("present").conductor {
        Conductor::Volume(v) => v.turns,
        _ => unreachable!("MOT coils are volume coils"),
    }
}
