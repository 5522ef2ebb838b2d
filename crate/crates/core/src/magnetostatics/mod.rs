//! Static magnetic fields of filament and volume coils by exact summation of
//! straight-segment Biot–Savart contributions.
//!
//! Units throughout: mm, A, Gauss, G/mm. In these units μ0/4π is exactly
//! 1 G·mm/A.

mod assembly;
mod conductor;
mod kernel;
mod reference;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assembly::{
    central_jacobian, field_of_assembly, gradient_matrix, CoilAssembly, CompiledAssembly, Drive, Member, PairLink,
    DEFAULT_GRADIENT_STEP_MM, DEFAULT_SEGMENTS_PER_LOOP, MIN_SEGMENTS_PER_LOOP,
};
pub use conductor::{Conductor, FilamentLoop, FilamentPolygon, Segment, VolumeCoil};
pub use kernel::{distance_to_segment, field_of_segment, MU0_OVER_4PI, ON_CONDUCTOR_TOLERANCE_MM};
pub use reference::{reference_assembly, reference_mot_turns, ReferenceGeometry, COMP_X, COMP_Y, MOT, MOT_PLUS};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("evaluation point lies on a conductor (distance {distance_mm:e} mm)")]
    OnConductor { distance_mm: f64 },
    #[error("segment has coincident endpoints")]
    DegenerateSegment,
    #[error("unknown coil or logical current: {0}")]
    UnknownCoil(String),
    #[error("duplicate coil name: {0}")]
    DuplicateName(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A field value at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    /// mm
    pub position: Vec3,
    /// Gauss
    pub b: Vec3,
}

impl FieldSample {
    pub fn new(position: Vec3, b: Vec3) -> Self {
        debug_assert!(position.iter().chain(b.iter()).all(|v| v.is_finite()));
        FieldSample { position, b }
    }
}
