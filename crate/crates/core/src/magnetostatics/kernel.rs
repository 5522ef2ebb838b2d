//! Closed-form Biot–Savart field of a finite straight current segment.

use super::{FieldError, Vec3};

/// μ0/4π expressed in the crate's unit system: 1e-7 T·m/A = 1 G·mm/A.
pub const MU0_OVER_4PI: f64 = 1.0;

/// Points closer than this to a conductor (mm) are rejected.
pub const ON_CONDUCTOR_TOLERANCE_MM: f64 = 1e-9;

/// Distance (mm) from `at` to the closed segment `p0`–`p1`.
pub fn distance_to_segment(p0: &Vec3, p1: &Vec3, at: &Vec3) -> f64 {
    let l = p1 - p0;
    let t = ((at - p0).dot(&l) / l.norm_squared()).clamp(0.0, 1.0);
    (at - (p0 + l * t)).norm()
}

/// Field (Gauss) at `at` of a straight filament from `p0` to `p1` carrying
/// `current` amperes in the direction `p0 → p1`. Coordinates are in mm.
///
/// Uses the form
///
/// ```text
/// B = (μ0 I / 4π) (r1 × r2) (|r1| + |r2|) / (|r1| |r2| (|r1| |r2| + r1·r2))
/// ```
///
/// with `r1 = at − p0`, `r2 = at − p1`, which stays well conditioned away from
/// the conductor and has no trigonometric calls.
pub fn field_of_segment(p0: &Vec3, p1: &Vec3, current: f64, at: &Vec3) -> Result<Vec3, FieldError> {
    if p0 == p1 {
        return Err(FieldError::DegenerateSegment);
    }
    let distance = distance_to_segment(p0, p1, at);
    if distance <= ON_CONDUCTOR_TOLERANCE_MM {
        return Err(FieldError::OnConductor { distance_mm: distance });
    }
    Ok(segment_kernel(p0, p1, at) * current)
}

/// Unchecked kernel for one ampere. Callers guarantee `at` is off the conductor.
#[inline]
pub(crate) fn segment_kernel(p0: &Vec3, p1: &Vec3, at: &Vec3) -> Vec3 {
    let r1 = at - p0;
    let r2 = at - p1;
    let n1 = r1.norm();
    let n2 = r2.norm();
    let n1n2 = n1 * n2;
    let denom = n1n2 * (n1n2 + r1.dot(&r2));
    r1.cross(&r2) * (MU0_OVER_4PI * (n1 + n2) / denom)
}
