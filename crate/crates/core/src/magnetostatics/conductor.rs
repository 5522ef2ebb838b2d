//! Conductor geometries and their expansion into straight segments.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::{FieldError, Vec3};

/// A straight piece of filament carrying `weight` ampere-turns per ampere of
/// logical drive current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: Vec3,
    pub end: Vec3,
    pub weight: f64,
}

/// Circular single filament. Positive current circulates right-handed about
/// `normal`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilamentLoop {
    /// Loop center, mm.
    pub center: Vec3,
    /// Unit normal.
    pub normal: Vec3,
    /// Radius, mm.
    pub radius: f64,
    /// Effective number of turns (ampere-turns per drive ampere).
    #[serde(default = "one")]
    pub turns: f64,
}

/// Closed polygonal filament; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilamentPolygon {
    /// Vertices, mm.
    pub vertices: Vec<Vec3>,
    #[serde(default = "one")]
    pub turns: f64,
}

/// Solenoidal winding of rectangular cross-section, coaxial with the lab z axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeCoil {
    /// Inner winding radius, mm.
    pub inner_radius: f64,
    /// Radial extent of the winding pack, mm.
    pub radial_build: f64,
    /// Axial extent of the winding pack, mm.
    pub axial_thickness: f64,
    /// Signed z position of the winding-pack center, mm.
    pub axial_center: f64,
    /// Effective (calibrated) turn count.
    pub turns: f64,
    /// Filaments used to represent the pack, `(n_radial, n_axial)`.
    #[serde(default = "default_grid")]
    pub filament_grid: (usize, usize),
}

fn one() -> f64 {
    1.0
}

fn default_grid() -> (usize, usize) {
    (8, 5)
}

/// Any conductor that can appear in an assembly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Conductor {
    Loop(FilamentLoop),
    Polygon(FilamentPolygon),
    Volume(VolumeCoil),
}

impl FilamentLoop {
    pub fn new(center: Vec3, normal: Vec3, radius: f64) -> Result<Self, FieldError> {
        let lp = FilamentLoop { center, normal, radius, turns: 1.0 };
        lp.validate()?;
        Ok(lp)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(FieldError::InvalidGeometry(format!("loop radius {} must be positive", self.radius)));
        }
        if (self.normal.norm() - 1.0).abs() > 1e-12 {
            return Err(FieldError::InvalidGeometry(format!(
                "loop normal must be a unit vector (|n| = {})",
                self.normal.norm()
            )));
        }
        if !self.turns.is_finite() {
            return Err(FieldError::InvalidGeometry("loop turns must be finite".into()));
        }
        Ok(())
    }

    /// Regular polygon with `n` vertices enclosing the same area as the circle.
    ///
    /// Matching the area makes the dipole moment exact and cancels the
    /// leading `(π/n)²` error of the on-axis field, so the polygon field agrees
    /// with the circle to `O(n⁻⁴)` everywhere on the axis.
    pub fn vertices(&self, n: usize) -> Vec<Vec3> {
        let (u, v) = in_plane_basis(&self.normal);
        let dphi = 2.0 * PI / n as f64;
        let vertex_radius = self.radius * (2.0 * PI / (n as f64 * dphi.sin())).sqrt();
        (0..n)
            .map(|k| {
                let (s, c) = (k as f64 * dphi).sin_cos();
                self.center + (u * c + v * s) * vertex_radius
            })
            .collect()
    }

    pub(crate) fn push_segments(&self, n: usize, scale: f64, out: &mut Vec<Segment>) {
        closed_path(&self.vertices(n), self.turns * scale, out);
    }
}

impl FilamentPolygon {
    pub fn new(vertices: Vec<Vec3>) -> Result<Self, FieldError> {
        let p = FilamentPolygon { vertices, turns: 1.0 };
        p.validate()?;
        Ok(p)
    }

    /// Axis-aligned rectangle centred at `center` whose normal is the lab axis
    /// `normal_axis` (0, 1 or 2). `width` spans the next axis cyclically,
    /// `height` the one after. Positive current is right-handed about the axis.
    pub fn rectangle(center: Vec3, normal_axis: usize, width: f64, height: f64) -> Result<Self, FieldError> {
        let mut u = Vec3::zeros();
        let mut v = Vec3::zeros();
        u[(normal_axis + 1) % 3] = 0.5 * width;
        v[(normal_axis + 2) % 3] = 0.5 * height;
        Self::new(vec![center - u - v, center + u - v, center + u + v, center - u + v])
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        let n = self.vertices.len();
        if n < 3 {
            return Err(FieldError::InvalidGeometry(format!("polygon needs at least 3 vertices, got {n}")));
        }
        for k in 0..n {
            if self.vertices[k] == self.vertices[(k + 1) % n] {
                return Err(FieldError::InvalidGeometry(format!("polygon vertices {k} and {} coincide", (k + 1) % n)));
            }
        }
        Ok(())
    }

    pub(crate) fn push_segments(&self, scale: f64, out: &mut Vec<Segment>) {
        closed_path(&self.vertices, self.turns * scale, out);
    }
}

impl VolumeCoil {
    pub fn validate(&self) -> Result<(), FieldError> {
        let (nr, na) = self.filament_grid;
        if !(self.inner_radius > 0.0) {
            return Err(FieldError::InvalidGeometry("volume coil inner radius must be positive".into()));
        }
        if !(self.radial_build >= 0.0 && self.axial_thickness >= 0.0) {
            return Err(FieldError::InvalidGeometry("volume coil build and thickness must be non-negative".into()));
        }
        if nr == 0 || na == 0 {
            return Err(FieldError::InvalidGeometry("volume coil filament grid counts must be at least 1".into()));
        }
        if !(self.turns > 0.0 && self.turns.is_finite()) {
            return Err(FieldError::InvalidGeometry("volume coil turns must be positive".into()));
        }
        Ok(())
    }

    /// Filament loops at the centres of an `n_radial × n_axial` grid of cells,
    /// sharing the ampere-turns equally.
    pub fn filaments(&self) -> Vec<FilamentLoop> {
        let (nr, na) = self.filament_grid;
        let share = self.turns / (nr * na) as f64;
        let mut loops = Vec::with_capacity(nr * na);
        for i in 0..nr {
            let radius = self.inner_radius + (i as f64 + 0.5) * self.radial_build / nr as f64;
            for j in 0..na {
                let z = self.axial_center + ((j as f64 + 0.5) / na as f64 - 0.5) * self.axial_thickness;
                loops.push(FilamentLoop {
                    center: Vec3::new(0.0, 0.0, z),
                    normal: Vec3::z(),
                    radius,
                    turns: share,
                });
            }
        }
        loops
    }
}

impl Conductor {
    pub fn validate(&self) -> Result<(), FieldError> {
        match self {
            Conductor::Loop(l) => l.validate(),
            Conductor::Polygon(p) => p.validate(),
            Conductor::Volume(v) => v.validate(),
        }
    }

    /// Total ampere-turns per ampere of drive.
    pub fn ampere_turns(&self) -> f64 {
        match self {
            Conductor::Loop(l) => l.turns,
            Conductor::Polygon(p) => p.turns,
            Conductor::Volume(v) => v.turns,
        }
    }

    /// Expand into straight segments, circles as `segments_per_loop`-gons.
    pub fn segments(&self, segments_per_loop: usize, scale: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        match self {
            Conductor::Loop(l) => l.push_segments(segments_per_loop, scale, &mut out),
            Conductor::Polygon(p) => p.push_segments(scale, &mut out),
            Conductor::Volume(v) => {
                for l in v.filaments() {
                    l.push_segments(segments_per_loop, scale, &mut out);
                }
            }
        }
        out
    }
}

fn closed_path(vertices: &[Vec3], weight: f64, out: &mut Vec<Segment>) {
    let n = vertices.len();
    out.extend((0..n).map(|k| Segment { start: vertices[k], end: vertices[(k + 1) % n], weight }));
}

/// Orthonormal `(u, v)` spanning the plane normal to `n`, with `u × v = n`.
fn in_plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = (helper - n * helper.dot(n)).normalize();
    let v = n.cross(&u);
    (u, v)
}
