//! Absorption imaging: synthetic clouds, camera frames, optical density,
//! the 2D Gaussian fit and the per-frame quality gate.
//!
//! Image coordinates are pixels. Columns run along the transverse lab axis
//! (y when imaging along x), rows along lab z, both increasing with the lab
//! coordinate. Pixel `(col, row)` has its centre at coordinate `(col, row)`.

mod fit;
mod frames;
mod quality;
mod synth;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trap::TrapError;

pub use fit::{fit_gaussian, GaussianFit, FIT_MAX_ITERATIONS};
pub use frames::{apply_noise, compute_od, od_noise_sigma, read_pgm, write_pgm, FrameTriplet, NoiseModel, Raster, DARK_COUNTS, REFERENCE_COUNTS};
pub use quality::{quality_gate, QcReason, QualityThresholds, QualityVerdict};
pub use synth::{bessel_k1_scaled, synthesize_od, CloudModel, DEFAULT_TEMPERATURE_UK};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImagingError {
    #[error("cloud is not trapped: the magnetic force does not hold it against gravity")]
    UntrappedCloud,
    #[error("{clamped} of {total} pixels had to be clamped")]
    DegenerateFrames { clamped: usize, total: usize },
    #[error("fit is degenerate: {0}")]
    FitDegenerate(String),
    #[error("fit did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image format: {0}")]
    Format(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Trap(#[from] TrapError),
}

impl From<std::io::Error> for ImagingError {
    fn from(e: std::io::Error) -> Self {
        ImagingError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabAxis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImagingGeometry {
    pub pixel_size_um: f64,
    pub width: usize,
    pub height: usize,
    pub imaging_axis: LabAxis,
    pub magnification: f64,
}

impl Default for ImagingGeometry {
    fn default() -> Self {
        ImagingGeometry { pixel_size_um: 5.3, width: 200, height: 200, imaging_axis: LabAxis::X, magnification: 1.0 }
    }
}

impl ImagingGeometry {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.pixel_size_um > 0.0 && self.pixel_size_um.is_finite()) {
            return Err(ImagingError::InvalidParameter("pixel size must be positive".into()));
        }
        if !(self.magnification > 0.0 && self.magnification.is_finite()) {
            return Err(ImagingError::InvalidParameter("magnification must be positive".into()));
        }
        if self.width < 16 || self.height < 16 {
            return Err(ImagingError::InvalidParameter("image must be at least 16 x 16 pixels".into()));
        }
        Ok(())
    }

    /// Object-plane distance covered by one pixel, mm.
    pub fn mm_per_pixel(&self) -> f64 {
        self.pixel_size_um * 1e-3 / self.magnification
    }

    /// Pixel coordinate of the frame centre, `(col, row)`.
    pub fn center(&self) -> (f64, f64) {
        ((self.width as f64 - 1.0) / 2.0, (self.height as f64 - 1.0) / 2.0)
    }

    /// Lab index of the in-plane horizontal axis (1 for y, 0 for x).
    pub fn transverse_axis(&self) -> usize {
        match self.imaging_axis {
            LabAxis::X => 1,
            LabAxis::Y => 0,
        }
    }

    pub fn line_of_sight_axis(&self) -> usize {
        match self.imaging_axis {
            LabAxis::X => 0,
            LabAxis::Y => 1,
        }
    }
}

/// Optical-density raster. `clamped` marks pixels whose frames had to be
/// clamped during reconstruction; it is empty when none were.
#[derive(Debug, Clone, PartialEq)]
pub struct OdImage {
    pub od: Vec<f32>,
    pub geometry: ImagingGeometry,
    pub clamped: Vec<bool>,
}

impl OdImage {
    pub fn new(od: Vec<f32>, geometry: ImagingGeometry) -> Result<Self, ImagingError> {
        if od.len() != geometry.width * geometry.height {
            return Err(ImagingError::InvalidParameter(format!(
                "{} values for a {}x{} image",
                od.len(),
                geometry.width,
                geometry.height
            )));
        }
        if od.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::InvalidParameter("optical density must be finite".into()));
        }
        Ok(OdImage { od, geometry, clamped: Vec::new() })
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.od[row * self.geometry.width + col]
    }

    pub fn is_clamped(&self, index: usize) -> bool {
        self.clamped.get(index).copied().unwrap_or(false)
    }

    pub fn clamped_count(&self) -> usize {
        self.clamped.iter().filter(|&&c| c).count()
    }

    /// Pixel coordinate `(col, row)` of the largest OD value.
    pub fn argmax(&self) -> (usize, usize) {
        let (index, _) = self
            .od
            .iter()
            .enumerate()
            .fold((0, f32::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        (index % self.geometry.width, index / self.geometry.width)
    }

    /// Writes the raster as row-major little-endian f32 with a JSON sidecar
    /// `<path>.json` holding width, height and pixel size.
    pub fn write_raw(&self, path: &std::path::Path) -> Result<(), ImagingError> {
        let bytes: Vec<u8> = self.od.iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(path, bytes)?;
        let sidecar = serde_json::json!({
            "width": self.geometry.width,
            "height": self.geometry.height,
            "pixel_size_um": self.geometry.pixel_size_um,
        });
        std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"))?;
        Ok(())
    }

    pub fn read_raw(path: &std::path::Path) -> Result<Self, ImagingError> {
        #[derive(Deserialize)]
        struct Sidecar {
            width: usize,
            height: usize,
            pixel_size_um: f64,
        }
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)
            .map_err(|e| ImagingError::Format(e.to_string()))?;
        let bytes = std::fs::read(path)?;
        if bytes.len() != 4 * sidecar.width * sidecar.height {
            return Err(ImagingError::Format(format!("raster has {} bytes, expected {}", bytes.len(), 4 * sidecar.width * sidecar.height)));
        }
        let od = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let geometry = ImagingGeometry {
            pixel_size_um: sidecar.pixel_size_um,
            width: sidecar.width,
            height: sidecar.height,
            ..ImagingGeometry::default()
        };
        OdImage::new(od, geometry)
    }
}

fn sidecar_path(path: &std::path::Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    name.into()
}
