use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ImagingError, ImagingGeometry, OdImage};

/// Mean counts of the reference (probe-only) frame.
pub const REFERENCE_COUNTS: f64 = 20_000.0;
/// Mean counts of the dark frame.
pub const DARK_COUNTS: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self, ImagingError> {
        if data.len() != width * height {
            return Err(ImagingError::InvalidParameter(format!("{} samples for a {width}x{height} raster", data.len())));
        }
        Ok(Raster { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Raster { width, height, data: vec![value; width * height] }
    }
}

/// Atom, reference and dark camera frames of one absorption image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameTriplet {
    pub atom: Raster,
    pub reference: Raster,
    pub dark: Raster,
}

impl FrameTriplet {
    pub fn new(atom: Raster, reference: Raster, dark: Raster) -> Result<Self, ImagingError> {
        let dims = (atom.width, atom.height);
        if (reference.width, reference.height) != dims || (dark.width, dark.height) != dims {
            return Err(ImagingError::InvalidParameter("frame dimensions differ".into()));
        }
        Ok(FrameTriplet { atom, reference, dark })
    }

    /// Writes `<stem>_atom.pgm`, `<stem>_reference.pgm` and `<stem>_dark.pgm`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), ImagingError> {
        write_pgm(&dir.join(format!("{stem}_atom.pgm")), &self.atom)?;
        write_pgm(&dir.join(format!("{stem}_reference.pgm")), &self.reference)?;
        write_pgm(&dir.join(format!("{stem}_dark.pgm")), &self.dark)
    }

    pub fn read(dir: &Path, stem: &str) -> Result<Self, ImagingError> {
        FrameTriplet::new(
            read_pgm(&dir.join(format!("{stem}_atom.pgm")))?,
            read_pgm(&dir.join(format!("{stem}_reference.pgm")))?,
            read_pgm(&dir.join(format!("{stem}_dark.pgm")))?,
        )
    }
}

fn to_counts(value: f64) -> u16 {
    value.round().clamp(0.0, u16::MAX as f64) as u16
}

/// Renders camera frames whose OD reconstruction is `image` plus noise.
///
/// The atom frame transmits `exp(−(OD + offset_drift))` of the probe, so
/// `offset_drift` appears as a uniform OD offset, the signature of an
/// imperfect reference frame. Every frame carries Gaussian shot noise with
/// standard deviation `photon_noise_scale · √counts`. Identical seeds give
/// identical frames.
pub fn apply_noise(image: &OdImage, photon_noise_scale: f64, offset_drift: f64, seed: u64) -> FrameTriplet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = |mean: f64| -> u16 {
        let n: f64 = if photon_noise_scale > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
        to_counts(mean + photon_noise_scale * mean.sqrt() * n)
    };
    let n = image.od.len();
    let mut atom = Vec::with_capacity(n);
    let mut reference = Vec::with_capacity(n);
    let mut dark = Vec::with_capacity(n);
    for &od in &image.od {
        let transmitted = REFERENCE_COUNTS * (-(od as f64 + offset_drift)).exp();
        atom.push(noisy(DARK_COUNTS + transmitted));
        reference.push(noisy(DARK_COUNTS + REFERENCE_COUNTS));
        dark.push(noisy(DARK_COUNTS));
    }
    let (w, h) = (image.width(), image.height());
    FrameTriplet { atom: Raster { width: w, height: h, data: atom }, reference: Raster { width: w, height: h, data: reference }, dark: Raster { width: w, height: h, data: dark } }
}

/// `OD = −ln((atom − dark)/(reference − dark))`, with numerator and
/// denominator floored at one count. Floored pixels are flagged.
pub fn compute_od(frames: &FrameTriplet, geometry: &ImagingGeometry) -> Result<OdImage, ImagingError> {
    let (w, h) = (frames.atom.width, frames.atom.height);
    if (geometry.width, geometry.height) != (w, h) {
        return Err(ImagingError::InvalidParameter("geometry does not match frame size".into()));
    }
    if (frames.reference.width, frames.reference.height) != (w, h) || (frames.dark.width, frames.dark.height) != (w, h) {
        return Err(ImagingError::InvalidParameter("frame dimensions differ".into()));
    }
    let mut od = Vec::with_capacity(w * h);
    let mut clamped = vec![false; w * h];
    let mut count = 0;
    for i in 0..w * h {
        let dark = frames.dark.data[i] as f64;
        let num = frames.atom.data[i] as f64 - dark;
        let den = frames.reference.data[i] as f64 - dark;
        if num < 1.0 || den < 1.0 {
            clamped[i] = true;
            count += 1;
        }
        od.push((-(num.max(1.0) / den.max(1.0)).ln()) as f32);
    }
    if 2 * count > w * h {
        return Err(ImagingError::DegenerateFrames { clamped: count, total: w * h });
    }
    let mut image = OdImage::new(od, *geometry)?;
    if count > 0 {
        image.clamped = clamped;
    }
    Ok(image)
}

/// Binary PGM (P5) with 16-bit big-endian samples.
pub fn write_pgm(path: &Path, raster: &Raster) -> Result<(), ImagingError> {
    let mut out = Vec::with_capacity(20 + 2 * raster.data.len());
    write!(out, "P5\n{} {}\n65535\n", raster.width, raster.height)?;
    for v in &raster.data {
        out.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_pgm(path: &Path) -> Result<Raster, ImagingError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    // Header: magic, width, height, maxval, separated by whitespace and
    // optional comments, then exactly one whitespace byte.
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImagingError::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(ImagingError::Format(format!("not a binary PGM (magic {})", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| ImagingError::Format(format!("bad header field {s}")));
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if !(256..=65535).contains(&maxval) {
        return Err(ImagingError::Format(format!("expected 16-bit samples, maxval {maxval}")));
    }
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() < 2 * width * height {
        return Err(ImagingError::Format("truncated PGM data".into()));
    }
    let data = body[..2 * width * height].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Raster::new(width, height, data)
}

/// Standard deviation of the reconstructed OD at a pixel of true optical
/// density `od`, propagated from the shot noise of all three frames.
pub fn od_noise_sigma(photon_noise_scale: f64, od: f64, offset_drift: f64) -> f64 {
    let transmitted = REFERENCE_COUNTS * (-(od + offset_drift)).exp();
    let atom = DARK_COUNTS + transmitted;
    let reference = DARK_COUNTS + REFERENCE_COUNTS;
    let dark_lever = 1.0 / transmitted - 1.0 / REFERENCE_COUNTS;
    let variance =
        atom / (transmitted * transmitted) + reference / (REFERENCE_COUNTS * REFERENCE_COUNTS) + DARK_COUNTS * dark_lever * dark_lever;
    photon_noise_scale * variance.sqrt()
}

/// Camera noise settings for [`apply_noise`]. The default gives a
/// background OD noise of about 0.03 and an amplitude-to-offset ratio near
/// 15 for a unit-peak cloud.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub photon_noise_scale: f64,
    pub offset_drift: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { photon_noise_scale: 3.0, offset_drift: 0.05 }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), ImagingError> {
        if !(self.photon_noise_scale >= 0.0 && self.offset_drift >= 0.0)
            || !self.photon_noise_scale.is_finite()
            || !self.offset_drift.is_finite()
        {
            return Err(ImagingError::InvalidParameter("noise parameters must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn apply(&self, image: &OdImage, seed: u64) -> FrameTriplet {
        apply_noise(image, self.photon_noise_scale, self.offset_drift, seed)
    }
}
