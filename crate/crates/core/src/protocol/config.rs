use serde::{Deserialize, Serialize};

use super::{BiasSetting, Estimator, Mode, ProtocolError, RegressionWeighting};
use crate::imaging::{ImagingGeometry, NoiseModel, QualityThresholds, DEFAULT_TEMPERATURE_UK};
use crate::magnetostatics::{reference_assembly, CoilAssembly, Mat3, Vec3, COMP_X, COMP_Y, DEFAULT_SEGMENTS_PER_LOOP, MIN_SEGMENTS_PER_LOOP, MOT, MOT_PLUS};
use crate::trap::ExternalField;

/// Either the built-in reference geometry (`"reference"`) or an inline
/// assembly document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssemblySource {
    Named(String),
    Inline(CoilAssembly),
}

impl Default for AssemblySource {
    fn default() -> Self {
        AssemblySource::Named("reference".into())
    }
}

impl AssemblySource {
    pub fn resolve(&self) -> Result<CoilAssembly, ProtocolError> {
        match self {
            AssemblySource::Named(name) if name == "reference" => Ok(reference_assembly()),
            AssemblySource::Named(name) => Err(ProtocolError::InvalidConfig(format!("unknown assembly {name:?}"))),
            AssemblySource::Inline(a) => {
                a.validate()?;
                Ok(a.clone())
            }
        }
    }
}

/// The logical current driving the quadrupole, and its magnitude (A) for
/// the positive polarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadrupoleDrive {
    pub link: String,
    pub current: f64,
}

impl Default for QuadrupoleDrive {
    fn default() -> Self {
        QuadrupoleDrive { link: MOT.into(), current: 4.7 }
    }
}

/// Logical currents of the three bias pairs. An axis without a pair cannot
/// be swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasPairs {
    pub x: Option<String>,
    pub y: Option<String>,
    pub z: Option<String>,
}

impl Default for BiasPairs {
    fn default() -> Self {
        BiasPairs { x: Some(COMP_X.into()), y: Some(COMP_Y.into()), z: Some(MOT_PLUS.into()) }
    }
}

impl BiasPairs {
    pub fn get(&self, axis: super::Axis) -> Option<&str> {
        match axis {
            super::Axis::X => self.x.as_deref(),
            super::Axis::Y => self.y.as_deref(),
            super::Axis::Z => self.z.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridLayout {
    /// Every combination of the three lists.
    #[default]
    Cartesian,
    /// Each list swept on its own, the other axes held at `center`.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasGrid {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub layout: GridLayout,
    pub center: [f64; 3],
}

impl Default for BiasGrid {
    fn default() -> Self {
        BiasGrid { x: vec![0.0], y: vec![0.0], z: vec![0.0], layout: GridLayout::Cartesian, center: [0.0; 3] }
    }
}

impl BiasGrid {
    /// Bias settings in campaign order.
    pub fn settings(&self) -> Vec<BiasSetting> {
        let list = |v: &Vec<f64>, c: f64| if v.is_empty() { vec![c] } else { v.clone() };
        let (xs, ys, zs) = (list(&self.x, self.center[0]), list(&self.y, self.center[1]), list(&self.z, self.center[2]));
        match self.layout {
            GridLayout::Cartesian => {
                let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
                for &x in &xs {
                    for &y in &ys {
                        for &z in &zs {
                            out.push(BiasSetting::new(x, y, z));
                        }
                    }
                }
                out
            }
            GridLayout::Cross => {
                let [cx, cy, cz] = self.center;
                let mut out: Vec<BiasSetting> = Vec::new();
                let mut push = |b: BiasSetting| {
                    if !out.contains(&b) {
                        out.push(b);
                    }
                };
                xs.iter().for_each(|&x| push(BiasSetting::new(x, cy, cz)));
                ys.iter().for_each(|&y| push(BiasSetting::new(cx, y, cz)));
                zs.iter().for_each(|&z| push(BiasSetting::new(cx, cy, z)));
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSettings {
    /// Shot-to-shot RMS jitter of the cloud position along image (y, z), μm.
    pub position_rms_um: [f64; 2],
    pub photon_noise_scale: f64,
    pub offset_drift: f64,
}

impl Default for NoiseSettings {
    fn default() -> Self {
        let camera = NoiseModel::default();
        NoiseSettings {
            position_rms_um: [2.0, 2.0],
            photon_noise_scale: camera.photon_noise_scale,
            offset_drift: camera.offset_drift,
        }
    }
}

impl NoiseSettings {
    pub fn camera(&self) -> NoiseModel {
        NoiseModel { photon_noise_scale: self.photon_noise_scale, offset_drift: self.offset_drift }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImagingSettings {
    pub geometry: ImagingGeometry,
    /// Pixel position of the field zero at zero external field; defaults to
    /// the frame centre.
    pub principal_point: Option<[f64; 2]>,
    /// Rotation of the image axes against the lab (y, z) axes, rad.
    pub misalignment_rad: f64,
}

impl Default for ImagingSettings {
    fn default() -> Self {
        ImagingSettings { geometry: ImagingGeometry::default(), principal_point: None, misalignment_rad: 0.0 }
    }
}

impl ImagingSettings {
    pub fn principal_point(&self) -> [f64; 2] {
        self.principal_point.unwrap_or_else(|| {
            let (c, r) = self.geometry.center();
            [c, r]
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloudSettings {
    pub temperature_uk: f64,
    pub peak_od: f64,
    pub include_gravity: bool,
    /// Optional loss of atoms away from compensation: the peak OD is scaled
    /// by `exp(−k·|B_ext|)` with `k` in 1/G. Zero disables it.
    pub loading_degradation_per_gauss: f64,
}

impl Default for CloudSettings {
    fn default() -> Self {
        CloudSettings {
            temperature_uk: DEFAULT_TEMPERATURE_UK,
            peak_od: 1.0,
            include_gravity: true,
            loading_degradation_per_gauss: 0.0,
        }
    }
}

/// Campaign manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub assembly: AssemblySource,
    pub segments_per_loop: usize,
    pub quadrupole: QuadrupoleDrive,
    pub bias_pairs: BiasPairs,
    /// Homogeneous stray field at the trap centre, G.
    pub stray_field: [f64; 3],
    /// Optional stray gradient `∂B_i/∂x_j`, G/mm, row i.
    pub stray_gradient: Option<[[f64; 3]; 3]>,
    pub bias_grid: BiasGrid,
    /// Shots per polarity per bias setting.
    pub shots_per_condition: usize,
    pub mode: Mode,
    pub noise: NoiseSettings,
    pub imaging: ImagingSettings,
    pub cloud: CloudSettings,
    pub quality: QualityThresholds,
    pub base_seed: u64,
    pub supply_limit_a: f64,
    pub estimator: Estimator,
    pub regression: RegressionWeighting,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            assembly: AssemblySource::default(),
            segments_per_loop: DEFAULT_SEGMENTS_PER_LOOP,
            quadrupole: QuadrupoleDrive::default(),
            bias_pairs: BiasPairs::default(),
            stray_field: [0.0; 3],
            stray_gradient: None,
            bias_grid: BiasGrid::default(),
            shots_per_condition: 50,
            mode: Mode::Fast,
            noise: NoiseSettings::default(),
            imaging: ImagingSettings::default(),
            cloud: CloudSettings::default(),
            quality: QualityThresholds::default(),
            base_seed: 0,
            supply_limit_a: 5.0,
            estimator: Estimator::Mean,
            regression: RegressionWeighting::Ols,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ProtocolError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn stray(&self) -> ExternalField {
        let b = Vec3::from(self.stray_field);
        match self.stray_gradient {
            Some(rows) => ExternalField::with_gradient(b, Mat3::from_fn(|i, j| rows[i][j])),
            None => ExternalField::homogeneous(b),
        }
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidConfig(m));
        if self.segments_per_loop < MIN_SEGMENTS_PER_LOOP {
            return bad(format!("segments_per_loop must be at least {MIN_SEGMENTS_PER_LOOP}"));
        }
        if !(self.quadrupole.current.is_finite() && self.quadrupole.current != 0.0) {
            return bad("quadrupole current must be finite and nonzero".into());
        }
        if !(self.supply_limit_a > 0.0) {
            return bad("supply_limit_a must be positive".into());
        }
        if self.quadrupole.current.abs() > self.supply_limit_a {
            return bad(format!("quadrupole current exceeds the {} A supply limit", self.supply_limit_a));
        }
        if self.shots_per_condition == 0 {
            return bad("shots_per_condition must be at least 1".into());
        }
        self.stray().validate(false)?;
        for setting in self.bias_grid.settings() {
            setting.validate(self.supply_limit_a)?;
        }
        for axis in [super::Axis::X, super::Axis::Y, super::Axis::Z] {
            let values = match axis {
                super::Axis::X => &self.bias_grid.x,
                super::Axis::Y => &self.bias_grid.y,
                super::Axis::Z => &self.bias_grid.z,
            };
            if self.bias_pairs.get(axis).is_none() && values.iter().any(|&v| v != 0.0) {
                return bad(format!("bias grid sweeps {axis} but no {axis} bias pair is configured"));
            }
        }
        let n = &self.noise;
        if !n.position_rms_um.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return bad("position_rms_um must be finite and non-negative".into());
        }
        n.camera().validate()?;
        self.imaging.geometry.validate()?;
        if !self.imaging.misalignment_rad.is_finite() {
            return bad("misalignment_rad must be finite".into());
        }
        let c = &self.cloud;
        if !(c.temperature_uk > 0.0 && c.peak_od > 0.0 && c.loading_degradation_per_gauss >= 0.0) {
            return bad("cloud temperature and peak OD must be positive, degradation non-negative".into());
        }
        Ok(())
    }
}
