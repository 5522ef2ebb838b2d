use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{
    compensation_regression, infer_stray_field, rhombus, summarize_cluster, ClusterSummary, CompensationResult,
    RhombusPoint, StrayFieldEstimate,
};
use super::{Axis, BiasSetting, ExperimentConfig, Mode, ProtocolError, ShotRecord};
use crate::imaging::{compute_od, fit_gaussian, quality_gate, synthesize_od, CloudModel, ImagingError, QcReason};
use crate::magnetostatics::{CoilAssembly, CompiledAssembly, Drive, FieldError, Vec3, DEFAULT_GRADIENT_STEP_MM};
use crate::trap::{displaced_zero_inhomogeneous, AtomSpecies, ExternalField, FieldState, QuadrupoleParams};

/// Bias field per ampere at the trap centre, G/A, for each pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCoefficients {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub alpha_z: f64,
    /// Full field-per-ampere vectors, for cross-coupling inspection.
    pub vectors: [[f64; 3]; 3],
    /// Pairs whose off-axis field exceeds 1% of the on-axis value.
    pub warnings: Vec<String>,
}

impl AlphaCoefficients {
    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.alpha_x,
            Axis::Y => self.alpha_y,
            Axis::Z => self.alpha_z,
        }
    }
}

/// Field per ampere of each named pair at the trap centre, projected on its
/// axis. Missing pairs (None) get α = 0.
pub fn compute_alpha(
    compiled: &CompiledAssembly,
    pairs: [Option<&str>; 3],
) -> Result<AlphaCoefficients, ProtocolError> {
    let mut alpha = [0.0; 3];
    let mut vectors = [[0.0; 3]; 3];
    let mut warnings = Vec::new();
    for (axis, name) in pairs.iter().enumerate() {
        let Some(name) = name else { continue };
        let b = compiled.field_per_amp(name, &Vec3::zeros())?;
        alpha[axis] = b[axis];
        vectors[axis] = [b.x, b.y, b.z];
        let off_axis = (0..3).filter(|&k| k != axis).map(|k| b[k].abs()).fold(0.0, f64::max);
        if off_axis > 0.01 * b[axis].abs() {
            warnings.push(format!(
                "pair {name} couples into other axes: off-axis {off_axis:.3e} G/A vs on-axis {:.3e} G/A",
                b[axis]
            ));
        }
    }
    Ok(AlphaCoefficients { alpha_x: alpha[0], alpha_y: alpha[1], alpha_z: alpha[2], vectors, warnings })
}

/// One planned shot of a campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotSpec {
    pub shot_id: u64,
    pub bias: BiasSetting,
    pub polarity: i8,
    pub seed: u64,
}

/// A validated configuration together with everything derived from the coil
/// model, ready to run shots.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub assembly: CoilAssembly,
    pub compiled: CompiledAssembly,
    /// Quadrupole strength at positive polarity, G/mm.
    pub quadrupole_strength: f64,
    pub alpha: AlphaCoefficients,
    bias_vectors: [Vec3; 3],
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, ProtocolError> {
        config.validate()?;
        let assembly = config.assembly.resolve()?;
        let compiled = assembly.compile(config.segments_per_loop)?;
        if !compiled.has_logical(&config.quadrupole.link) {
            return Err(FieldError::UnknownCoil(config.quadrupole.link.clone()).into());
        }
        let drive = Drive::single(&config.quadrupole.link, config.quadrupole.current);
        let q = compiled.gradient(&drive, &Vec3::zeros(), DEFAULT_GRADIENT_STEP_MM)?[(0, 0)];
        if q == 0.0 {
            return Err(ProtocolError::InvalidConfig("quadrupole drive produces no gradient at the centre".into()));
        }
        let pairs = [config.bias_pairs.x.as_deref(), config.bias_pairs.y.as_deref(), config.bias_pairs.z.as_deref()];
        let alpha = compute_alpha(&compiled, pairs)?;
        let bias_vectors = alpha.vectors.map(Vec3::from);
        Ok(Experiment { config, assembly, compiled, quadrupole_strength: q, alpha, bias_vectors })
    }

    /// The same experiment under a new configuration. The compiled coil
    /// model is reused when the coil-related settings are unchanged.
    pub fn with_config(&self, config: ExperimentConfig) -> Result<Self, ProtocolError> {
        let same_coils = config.assembly == self.config.assembly
            && config.segments_per_loop == self.config.segments_per_loop
            && config.quadrupole == self.config.quadrupole
            && config.bias_pairs == self.config.bias_pairs;
        if !same_coils {
            return Experiment::new(config);
        }
        config.validate()?;
        Ok(Experiment { config, ..self.clone() })
    }

    /// Shots in campaign order: per bias setting, per repetition, positive
    /// then negative polarity. Seeds are `base_seed + shot_id`.
    pub fn plan(&self) -> Vec<ShotSpec> {
        let mut shots = Vec::new();
        for bias in self.config.bias_grid.settings() {
            for _ in 0..self.config.shots_per_condition {
                for polarity in [1i8, -1] {
                    let shot_id = shots.len() as u64;
                    shots.push(ShotSpec { shot_id, bias, polarity, seed: self.config.base_seed.wrapping_add(shot_id) });
                }
            }
        }
        shots
    }

    /// Total external field (stray plus bias coils) at the trap centre.
    pub fn external_field(&self, bias: &BiasSetting) -> ExternalField {
        let stray = self.config.stray();
        let b = stray.homogeneous
            + self.bias_vectors[0] * bias.ix
            + self.bias_vectors[1] * bias.iy
            + self.bias_vectors[2] * bias.iz;
        ExternalField::with_gradient(b, stray.gradient)
    }

    pub fn field_state(&self, bias: &BiasSetting, polarity: i8) -> FieldState {
        FieldState::new(QuadrupoleParams::new(self.quadrupole_strength * polarity as f64), self.external_field(bias))
    }

    /// Pixel position of a lab-frame point (mm), before noise.
    pub fn project(&self, r: &Vec3) -> [f64; 2] {
        let imaging = &self.config.imaging;
        let scale = imaging.geometry.mm_per_pixel();
        let u = r[imaging.geometry.transverse_axis()] / scale;
        let v = r.z / scale;
        let (s, c) = imaging.misalignment_rad.sin_cos();
        let pp = imaging.principal_point();
        [pp[0] + c * u - s * v, pp[1] + s * u + c * v]
    }

    /// Runs one shot. QC failures are recorded in the returned record, not
    /// returned as errors.
    pub fn run_shot(&self, spec: &ShotSpec) -> Result<ShotRecord, ProtocolError> {
        if spec.polarity != 1 && spec.polarity != -1 {
            return Err(ProtocolError::InvalidConfig(format!("polarity must be ±1, got {}", spec.polarity)));
        }
        spec.bias.validate(self.config.supply_limit_a)?;
        let state = self.field_state(&spec.bias, spec.polarity);
        let zero = displaced_zero_inhomogeneous(state.quadrupole, &state.external)?;
        let ideal = self.project(&zero);

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let um_per_px = self.config.imaging.geometry.mm_per_pixel() * 1e3;
        let [ry, rz] = self.config.noise.position_rms_um;
        let ny: f64 = StandardNormal.sample(&mut rng);
        let nz: f64 = StandardNormal.sample(&mut rng);
        let jitter = [ry / um_per_px * ny, rz / um_per_px * nz];
        let mut record = ShotRecord {
            shot_id: spec.shot_id,
            bias: spec.bias,
            polarity: spec.polarity,
            fitted_center: None,
            qc_passed: true,
            qc_reasons: Vec::new(),
            seed: spec.seed,
            mode: self.config.mode,
        };
        let position = [ideal[0] + jitter[0], ideal[1] + jitter[1]];
        match self.config.mode {
            Mode::Fast => record.fitted_center = Some(position),
            Mode::Full => {
                let cloud = &self.config.cloud;
                let degradation = (-cloud.loading_degradation_per_gauss * state.external.homogeneous.norm()).exp();
                let model = CloudModel {
                    species: AtomSpecies::rb87(),
                    temperature_uk: cloud.temperature_uk,
                    peak_od: cloud.peak_od * degradation,
                    field_state: state,
                    include_gravity: cloud.include_gravity,
                };
                let geometry = self.config.imaging.geometry;
                let (cx, cy) = geometry.center();
                let image = synthesize_od(&model, &geometry, (position[0] - cx, position[1] - cy))?;
                let frames = self.config.noise.camera().apply(&image, rng.next_u64());
                let od = compute_od(&frames, &geometry)?;
                match fit_gaussian(&od) {
                    Ok(fit) => {
                        let verdict = quality_gate(&fit, &self.config.quality);
                        record.qc_passed = verdict.passed;
                        record.qc_reasons = verdict.reasons;
                        if verdict.passed {
                            record.fitted_center = Some(fit.center);
                        }
                    }
                    Err(ImagingError::FitDegenerate(_) | ImagingError::NoConvergence { .. }) => {
                        record.qc_passed = false;
                        record.qc_reasons = vec![QcReason::NotConverged];
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(record)
    }

    /// Runs every planned shot on a pool of `workers` threads (0 = one per
    /// core). Results are in shot-id order regardless of scheduling.
    /// Runs the whole plan on `workers` threads (0 = one per logical core).
    /// Output order follows the plan regardless of the worker count.
    pub fn run_shots(&self, workers: usize) -> Result<Vec<ShotRecord>, ProtocolError> {
        self.run_shots_with_progress(workers, |_, _, _| {})
    }

    /// As `run_shots`, one bias setting at a time, calling
    /// `progress(done, total, bias)` after each setting completes.
    pub fn run_shots_with_progress<F>(&self, workers: usize, mut progress: F) -> Result<Vec<ShotRecord>, ProtocolError>
    where
        F: FnMut(usize, usize, &BiasSetting),
    {
        let plan = self.plan();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ProtocolError::InvalidConfig(format!("thread pool: {e}")))?;
        let per_condition = 2 * self.config.shots_per_condition;
        let total = plan.len() / per_condition;
        let mut records = Vec::with_capacity(plan.len());
        for (k, chunk) in plan.chunks(per_condition).enumerate() {
            let batch: Vec<ShotRecord> =
                pool.install(|| chunk.par_iter().map(|spec| self.run_shot(spec)).collect::<Result<_, _>>())?;
            records.extend(batch);
            progress(k + 1, total, &chunk[0].bias);
        }
        Ok(records)
    }

    pub fn run_campaign(&self, workers: usize) -> Result<CampaignResult, ProtocolError> {
        let records = self.run_shots(workers)?;
        self.analyze(records)
    }

    /// Clusters, midpoints, regressions and the inferred stray field from a
    /// set of shot records. Bias settings are taken from the records in
    /// order of first appearance.
    pub fn analyze(&self, records: Vec<ShotRecord>) -> Result<CampaignResult, ProtocolError> {
        let mut settings: Vec<BiasSetting> = Vec::new();
        for r in &records {
            if !settings.contains(&r.bias) {
                settings.push(r.bias);
            }
        }
        let mut clusters = Vec::new();
        let mut rhombi = Vec::new();
        let mut empty = Vec::new();
        for bias in settings {
            let mut pair: Vec<Option<ClusterSummary>> = Vec::with_capacity(2);
            for polarity in [1i8, -1] {
                let members: Vec<ShotRecord> =
                    records.iter().filter(|r| r.bias == bias && r.polarity == polarity).cloned().collect();
                match summarize_cluster(&members, self.config.estimator) {
                    Ok(c) => pair.push(Some(c)),
                    Err(ProtocolError::EmptyCluster) => {
                        empty.push((bias, polarity));
                        pair.push(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            if let (Some(pos), Some(neg)) = (&pair[0], &pair[1]) {
                rhombi.push(rhombus(pos, neg)?);
            }
            clusters.extend(pair.into_iter().flatten());
        }
        let mut compensation = CompensationResult::default();
        for axis in [Axis::Y, Axis::Z] {
            if self.config.bias_pairs.get(axis).is_none() {
                continue;
            }
            match compensation_regression(&rhombi, axis, self.config.regression) {
                Ok(entry) => compensation.set(axis, entry),
                Err(ProtocolError::DegenerateDesign) => {}
                Err(e) => return Err(e),
            }
        }
        let stray_estimate = infer_stray_field(&compensation, &self.alpha).ok();
        let qc_failures = records.iter().filter(|r| !r.qc_passed).count();
        Ok(CampaignResult {
            quadrupole_strength: self.quadrupole_strength,
            alpha: self.alpha.clone(),
            shots: records.len(),
            qc_failures,
            empty_clusters: empty.len(),
            records,
            clusters,
            rhombi,
            compensation,
            stray_estimate,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub quadrupole_strength: f64,
    pub alpha: AlphaCoefficients,
    pub shots: usize,
    pub qc_failures: usize,
    pub empty_clusters: usize,
    #[serde(skip)]
    pub records: Vec<ShotRecord>,
    pub clusters: Vec<ClusterSummary>,
    pub rhombi: Vec<RhombusPoint>,
    pub compensation: CompensationResult,
    pub stray_estimate: Option<StrayFieldEstimate>,
}

impl CampaignResult {
    /// The summary document (everything but the per-shot records).
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}
