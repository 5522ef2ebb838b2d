use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use buoy::magnetostatics::{Drive, Vec3, DEFAULT_GRADIENT_STEP_MM};
use buoy::protocol::{
    compensation_regression, read_records_csv, write_records_csv, Axis, BiasSetting, ExperimentConfig, Experiment,
    ProtocolError,
};
use buoy::stats::{allan_deviation, default_sizes, field_uncertainty, noise_floor, Coordinate, PositionSeries,
    DEFAULT_PLATEAU_WINDOW};
use buoy::trap::{displaced_zero_inhomogeneous, find_zero_numerical, CommonModeModel, NewtonOptions,
    CALIBRATED_WINDING_ASYMMETRY};

use crate::error::CliError;
use crate::format::{json as j, json_opt, json_vec, num};
use crate::{AllanArgs, CompensateArgs, FieldArgs, GlobalArgs, SensitivityArgs, ZeroArgs};

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig, CliError> {
    let mut config = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = g.seed {
        config.base_seed = seed;
    }
    if let Some(mode) = g.mode {
        config.mode = mode.into();
    }
    config.validate()?;
    Ok(config)
}

fn output_path(g: &GlobalArgs, name: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&g.out).map_err(|e| CliError::io(&g.out, e))?;
    Ok(g.out.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn csv_row(values: &[f64]) -> String {
    let mut line = values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn vec3(v: &Vec3) -> Value {
    json_vec(v.as_slice())
}

pub fn field(g: &GlobalArgs, a: &FieldArgs) -> Result<(), CliError> {
    if !(a.range.is_finite() && a.range > 0.0) {
        return Err(CliError::usage(format!("--range must be positive, got {}", a.range)));
    }
    if a.samples < 2 {
        return Err(CliError::usage("--samples must be at least 2"));
    }
    let config = load_config(g)?;
    let compiled = config.assembly.resolve()?.compile(config.segments_per_loop)?;
    let mut drive = Drive::new();
    if a.drives.is_empty() {
        drive.set(&config.quadrupole.link, config.quadrupole.current);
    }
    for (name, amps) in &a.drives {
        if !compiled.has_logical(name) {
            return Err(CliError::new(
                "unknown_coil",
                crate::error::VALIDATION,
                format!("unknown coil or logical current: {name} (known: {})", compiled.member_names().collect::<Vec<_>>().join(", ")),
            ));
        }
        drive.set(name, *amps);
    }

    let origin = Vec3::zeros();
    let b0 = compiled.field(&drive, &origin)?;
    let grad = compiled.gradient(&drive, &origin, DEFAULT_GRADIENT_STEP_MM)?;
    let axis = crate::Axis::from(a.axis).index();

    let mut text = String::from("position_mm,bx_g,by_g,bz_g,model_bx_g,model_by_g,model_bz_g,deviation_g\n");
    let mut max_dev: f64 = 0.0;
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for k in 0..a.samples {
        let t = -a.range + 2.0 * a.range * k as f64 / (a.samples - 1) as f64;
        let mut at = Vec3::zeros();
        at[axis] = t;
        let exact = compiled.field(&drive, &at)?;
        let model = b0 + grad * at;
        let dev = (exact - model).norm();
        max_dev = max_dev.max(dev);
        for c in 0..3 {
            lo[c] = lo[c].min(exact[c]);
            hi[c] = hi[c].max(exact[c]);
        }
        text += &csv_row(&[t, exact.x, exact.y, exact.z, model.x, model.y, model.z, dev]);
    }
    let path = output_path(g, "field.csv")?;
    write_text(&path, &text)?;
    print_json(&json!({
        "file": path.display().to_string(),
        "center_field_g": vec3(&b0),
        "gradient_g_per_mm": (0..3).map(|r| json_vec(&[grad[(r, 0)], grad[(r, 1)], grad[(r, 2)]])).collect::<Vec<_>>(),
        "max_deviation_g": j(max_dev),
        "variation_g": json_vec(&[hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]),
    }));
    Ok(())
}

pub fn zero(g: &GlobalArgs, a: &ZeroArgs) -> Result<(), CliError> {
    let config = load_config(g)?;
    let bias = BiasSetting::new(a.bias[0], a.bias[1], a.bias[2]);
    bias.validate(config.supply_limit_a)?;
    let experiment = Experiment::new(config)?;
    let config = &experiment.config;

    let mut drive = Drive::single(&config.quadrupole.link, config.quadrupole.current * a.polarity as f64);
    for axis in [Axis::X, Axis::Y, Axis::Z] {
        let amps = bias.get(axis);
        if amps == 0.0 {
            continue;
        }
        let name = config.bias_pairs.get(axis).ok_or_else(|| {
            CliError::from(ProtocolError::InvalidConfig(format!("bias current on {axis} but no {axis} bias pair")))
        })?;
        drive.set(name, drive.get(name) + amps);
    }

    let state = experiment.field_state(&bias, a.polarity);
    let analytic = displaced_zero_inhomogeneous(state.quadrupole, &state.external)?;
    let stray = config.stray();
    let numerical = find_zero_numerical(
        |r| Ok(experiment.compiled.field(&drive, r)? + stray.at(r)),
        Vec3::zeros(),
        NewtonOptions::default(),
    )?;
    let doc = json!({
        "quadrupole_strength_g_per_mm": j(state.quadrupole.strength),
        "analytic_r0_mm": vec3(&analytic),
        "numerical_r0_mm": vec3(&numerical.position),
        "residual_gauss": j(numerical.residual_gauss),
        "iterations": numerical.iterations,
        "disagreement_um": j((analytic - numerical.position).norm() * 1e3),
    });
    let path = output_path(g, "zero.json")?;
    write_text(&path, &(serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n"))?;
    print_json(&doc);
    Ok(())
}

pub fn shots(g: &GlobalArgs) -> Result<(), CliError> {
    let config = load_config(g)?;
    let experiment = Experiment::new(config)?;
    let records = experiment.run_shots_with_progress(g.workers, |done, total, b| {
        eprintln!("condition {done}/{total} done (Ix={} Iy={} Iz={})", num(b.ix), num(b.iy), num(b.iz));
    })?;
    let result = experiment.analyze(records)?;

    let shots_path = output_path(g, "shots.csv")?;
    write_records_csv(&result.records, create(&shots_path)?)?;
    let summary_path = output_path(g, "summary.json")?;
    write_text(&summary_path, &(result.summary_json() + "\n"))?;

    let stray = result.stray_estimate;
    print_json(&json!({
        "shots": result.shots,
        "qc_failures": result.qc_failures,
        "empty_clusters": result.empty_clusters,
        "stray_b_y_g": json_opt(stray.and_then(|s| s.b_y)),
        "stray_b_z_g": json_opt(stray.and_then(|s| s.b_z)),
        "files": [shots_path.display().to_string(), summary_path.display().to_string()],
    }));
    Ok(())
}

pub fn compensate(g: &GlobalArgs, a: &CompensateArgs) -> Result<(), CliError> {
    let config = load_config(g)?;
    let file = File::open(&a.records).map_err(|e| CliError::io(&a.records, e))?;
    let records = read_records_csv(file, config.mode)?;
    let experiment = Experiment::new(config)?;
    let result = experiment.analyze(records)?;

    let axes: Vec<Axis> = match a.axis {
        Some(axis) => {
            let axis = Axis::from(axis);
            if result.compensation.get(axis).is_none() {
                // Surfaces the reason the axis could not be fitted.
                compensation_regression(&result.rhombi, axis, experiment.config.regression)?;
                return Err(ProtocolError::InvalidConfig(format!("no {axis} bias pair is configured")).into());
            }
            vec![axis]
        }
        None => [Axis::Y, Axis::Z].into_iter().filter(|&ax| result.compensation.get(ax).is_some()).collect(),
    };
    if axes.is_empty() {
        return Err(ProtocolError::DegenerateDesign.into());
    }

    let mut files = Vec::new();
    for &axis in &axes {
        let entry = result.compensation.get(axis).expect("axis was fitted");
        let component = if axis == Axis::Y { 0 } else { 1 };
        let mut text = String::from("current_a,displacement_px,displacement_stderr_px,fit_px\n");
        for p in &result.rhombi {
            let i = p.bias.get(axis);
            let se = p.displacement_stderr.map(|s| num(s[component])).unwrap_or_default();
            let _ = writeln!(
                text,
                "{},{},{},{}",
                num(i),
                num(p.displacement[component]),
                se,
                num(entry.intercept + entry.slope * i)
            );
        }
        let path = output_path(g, &format!("regression_{axis}.csv"))?;
        write_text(&path, &text)?;
        files.push(path.display().to_string());
    }
    let summary_path = output_path(g, "compensation.json")?;
    write_text(&summary_path, &(result.summary_json() + "\n"))?;
    files.push(summary_path.display().to_string());

    let crossings: serde_json::Map<String, Value> = axes
        .iter()
        .map(|&axis| {
            let e = result.compensation.get(axis).expect("axis was fitted");
            (
                axis.to_string(),
                json!({
                    "current_at_a": j(e.current_at),
                    "stderr_a": json_opt(e.crossing_stderr),
                    "ci95_a": json_opt(e.crossing_ci95),
                    "stray_g": j(-experiment.alpha.get(axis) * e.current_at),
                }),
            )
        })
        .collect();
    print_json(&json!({ "crossings": crossings, "files": files }));
    Ok(())
}

pub fn allan(g: &GlobalArgs, a: &AllanArgs) -> Result<(), CliError> {
    let config = load_config(g)?;
    let um_per_px = config.imaging.geometry.mm_per_pixel() * 1e3;
    let coordinates = match a.coordinate {
        Some(c) => vec![Coordinate::from(c)],
        None => vec![Coordinate::Y, Coordinate::Z],
    };
    let mut report = serde_json::Map::new();
    for coordinate in coordinates {
        let file = File::open(&a.records).map_err(|e| CliError::io(&a.records, e))?;
        let series = PositionSeries::read_csv(file, coordinate)?;
        let sizes = a.sizes.clone().unwrap_or_else(|| default_sizes(series.values.len()));
        let curve = allan_deviation(&series, &sizes)?;
        let first = curve.entries[0];
        let mut text = String::from("n,sigma_px,n_groups,white_reference_px\n");
        for e in &curve.entries {
            let reference = first.sigma_px * (first.n as f64 / e.n as f64).sqrt();
            let _ = writeln!(text, "{},{},{},{}", e.n, num(e.sigma_px), e.n_groups, num(reference));
        }
        let label = match coordinate {
            Coordinate::Y => "y",
            Coordinate::Z => "z",
        };
        let path = output_path(g, &format!("allan_{label}.csv"))?;
        write_text(&path, &text)?;

        let gradient = if coordinate == Coordinate::Z { 2.0 * a.gradient } else { a.gradient };
        let floor = match noise_floor(&curve, DEFAULT_PLATEAU_WINDOW) {
            Ok(f) => {
                let u = field_uncertainty(f.floor_px * um_per_px, gradient);
                json!({
                    "floor_px": j(f.floor_px),
                    "spread_px": j(f.spread_px),
                    "entries_used": f.entries_used,
                    "floor_um": j(u.delta_position_um),
                    "gradient_g_per_mm": j(u.gradient_g_per_mm),
                    "delta_b_gauss": j(u.delta_b_gauss),
                })
            }
            Err(_) => Value::Null,
        };
        report.insert(
            label.to_string(),
            json!({ "samples": series.values.len(), "file": path.display().to_string(), "noise_floor": floor }),
        );
    }
    print_json(&Value::Object(report));
    Ok(())
}

pub fn sensitivity(g: &GlobalArgs, a: &SensitivityArgs) -> Result<(), CliError> {
    if !(a.range.is_finite() && a.range >= 0.0) {
        return Err(CliError::usage(format!("--range must be non-negative, got {}", a.range)));
    }
    if a.steps == 0 {
        return Err(CliError::usage("--steps must be at least 1"));
    }
    let config = load_config(g)?;
    let compiled = config.assembly.resolve()?.compile(config.segments_per_loop)?;
    let model = CommonModeModel {
        link: config.quadrupole.link.clone(),
        nominal_current: config.quadrupole.current,
        winding_asymmetry: a.asymmetry.unwrap_or(CALIBRATED_WINDING_ASYMMETRY),
    };
    let um_per_px = config.imaging.geometry.mm_per_pixel() * 1e3;
    let base = model.zero_at(&compiled, 0.0)?.position.z;

    let mut text = String::from("delta_a,shift_um,shift_px\n");
    let mut extreme: f64 = 0.0;
    for k in 0..a.steps {
        let delta = if a.steps == 1 { 0.0 } else { -a.range + 2.0 * a.range * k as f64 / (a.steps - 1) as f64 };
        let shift_um = if delta == 0.0 { 0.0 } else { (model.zero_at(&compiled, delta)?.position.z - base) * 1e3 };
        extreme = extreme.max(shift_um.abs());
        text += &csv_row(&[delta, shift_um, shift_um / um_per_px]);
    }
    let path = output_path(g, "sensitivity.csv")?;
    write_text(&path, &text)?;
    print_json(&json!({
        "nominal_current_a": j(model.nominal_current),
        "winding_asymmetry": j(model.winding_asymmetry),
        "max_abs_shift_um": j(extreme),
        "file": path.display().to_string(),
    }));
    Ok(())
}
