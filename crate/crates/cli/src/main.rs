//! `buoy`: field maps, trap zeros, polarity-reversal campaigns, compensation
//! regressions, Allan analysis and current-sensitivity sweeps, each written
//! as plot-ready CSV/JSON.

mod commands;
mod error;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use buoy::protocol::{Axis, Mode};
use buoy::stats::Coordinate;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "buoy", version, about = "Cold-atom quadrupole trap buoy-effect simulator")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Experiment configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true, env = "BUOY_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Overrides `base_seed` of the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for campaigns; 0 means one per logical core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    /// Overrides the simulation mode of the configuration.
    #[arg(long, global = true)]
    pub mode: Option<ModeArg>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum ModeArg {
    Fast,
    Full,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fast => Mode::Fast,
            ModeArg::Full => Mode::Full,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateArg {
    Y,
    Z,
}

impl From<CoordinateArg> for Coordinate {
    fn from(c: CoordinateArg) -> Self {
        match c {
            CoordinateArg::Y => Coordinate::Y,
            CoordinateArg::Z => Coordinate::Z,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact coil field along a line through the centre next to its linear model.
    Field(FieldArgs),
    /// Trap zero from the linear model and from the exact coil field.
    Zero(ZeroArgs),
    /// Runs a polarity-reversal campaign: shots.csv and summary.json.
    Shots,
    /// Cluster, midpoint and compensation analysis of a shot-record CSV.
    Compensate(CompensateArgs),
    /// Non-overlapping Allan deviation of fitted centres.
    Allan(AllanArgs),
    /// Axial zero shift under common-mode changes of the quadrupole current.
    Sensitivity(SensitivityArgs),
}

#[derive(Args, Debug)]
pub struct FieldArgs {
    /// Direction of the sampled line.
    #[arg(long, value_enum, default_value = "x")]
    pub axis: AxisArg,
    /// Half length of the line, mm.
    #[arg(long, default_value_t = 0.05)]
    pub range: f64,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// Logical current `name=amps`, repeatable. Defaults to the quadrupole drive.
    #[arg(long = "drive", value_parser = parse_drive)]
    pub drives: Vec<(String, f64)>,
}

#[derive(Args, Debug)]
pub struct ZeroArgs {
    /// Bias-pair currents `ix,iy,iz` in A.
    #[arg(long, value_parser = parse_triple, default_value = "0,0,0")]
    pub bias: [f64; 3],
    #[arg(long, default_value_t = 1, allow_negative_numbers = true, value_parser = parse_polarity)]
    pub polarity: i8,
}

#[derive(Args, Debug)]
pub struct CompensateArgs {
    /// Shot-record CSV as written by `shots`.
    #[arg(long)]
    pub records: PathBuf,
    /// Restrict the regression to one axis; an axis that cannot be fitted is then an error.
    #[arg(long, value_enum)]
    pub axis: Option<AxisArg>,
}

#[derive(Args, Debug)]
pub struct AllanArgs {
    /// Shot-record CSV or a single-column series.
    #[arg(long)]
    pub records: PathBuf,
    /// Coordinate to analyse; both when omitted.
    #[arg(long, value_enum)]
    pub coordinate: Option<CoordinateArg>,
    /// Comma-separated ensemble sizes; a logarithmic ladder when omitted.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Radial field gradient used to express the floor in Gauss, G/mm. The
    /// axial gradient is twice this.
    #[arg(long, default_value_t = 2.5)]
    pub gradient: f64,
}

#[derive(Args, Debug)]
pub struct SensitivityArgs {
    /// Largest common-mode excursion, A; the sweep is symmetric.
    #[arg(long, default_value_t = 3e-4)]
    pub range: f64,
    #[arg(long, default_value_t = 13)]
    pub steps: usize,
    /// Fractional winding asymmetry of the quadrupole pair.
    #[arg(long)]
    pub asymmetry: Option<f64>,
}

fn parse_drive(s: &str) -> Result<(String, f64), String> {
    let (name, amps) = s.split_once('=').ok_or_else(|| format!("expected name=amps, got {s:?}"))?;
    let amps: f64 = amps.trim().parse().map_err(|_| format!("not a current: {amps:?}"))?;
    Ok((name.trim().to_string(), amps))
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.trim().parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(out)
}

fn parse_polarity(s: &str) -> Result<i8, String> {
    match s.trim() {
        "1" | "+1" => Ok(1),
        "-1" => Ok(-1),
        _ => Err(format!("polarity must be 1 or -1, got {s:?}")),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Field(a) => commands::field(g, a),
        Command::Zero(a) => commands::zero(g, a),
        Command::Shots => commands::shots(g),
        Command::Compensate(a) => commands::compensate(g, a),
        Command::Allan(a) => commands::allan(g, a),
        Command::Sensitivity(a) => commands::sensitivity(g, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => CliError::usage(e.to_string().trim_end()).report(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
