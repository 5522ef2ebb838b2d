use buoy::imaging::ImagingError;
use buoy::magnetostatics::FieldError;
use buoy::protocol::ProtocolError;
use buoy::stats::StatsError;
use buoy::trap::TrapError;

/// Exit code 1: the input was rejected.
pub const VALIDATION: u8 = 1;
/// Exit code 2: a numerical procedure failed on valid input.
pub const NUMERICAL: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
    pub code: u8,
}

impl CliError {
    pub fn new(kind: &'static str, code: u8, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into(), code }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        CliError::new("usage", VALIDATION, message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::new("io", VALIDATION, format!("{}: {e}", path.display()))
    }

    /// Writes the error as one JSON object on stderr.
    pub fn report(&self) -> ! {
        let doc = serde_json::json!({ "error": self.kind, "message": self.message, "exit_code": self.code });
        eprintln!("{doc}");
        std::process::exit(self.code as i32)
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        let (kind, code) = match &e {
            FieldError::OnConductor { .. } => ("on_conductor", NUMERICAL),
            FieldError::DegenerateSegment => ("degenerate_segment", VALIDATION),
            FieldError::UnknownCoil(_) => ("unknown_coil", VALIDATION),
            FieldError::DuplicateName(_) => ("duplicate_name", VALIDATION),
            FieldError::InvalidGeometry(_) => ("invalid_geometry", VALIDATION),
            FieldError::InvalidParameter(_) => ("invalid_parameter", VALIDATION),
        };
        CliError::new(kind, code, e.to_string())
    }
}

impl From<TrapError> for CliError {
    fn from(e: TrapError) -> Self {
        let (kind, code) = match &e {
            TrapError::ZeroQuadrupole => ("zero_quadrupole", VALIDATION),
            TrapError::SingularTrap { .. } => ("singular_trap", NUMERICAL),
            TrapError::NoConvergence { .. } => ("no_convergence", NUMERICAL),
            TrapError::SingularJacobian { .. } => ("singular_jacobian", NUMERICAL),
            TrapError::NonPhysicalGradient { .. } => ("non_physical_gradient", VALIDATION),
            TrapError::InvalidParameter(_) => ("invalid_parameter", VALIDATION),
            TrapError::Field(f) => return f.clone().into(),
        };
        CliError::new(kind, code, e.to_string())
    }
}

impl From<ImagingError> for CliError {
    fn from(e: ImagingError) -> Self {
        let (kind, code) = match &e {
            ImagingError::UntrappedCloud => ("untrapped_cloud", NUMERICAL),
            ImagingError::DegenerateFrames { .. } => ("degenerate_frames", NUMERICAL),
            ImagingError::FitDegenerate(_) => ("fit_degenerate", NUMERICAL),
            ImagingError::NoConvergence { .. } => ("no_convergence", NUMERICAL),
            ImagingError::InvalidParameter(_) => ("invalid_parameter", VALIDATION),
            ImagingError::Format(_) => ("format", VALIDATION),
            ImagingError::Io(_) => ("io", VALIDATION),
            ImagingError::Trap(t) => return t.clone().into(),
        };
        CliError::new(kind, code, e.to_string())
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        let (kind, code) = match &e {
            ProtocolError::InvalidConfig(_) => ("invalid_config", VALIDATION),
            ProtocolError::EmptyCluster => ("empty_cluster", VALIDATION),
            ProtocolError::MixedCondition(_) => ("mixed_condition", VALIDATION),
            ProtocolError::DegenerateDesign => ("degenerate_design", VALIDATION),
            ProtocolError::ZeroSlope => ("zero_slope", NUMERICAL),
            ProtocolError::ZeroAlpha(_) => ("zero_alpha", VALIDATION),
            ProtocolError::Csv(_) => ("csv", VALIDATION),
            ProtocolError::Field(f) => return f.clone().into(),
            ProtocolError::Trap(t) => return t.clone().into(),
            ProtocolError::Imaging(i) => return i.clone().into(),
        };
        CliError::new(kind, code, e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        let kind = match &e {
            StatsError::TooFewGroups { .. } => "too_few_groups",
            StatsError::TooFewEntries(_) => "too_few_entries",
            StatsError::InvalidSeries(_) => "invalid_series",
            StatsError::Csv(_) => "csv",
        };
        CliError::new(kind, VALIDATION, e.to_string())
    }
}
