//! Command-line front end.

mod config;
mod output;
mod tasks;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use config::{FileConfig, ProbeConfig, SweepConfig};
pub use output::{derived_path, CSV_HEADER_PREFIX};
pub use tasks::{run, validate, Diagnostic, Diagnostics};

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// G(z_j, z_l) between resonant layers and the cavity field on a z grid.
    GreensDump,
    /// Coupling matrix and drive vector.
    Hamiltonian,
    /// Eigenvalues and layer weights of every eigenstate.
    Eigen,
    /// Winding number at one geometry.
    Winding,
    /// Winding number over a (d_v, d_w) grid.
    PhaseDiagram,
    /// Reflectivity spectrum and its peak/dip report.
    Reflectivity,
    /// Eigenvalue real parts versus d_v at fixed d_w.
    DvSweep,
    /// Check the configuration without computing anything.
    Validate,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::GreensDump => "greens-dump",
            Task::Hamiltonian => "hamiltonian",
            Task::Eigen => "eigen",
            Task::Winding => "winding",
            Task::PhaseDiagram => "phase-diagram",
            Task::Reflectivity => "reflectivity",
            Task::DvSweep => "dv-sweep",
            Task::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Materials database replacing the built-in one.
    #[arg(long, global = true)]
    pub materials: Option<PathBuf>,
    /// Output file; derived files get an infix (`out.field.csv`). Stdout if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Intracell spacer d_v (nm).
    #[arg(long, global = true)]
    pub dv: Option<f64>,
    /// Intercell spacer d_w (nm).
    #[arg(long, global = true)]
    pub dw: Option<f64>,
    /// Grazing angle (mrad).
    #[arg(long = "angle-mrad", global = true)]
    pub angle_mrad: Option<f64>,
    /// Number of cavities.
    #[arg(long = "n-cavities", global = true)]
    pub n_cavities: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "xcavity", version, about = "Stacked thin-film x-ray cavity simulator")]
struct Cli {
    #[command(subcommand)]
    task: Task,
    #[command(flatten)]
    overrides: Overrides,
}

/// Fully resolved invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: FileConfig,
    pub task: Task,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn new(task: Task, file: FileConfig) -> Self {
        RunConfig { file, task, out: None, format: Format::Csv, threads: None }
    }

    /// Loads `--config` (if any) and applies the command-line overrides.
    pub fn resolve(task: Task, o: &Overrides) -> crate::Result<Self> {
        let mut file = match &o.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(m) = &o.materials {
            file.materials = Some(m.clone());
        }
        if let Some(v) = o.dv {
            file.stack.d_v_nm = v;
        }
        if let Some(v) = o.dw {
            file.stack.d_w_nm = v;
        }
        if let Some(v) = o.angle_mrad {
            file.probe.angle_mrad = v;
        }
        if let Some(v) = o.n_cavities {
            file.stack.n_cavities = v;
        }
        Ok(RunConfig { file, task, out: o.out.clone(), format: o.format, threads: o.threads })
    }
}

#[derive(Debug, Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
}

/// Exit status for an error: 2 configuration, 3 numerical, 4 I/O.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Validation { .. } | Error::UnknownMaterial(_) => 2,
        Error::Io { .. } => 4,
        Error::NotResonant(_)
        | Error::Domain(_)
        | Error::SourcePlacement(_)
        | Error::Dimension { .. }
        | Error::Numeric(_) => 3,
    }
}

pub fn error_json(e: &Error) -> String {
    let (kind, field) = match e {
        Error::Parse { .. } => ("parse", None),
        Error::Validation { field, .. } => ("validation", Some(field.as_str())),
        Error::UnknownMaterial(_) => ("unknown-material", None),
        Error::NotResonant(_) => ("not-resonant", None),
        Error::Domain(_) => ("domain", None),
        Error::SourcePlacement(_) => ("source-placement", None),
        Error::Dimension { .. } => ("dimension", None),
        Error::Numeric(_) => ("numeric", None),
        Error::Io { .. } => ("io", None),
    };
    serde_json::to_string(&ErrorReport { error: kind, message: e.to_string(), field }).expect("serializable")
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = Error::Parse { what: "command line".into(), reason: e.to_string().trim().to_string() };
            eprintln!("{}", error_json(&err));
            return 2;
        }
    };
    let result = RunConfig::resolve(cli.task, &cli.overrides).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
