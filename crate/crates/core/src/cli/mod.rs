//! Command-line front end.
//!
//! `foliation-poisson run <manifest>` executes a scenario and reports;
//! `foliation-poisson render <report.json>` re-renders a saved report as text.

pub mod geometry;
pub mod manifest;
pub mod report;
pub mod run;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

pub use geometry::{parse_geometry, Geometry};
pub use manifest::{ConfigError, Manifest, TaskSpec};
pub use report::{ReportDocument, TaskReport};
pub use run::run_manifest;

/// Exit code for unreadable or invalid input.
pub const EXIT_CONFIG: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Both,
}

#[derive(Debug, Parser)]
#[command(
    name = "foliation-poisson",
    version,
    about = "Verify foliation and Poisson-geometry identities on a coordinate patch"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the tasks of a manifest.
    Run(RunArgs),
    /// Print the text form of a saved JSON report.
    Render {
        /// JSON report written by `run --out`.
        report: PathBuf,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Manifest JSON file.
    pub manifest: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the sampling seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the number of sample points
    #[arg(long)]
    pub points: Option<usize>,
    /// Override the absolute tolerance
    #[arg(long)]
    pub tol_abs: Option<f64>,
    /// Override the relative tolerance
    #[arg(long)]
    pub tol_rel: Option<f64>,
    /// `text` prints text; `json` prints JSON unless --out is given; `both`
    /// prints text and writes JSON to --out.
    #[arg(long, value_enum, default_value_t = Format::Both)]
    pub format: Format,
    /// Record wall-clock time (makes reports differ between runs).
    #[arg(long)]
    pub timing: bool,
}

/// Load a manifest and apply command-line overrides.
pub fn load_manifest(args: &RunArgs) -> Result<Manifest, ConfigError> {
    let bytes = std::fs::read(&args.manifest)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", args.manifest.display())))?;
    let mut m = Manifest::from_slice(&bytes)?;
    if let Some(seed) = args.seed {
        m.sampling.seed = seed;
    }
    if let Some(points) = args.points {
        if points == 0 {
            return Err(ConfigError::new("--points", "must be at least 1"));
        }
        m.sampling.points = points;
    }
    if let Some(t) = args.tol_abs {
        m.sampling.tol_abs = t;
    }
    if let Some(t) = args.tol_rel {
        m.sampling.tol_rel = t;
    }
    Ok(m)
}

/// Execute a run and return the report (no output is written).
pub fn execute(args: &RunArgs) -> Result<ReportDocument, ConfigError> {
    let m = load_manifest(args)?;
    let start = Instant::now();
    let mut doc = run_manifest(&m);
    if args.timing {
        doc.elapsed_ms = Some(start.elapsed().as_millis() as u64);
    }
    Ok(doc)
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn main_with(cli: Cli, stdout: &mut impl Write, stderr: &mut impl Write) -> i32 {
    match cli.command {
        Command::Run(args) => {
            let doc = match execute(&args) {
                Ok(d) => d,
                Err(e) => {
                    let _ = writeln!(stderr, "{e}");
                    return EXIT_CONFIG;
                }
            };
            if let Some(path) = &args.out {
                if args.format != Format::Text {
                    if let Err(e) = std::fs::write(path, doc.to_json()) {
                        let _ = writeln!(stderr, "cannot write {}: {e}", path.display());
                        return EXIT_CONFIG;
                    }
                }
            }
            match args.format {
                Format::Text | Format::Both => {
                    let _ = stdout.write_all(doc.render_text().as_bytes());
                }
                Format::Json if args.out.is_none() => {
                    let _ = stdout.write_all(doc.to_json().as_bytes());
                }
                Format::Json => {}
            }
            doc.exit_code()
        }
        Command::Render { report } => {
            let text = match std::fs::read_to_string(&report) {
                Ok(t) => t,
                Err(e) => {
                    let _ = writeln!(stderr, "cannot read {}: {e}", report.display());
                    return EXIT_CONFIG;
                }
            };
            match ReportDocument::from_json(&text) {
                Ok(doc) => {
                    let _ = stdout.write_all(doc.render_text().as_bytes());
                    doc.exit_code()
                }
                Err(e) => {
                    let _ = writeln!(stderr, "invalid report: {e}");
                    EXIT_CONFIG
                }
            }
        }
    }
}
