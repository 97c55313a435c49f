//! `adiabatics`: runs declarative experiment specs and writes plot-ready results.

mod output;
mod spec;
mod tasks;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{info, warn};

use output::{sha256_hex, FileEntry, Manifest};
use spec::{ExperimentSpec, Overrides, MODEL_KINDS};

/// Default output root when neither `--out` nor an absolute `output.dir` is given.
pub const OUTPUT_ROOT_ENV: &str = "ADIABATICS_OUTPUT_ROOT";

#[derive(Debug)]
pub enum CliError {
    /// Malformed spec or failed precondition.
    Schema(String),
    /// The computation itself failed.
    Numeric(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "spec error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(name = "adiabatics", version, about = "Adiabatic geometry and effective slow dynamics from declarative specs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a spec file.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = all cores; overrides numeric.threads).
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides numeric.seed and the seed of random models.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a spec and its preconditions without computing anything.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the supported model kinds and their parameters.
    ListModels,
}

fn load(path: &Path, overrides: Overrides) -> Result<(ExperimentSpec, String, spec::BuiltModel), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    let mut spec = ExperimentSpec::parse(&text)?;
    spec.resolve(overrides);
    let built = spec.build_model()?;
    spec.check(&built)?;
    Ok((spec, sha256_hex(text.as_bytes()), built))
}

fn output_dir(spec: &ExperimentSpec, spec_path: &Path, out: Option<PathBuf>) -> PathBuf {
    if let Some(out) = out {
        return out;
    }
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    match &spec.output.dir {
        Some(dir) => root.join(dir),
        None => root.join(spec_path.file_stem().unwrap_or_default()),
    }
}

fn run(spec_path: &Path, out: Option<PathBuf>, overrides: Overrides) -> Result<(), CliError> {
    let start = Instant::now();
    let (spec, hash, built) = load(spec_path, overrides)?;
    let dir = output_dir(&spec, spec_path, out);
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(spec.numeric.threads).build_global() {
        warn!("thread pool already initialised: {e}");
    }
    info!("running {} on {}", spec.task.name(), tasks::describe_model(built.model.as_ref()));

    let result = tasks::run(&spec, &built)?;
    let mut files: Vec<(String, Vec<u8>)> =
        result.tables.iter().map(|t| (t.file_name(), t.to_csv().into_bytes())).collect();
    let entries = result
        .tables
        .iter()
        .zip(&files)
        .map(|(t, (name, bytes))| FileEntry { file: name.clone(), rows: t.rows.len(), sha256: sha256_hex(bytes) })
        .collect();
    let manifest = Manifest {
        tool: "adiabatics",
        version: env!("CARGO_PKG_VERSION"),
        spec_path: spec_path.display().to_string(),
        spec_sha256: hash,
        task: spec.task.name(),
        status: if result.failures == 0 { "ok" } else { "partial" },
        wall_time_seconds: start.elapsed().as_secs_f64(),
        resolved_spec: serde_json::to_value(&spec).map_err(|e| CliError::Io(e.to_string()))?,
        files: entries,
        failures: result.failures,
        summary: result.summary,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    files.push(("manifest.json".into(), format!("{json}\n").into_bytes()));
    output::write_all(&dir, &files, spec.output.overwrite)?;
    for (k, v) in &manifest.summary {
        info!("{k} = {v}");
    }
    info!("wrote {} files to {}", files.len(), dir.display());
    if result.failures > 0 {
        return Err(CliError::Numeric(format!(
            "{} point(s) failed; see {}",
            result.failures,
            dir.join("failures.csv").display()
        )));
    }
    Ok(())
}

fn validate(spec_path: &Path, overrides: Overrides) -> Result<(), CliError> {
    let (spec, hash, built) = load(spec_path, overrides)?;
    let resolved = toml::to_string(&spec).map_err(|e| CliError::Schema(e.to_string()))?;
    println!("OK: {} on {}", spec.task.name(), tasks::describe_model(built.model.as_ref()));
    println!("# spec sha256 {hash}\n# resolved:\n{resolved}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.quiet { log::LevelFilter::Warn } else { log::LevelFilter::Info })
        .format_timestamp(None)
        .parse_default_env()
        .init();
    let outcome = match cli.command {
        Command::Run { spec, out, threads, seed } => run(&spec, out, Overrides { threads, seed }),
        Command::Validate { spec, threads, seed } => validate(&spec, Overrides { threads, seed }).map_err(|e| match e {
            CliError::Schema(_) => e,
            other => CliError::Schema(other.to_string()),
        }),
        Command::ListModels => {
            for (kind, params) in MODEL_KINDS {
                println!("{kind:<20} {params}");
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
