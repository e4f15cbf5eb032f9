use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

mod config;
mod run;

use config::{resolve, Resolved};
use run::{execute, RunError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "nvsim", version, about = "NV-center optics simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config and write its artifacts.
    Run { config: PathBuf },
    /// Print the resolved config, or every problem found in it.
    Validate { config: PathBuf },
}

fn load(path: &Path) -> Result<Resolved, ExitCode> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(EXIT_CONFIG));
        }
    };
    resolve(&text).map_err(|errs| {
        for e in errs {
            eprintln!("{e}");
        }
        ExitCode::from(EXIT_CONFIG)
    })
}

fn configure_threads() -> Result<(), ExitCode> {
    let Ok(raw) = std::env::var("NVSIM_THREADS") else {
        return Ok(());
    };
    match raw.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if the pool was already built, which cannot happen before this point.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        _ => {
            eprintln!("NVSIM_THREADS: must be a positive integer, got `{raw}`");
            Err(ExitCode::from(EXIT_CONFIG))
        }
    }
}

/// Writes `contents` to a temporary file next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(path: &Path) -> ExitCode {
    let cfg = match load(path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    if let Err(code) = configure_threads() {
        return code;
    }
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let artifacts = match execute(&cfg, base_dir) {
        Ok(a) => a,
        Err(RunError::Input { path, reason }) => {
            eprintln!("{path}: {reason}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(RunError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    };
    let data_path = with_suffix(&cfg.output, &format!(".{}", cfg.format.extension()));
    let meta_path = with_suffix(&cfg.output, ".meta.json");
    let mut meta = cfg.to_json();
    if let Value::Object(m) = &mut meta {
        m.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
        m.insert("data_file".into(), Value::String(data_path.to_string_lossy().into_owned()));
        if !artifacts.derived.is_null() {
            m.insert("derived".into(), artifacts.derived.clone());
        }
    }
    let mut meta_text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    meta_text.push('\n');
    for (p, text) in [(&data_path, artifacts.data(cfg.format)), (&meta_path, meta_text)] {
        if let Err(e) = write_atomic(p, &text) {
            eprintln!("cannot write {}: {e}", p.display());
            return ExitCode::from(EXIT_IO);
        }
    }
    let _ = writeln!(std::io::stdout().lock(), "wrote {} and {}", data_path.display(), meta_path.display());
    ExitCode::SUCCESS
}

fn validate(path: &Path) -> ExitCode {
    match load(path) {
        Ok(cfg) => {
            let mut v = cfg.to_json();
            if let Value::Object(m) = &mut v {
                m.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
            }
            let text = serde_json::to_string_pretty(&v).expect("config serializes");
            // A closed reader (e.g. `| head`) is not an error of the config.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => run(&config),
        Command::Validate { config } => validate(&config),
    }
}
