//! Command-line front end. Exit codes: 0 on success, 1 for anything
//! wrong with the configuration or invocation, 2 for numeric failures
//! inside the solver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use ssw_cli::config::{self, RunKind};
use ssw_cli::{manifest, runner};

#[derive(Parser)]
#[command(
    name = "ssw",
    version,
    about = "Klein-Gordon pair creation in strong localized fields",
    after_help = "Exit codes: 0 ok, 1 configuration error, 2 numeric failure."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides `out` from the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// BLAS thread count; defaults to $SSW_THREADS, then auto.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Suppress everything except errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Track the spectrum across a list of potential strengths.
    Sweep,
    /// Evolve the vacuum and record the created-pair number N(t).
    Evolve,
    /// Bisect for a critical strength (coalescence, overlap, ...).
    Critical,
    /// Evolve with the phenomenological back-reaction feedback.
    Backreact,
    /// Spatial densities of the bound and resonance states.
    Density,
    /// Schema-check a config file without running anything.
    Validate,
}

impl Cmd {
    fn run_kind(self) -> Option<RunKind> {
        Some(match self {
            Cmd::Sweep => RunKind::Sweep,
            Cmd::Evolve => RunKind::Evolve,
            Cmd::Critical => RunKind::Critical,
            Cmd::Backreact => RunKind::Backreact,
            Cmd::Density => RunKind::Density,
            Cmd::Validate => return None,
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; everything else is a usage
            // problem and lands in the config-error exit class.
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };

    init_logging(cli.quiet);
    if let Some(n) = cli.threads.or_else(threads_from_env) {
        set_blas_threads(n);
    }

    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <PATH> is required");
        return ExitCode::from(1);
    };

    match cli.cmd.run_kind() {
        None => validate(config_path),
        Some(kind) => run(kind, config_path, &cli),
    }
}

fn validate(path: &Path) -> ExitCode {
    match config::diagnostics(path) {
        Ok(diags) if diags.is_empty() => ExitCode::SUCCESS,
        Ok(diags) => {
            for d in &diags {
                println!("{d}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn run(kind: RunKind, path: &Path, cli: &Cli) -> ExitCode {
    let exp = match config::load(path) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    if exp.kind != kind {
        eprintln!(
            "run.kind: config declares {:?} but the {} command was invoked",
            exp.kind.as_str(),
            kind.as_str()
        );
        return ExitCode::from(1);
    }

    let result = match runner::execute(&exp) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let out_dir = cli
        .out
        .clone()
        .or_else(|| exp.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = write_outputs(&exp, kind, &result, &out_dir) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }

    if !cli.quiet {
        for note in &result.notes {
            println!("{note}");
        }
        for f in &result.files {
            println!("wrote {}", out_dir.join(f.name).display());
        }
        println!("wrote {}", out_dir.join(manifest::MANIFEST_NAME).display());
    }
    ExitCode::SUCCESS
}

fn write_outputs(
    exp: &config::Experiment,
    kind: RunKind,
    result: &runner::RunOutput,
    out_dir: &Path,
) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let names: Vec<String> = result.files.iter().map(|f| f.name.to_string()).collect();
    for f in &result.files {
        fs::write(out_dir.join(f.name), &f.contents)?;
    }
    fs::write(
        out_dir.join(manifest::MANIFEST_NAME),
        manifest::render(exp, kind.as_str(), &names),
    )
}

fn init_logging(quiet: bool) {
    let default = if quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default))
        .format_timestamp(None)
        .init();
}

fn threads_from_env() -> Option<usize> {
    std::env::var("SSW_THREADS").ok()?.trim().parse().ok()
}

// OpenBLAS reads its environment at load time, which happens before main,
// so adjusting the thread count needs the runtime call.
extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

fn set_blas_threads(n: usize) {
    let n = n.clamp(1, 1024) as std::os::raw::c_int;
    unsafe { openblas_set_num_threads(n) };
}
