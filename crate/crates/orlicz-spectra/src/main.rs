//! Thin command-line wrapper: loads a JSON run configuration, applies
//! dotted-path overrides, and dispatches to the library tasks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use orlicz_spectra::cli::run_task;
use orlicz_spectra::config::{apply_override, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "orlicz-spectra",
    about = "Eigenvalue sweeps and validation batteries for the fractional m-Laplacian",
    after_help = "Any configuration field can be overridden with --path.to.field=value,\n\
                  e.g. --mesh.k=63 --young.kind=exp --solver.restarts=4."
)]
struct Args {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task override: solve | sweep | validate.
    #[arg(long)]
    task: Option<String>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path override.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    // Split off --path.to.field=value overrides before clap sees them.
    let mut clap_args: Vec<String> = Vec::new();
    let mut overrides: Vec<(String, String)> = Vec::new();
    for (idx, arg) in std::env::args().enumerate() {
        if idx == 0 {
            clap_args.push(arg);
            continue;
        }
        if let Some(rest) = arg.strip_prefix("--") {
            if let Some((key, value)) = rest.split_once('=') {
                if !matches!(key, "config" | "task" | "seed" | "out" | "help" | "version") {
                    overrides.push((key.to_string(), value.to_string()));
                    continue;
                }
            }
        }
        clap_args.push(arg);
    }
    let args = Args::parse_from(&clap_args);

    let mut tree = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => match serde_json::from_str::<serde_json::Value>(&text) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("error: cannot parse {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            },
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => serde_json::to_value(RunConfig::default()).expect("default config"),
    };

    let mut apply = |path: &str, value: String| -> bool {
        if let Err(e) = apply_override(&mut tree, path, &value) {
            eprintln!("error: {e}");
            return false;
        }
        true
    };
    if let Some(task) = &args.task {
        if !apply("task", task.clone()) {
            return ExitCode::from(1);
        }
    }
    if let Some(seed) = args.seed {
        if !apply("solver.rng_seed", seed.to_string()) {
            return ExitCode::from(1);
        }
    }
    if let Some(out) = &args.out {
        if !apply("output", out.to_string_lossy().into_owned()) {
            return ExitCode::from(1);
        }
    }
    for (key, value) in overrides {
        if !apply(&key, value) {
            return ExitCode::from(1);
        }
    }

    let cfg: RunConfig = match serde_json::from_value(tree) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: invalid configuration: {e}");
            return ExitCode::from(1);
        }
    };
    ExitCode::from(run_task(&cfg))
}
