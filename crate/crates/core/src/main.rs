use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use spectral_mp::cli::{parse_config, run, Command, RunConfig, RunError};

/// Monte Carlo diagnostics for spectral-Galerkin jump-diffusion SDEs.
///
/// Exit status: 0 when every check passes, 1 when a check fails, 2 for
/// configuration errors and 3 for runtime errors. Failures are reported as
/// JSON on stderr and, for failed checks, in `failures.json`.
#[derive(Debug, Parser)]
#[command(name = "spectral-mp", version)]
struct Args {
    /// Command to run.
    #[arg(value_enum)]
    command: Command,

    /// TOML config file. Without it the `ou` scenario defaults are used.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides `sim.seed`.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,

    /// Output directory. Precedence: this flag, then `output.dir` in the
    /// config, then $SPECTRAL_MP_OUT, then `./spectral-mp-out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Overrides `sim.n_paths`.
    #[arg(long, value_name = "N")]
    paths: Option<usize>,

    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

fn fail(err: &RunError) -> ExitCode {
    let report = serde_json::json!({
        "report": "error",
        "kind": err.kind(),
        "message": err.to_string(),
        "detail": match err {
            RunError::Config(c) => serde_json::to_value(c).unwrap_or_default(),
            _ => serde_json::Value::Null,
        },
    });
    eprintln!("{report}");
    ExitCode::from(err.exit_code() as u8)
}

fn load(args: &Args) -> Result<RunConfig, RunError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                path: path.clone(),
                source,
            })?;
            parse_config(&text)?
        }
        None => parse_config("")?,
    };
    if let Some(seed) = args.seed {
        config.sim.seed = seed;
    }
    if let Some(paths) = args.paths {
        config.sim.n_paths = paths;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let config = match load(&args) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let out = args
        .out
        .clone()
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os("SPECTRAL_MP_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("spectral-mp-out"));
    let outcome = match run(args.command, &config, &out) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    if !args.quiet || !outcome.pass() {
        for c in &outcome.checks {
            let tag = if c.pass { "PASS" } else { "FAIL" };
            println!("{tag} {}: {}", c.name, c.detail);
        }
        if !args.quiet {
            println!("{} artifacts in {} (see MANIFEST)", outcome.artifacts.len(), out.display());
        }
    }
    if !outcome.pass() {
        let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.pass).collect();
        eprintln!(
            "{}",
            serde_json::json!({ "report": "failures", "command": args.command.name(), "failed_checks": failed })
        );
    }
    ExitCode::from(outcome.exit_code() as u8)
}
