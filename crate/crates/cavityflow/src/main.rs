use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cavityflow::config::RunConfig;
use cavityflow::run::{self, Outcome, RunError};
use clap::{Parser, Subcommand};

/// Steady lid-driven cavity flow solver (Taylor-Hood P2/P1 finite elements).
#[derive(Debug, Parser)]
#[command(name = "cavityflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve at one Reynolds number.
    Solve { config: PathBuf },
    /// Reynolds-number continuation (bisection, or a fixed schedule).
    Continue { config: PathBuf },
    /// Repeat the solve for each relaxation parameter in `[sweep]`.
    Sweep { config: PathBuf },
    /// Print statistics of an MSH file or a built-in mesh (`square:M`, `semi_ellipse:M`).
    MeshInfo { mesh: String },
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os("CAVITYFLOW_OUTPUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output.dir.clone(),
    }
}

fn run_config(path: &Path, f: fn(&RunConfig, &Path) -> Result<Outcome, RunError>) -> u8 {
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return 1;
        }
    };
    let dir = output_dir(&cfg);
    match f(&cfg, &dir) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            println!("output: {}", dir.display());
            if outcome.success {
                0
            } else {
                2
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code() as u8
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve { config } => run_config(&config, run::cmd_solve),
        Command::Continue { config } => run_config(&config, run::cmd_continue),
        Command::Sweep { config } => run_config(&config, run::cmd_sweep),
        Command::MeshInfo { mesh } => match run::geometry_from_arg(&mesh).and_then(|g| run::build_mesh(&g)) {
            Ok(m) => {
                print!("{}", run::mesh_info(&m));
                0
            }
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
    };
    ExitCode::from(code)
}
