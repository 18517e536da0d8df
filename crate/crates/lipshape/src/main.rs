use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lipshape::cli::{emit_initial_mesh, parse_config, run_experiment, run_self_checks};

#[derive(Parser)]
#[command(
    name = "lipshape",
    about = "Shape optimization for semilinear elliptic problems via Lipschitz steepest descent"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment, writing CSV/VTK/summary artifacts.
    Run { config: PathBuf },
    /// Run derivative and shape-gradient self-tests only.
    Check { config: PathBuf },
    /// Emit the configured initial mesh and exit.
    Mesh { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Check { config } => cmd_check(&config),
        Command::Mesh { config } => cmd_mesh(&config),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_run(path: &Path) -> lipshape::Result<ExitCode> {
    let config = parse_config(path)?;
    print!("effective configuration:\n{}", config.describe());
    let summary = run_experiment(&config)?;
    println!(
        "stop reason: {} after {} iterations ({} refinements)",
        summary.stop_reason.as_str(),
        summary.iterations,
        summary.refinements
    );
    println!(
        "final J = {:.6e}, dual norm = {:.6e}, area = {:.6}",
        summary.final_j, summary.final_dual_norm, summary.final_area
    );
    println!(
        "wrote {} in {:.1}s",
        summary.csv_path.display(),
        summary.runtime_seconds
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_check(path: &Path) -> lipshape::Result<ExitCode> {
    let config = parse_config(path)?;
    print!("effective configuration:\n{}", config.describe());
    let mut stdout = std::io::stdout();
    let pass = run_self_checks(&config, &mut stdout)?;
    println!("self checks: {}", if pass { "pass" } else { "FAIL" });
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_mesh(path: &Path) -> lipshape::Result<ExitCode> {
    let config = parse_config(path)?;
    print!("effective configuration:\n{}", config.describe());
    let (text_path, vtk_path) = emit_initial_mesh(&config)?;
    println!("wrote {} and {}", text_path.display(), vtk_path.display());
    Ok(ExitCode::SUCCESS)
}
