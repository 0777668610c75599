use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpklab_cli::{load_scenario, run_scenario, CliError, BUNDLED};

#[derive(Parser)]
#[command(name = "fpklab", version, about = "Nonlinear Fokker-Planck-Kolmogorov experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every analysis of a scenario file or bundled scenario.
    Run {
        scenario: String,
        /// Output directory, overriding the scenario's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: String },
    /// Print the names of the bundled scenarios.
    ListExamples,
}

fn configure_threads() {
    if let Some(n) = std::env::var("FPKLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A second initialization only fails if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn run(args: Args) -> Result<i32, CliError> {
    match args.command {
        Command::Run { scenario, out } => {
            let sc = load_scenario(&scenario)?;
            let report = run_scenario(&sc, out.as_deref())?;
            for a in &report.manifest.analyses {
                let tag = if a.ok { "ok" } else { "FAILED" };
                println!("{:<15} {:<6} {}", a.kind, tag, a.message);
            }
            println!(
                "{} files written to {}",
                report.manifest.files.len() + 1,
                report.out_dir.display()
            );
            Ok(report.exit_code)
        }
        Command::Validate { scenario } => {
            let sc = load_scenario(&scenario)?;
            println!("{}: {} analyses, grid {:?}", sc.name, sc.analyses.len(), sc.grid.cells);
            Ok(0)
        }
        Command::ListExamples => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    match run(Args::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
