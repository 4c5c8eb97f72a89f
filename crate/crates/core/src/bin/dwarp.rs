use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dwarp::harness::{bundled, load_scenario, run_checks, CheckKind, RunOptions, DEFAULT_BUDGET};

#[derive(Parser)]
#[command(name = "dwarp", version, about = "Numerical checks for doubly warped product immersions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks of a scenario file (or `bundled:<name>`).
    Check {
        file: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tolerance for checks that do not set their own.
        #[arg(long)]
        tol: Option<f64>,
        /// Number of seeded sample points, replacing the file's sampling.
        #[arg(long)]
        points: Option<usize>,
        /// Plane samples for the sectional curvature maximum.
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Run only the named checks; repeatable.
        #[arg(long = "check")]
        checks: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Command::Check { file, seed, tol, points, budget, format, checks } = cli.command;
    if tol.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
        eprintln!("error: --tol must be a positive number");
        return ExitCode::from(2);
    }
    if points == Some(0) {
        eprintln!("error: --points must be positive");
        return ExitCode::from(2);
    }
    let mut only = Vec::new();
    for name in &checks {
        match CheckKind::from_name(name) {
            Some(k) => only.push(k),
            None => {
                let known: Vec<&str> = CheckKind::ALL.iter().map(|k| k.name()).collect();
                eprintln!("error: unknown check `{name}`; known checks: {}", known.join(", "));
                return ExitCode::from(2);
            }
        }
    }
    let loaded = match file.strip_prefix("bundled:") {
        Some(name) => bundled(name),
        None => load_scenario(&PathBuf::from(&file)),
    };
    let scenario = match loaded {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { seed, tolerance: tol, points, budget, only };
    let report = run_checks(&scenario, &opts);
    match format {
        Format::Text => print!("{}", report.to_text()),
        Format::Json => println!("{}", report.to_json()),
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
