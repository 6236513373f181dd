use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wimcf::runner::{audit_file, batch_exit_code, batch_table, gap_output, run_batch, run_scenario, Overrides, RunOutput};
use wimcf::scenario::Scenario;
use wimcf::{ConfigError, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "wimcf", version, about = "Weak IMCF scenario runner and trace auditor")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for random models and certificate competitors (overrides the scenario).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiplier on every numerical tolerance (overrides the scenario).
    #[arg(long, global = true)]
    tol_scale: Option<f64>,
    /// Directory for per-scenario artifacts.
    #[arg(long, global = true, default_value = "wimcf-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run { file: PathBuf },
    /// Run every *.toml scenario in a directory.
    Batch { dir: PathBuf },
    /// Audit a trace CSV.
    Audit {
        trace: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        a0: Option<f64>,
    },
    /// Check lambda*A0 against both systolic bounds.
    Gap {
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        a0: f64,
    },
}

fn finish(result: Result<RunOutput, ConfigError>, out: &std::path::Path) -> i32 {
    let output = result.and_then(|o| {
        o.write(out)?;
        Ok(o)
    });
    match output {
        Ok(o) => {
            print!("{}", o.report_text());
            for c in o.report.failures() {
                eprintln!("FAIL {}: {}", c.name, c.note);
            }
            o.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ov = Overrides {
        seed: cli.seed,
        tol_scale: cli.tol_scale,
    };
    let code = match cli.command {
        Command::Run { file } => finish(Scenario::load(&file).and_then(|s| run_scenario(&s, ov)), &cli.out),
        Command::Audit { trace, lambda, a0 } => finish(audit_file(&trace, lambda, a0, cli.tol_scale.unwrap_or(1.0)), &cli.out),
        Command::Gap { lambda, a0 } => finish(gap_output(lambda, a0), &cli.out),
        Command::Batch { dir } => match run_batch(&dir, ov, Some(&cli.out)) {
            Ok(entries) => {
                print!("{}", batch_table(&entries));
                batch_exit_code(&entries)
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_CONFIG
            }
        },
    };
    ExitCode::from(code as u8)
}
