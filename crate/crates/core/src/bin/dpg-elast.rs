use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dpg_elast::study::{rows_to_csv, run_convergence_study, StudyConfig};
use dpg_elast::Error;

#[derive(Parser)]
#[command(name = "dpg-elast", about = "DPG convergence studies for 2D linear elasticity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and print the report as CSV.
    Run {
        /// Key-value configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        benchmark: Option<String>,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        steps: Option<String>,
        #[arg(long)]
        p: Option<String>,
        #[arg(long = "delta-p")]
        delta_p: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        lambda: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<String>,
        /// CSV output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(3);
        }
        Err(e) => e.exit(),
    };
    let Command::Run { config, method, benchmark, mode, steps, p, delta_p, lambda, mu, out } = cli.command;
    let mut text = match config {
        Some(path) => match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("config error: cannot read {}: {e}", path.display());
                return ExitCode::from(3);
            }
        },
        None => String::new(),
    };
    let overrides = [
        ("benchmark", benchmark),
        ("method", method),
        ("mode", mode),
        ("steps", steps),
        ("p", p),
        ("delta_p", delta_p),
        ("lambda", lambda),
        ("mu", mu),
        ("output", out.map(|o| o.display().to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            text.push_str(&format!("\n{key} = {v}"));
        }
    }
    let cfg = match StudyConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(3);
        }
    };
    match run_convergence_study(&cfg) {
        Ok(rows) => {
            print!("{}", rows_to_csv(&rows));
            ExitCode::SUCCESS
        }
        Err(Error::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("solver failure: {e}");
            ExitCode::from(2)
        }
    }
}
