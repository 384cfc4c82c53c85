use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use renewal_cli::{execute, list_presets, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "renewal", version, about = "Solve and certify nonlocal renewal systems")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory, overriding the configuration.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Seed for probe sampling, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration file.
    Run { config: PathBuf },
    /// Print the shipped model presets.
    ListPresets,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Invalid(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::ListPresets => {
            print!("{}", list_presets());
            Ok(true)
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(&config).map_err(|e| CliError::Io(format!("{}: {e}", config.display())))?;
            let mut cfg = RunConfig::parse(&text)?;
            if let Some(dir) = cli.output {
                cfg.output.dir = dir;
            }
            if let Some(seed) = cli.seed {
                cfg.output.seed = seed;
            }
            let cfg = cfg.resolve()?;
            let summary = execute(&cfg, &cfg.output.dir)?;
            for (name, pass) in &summary.certificates {
                println!("{:<24} {}", name, if *pass { "pass" } else { "FAIL" });
            }
            println!("final time {}", summary.final_time);
            Ok(summary.all_pass())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
