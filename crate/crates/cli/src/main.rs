use std::process::ExitCode;

use clap::Parser;

use kaclab_cli::config::parse_config;
use kaclab_cli::runner::run;
use kaclab_cli::CliError;

/// Monte-Carlo and spectral laboratory for Dirichlet, penetration and
/// penalized heat semigroups.
#[derive(Parser, Debug)]
#[command(name = "kaclab", version, about)]
struct Args {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: String,

    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,

    /// Worker thread count (overrides KACLAB_WORKERS; default: all cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<String>,

    /// Step size override.
    #[arg(long)]
    h: Option<f64>,

    /// Path count override.
    #[arg(long)]
    paths: Option<u64>,

    /// Suppress the summary on standard output.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match try_main(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.error_record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn try_main(args: &Args) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config)?;
    let config = parse_config(&text)?;
    let workers = args.workers.or_else(|| {
        std::env::var("KACLAB_WORKERS").ok().and_then(|v| v.parse().ok())
    });
    let output = run(&config, workers, args.seed, args.h, args.paths, args.out.clone())?;
    if !args.quiet {
        for line in &output.summary {
            println!("{line}");
        }
        for f in &output.files {
            println!("wrote {}", f.display());
        }
    }
    Ok(())
}
