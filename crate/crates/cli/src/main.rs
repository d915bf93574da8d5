use std::process::ExitCode;

use clap::Parser;

use infobound_cli::{run, CliError, Overrides, RouteChoice, RunConfig};

/// Information bounds for the Cox coefficient under two-phase sampling.
#[derive(Debug, Parser)]
#[command(name = "infobound", version)]
struct Args {
    /// JSON run configuration.
    #[arg(long)]
    config: String,
    /// Output file; defaults to the config's `output`, else stdout.
    #[arg(long)]
    out: Option<String>,
    /// Initial number of grid cells.
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    route: Option<RouteChoice>,
}

fn execute(args: &Args) -> Result<i32, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&Overrides { grid_n: args.grid_n, seed: args.seed, threads: args.threads, route: args.route })?;
    let outcome = run(&cfg)?;
    for line in &outcome.summary {
        eprintln!("{line}");
    }
    match args.out.as_ref().or(cfg.output.as_ref()) {
        Some(path) => std::fs::write(path, &outcome.body).map_err(|source| CliError::Write { path: path.clone(), source })?,
        None => print!("{}", outcome.body),
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
