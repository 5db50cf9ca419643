use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stagflow_cli::commands::{self, Options};
use stagflow_cli::config::{parse_list, RunConfig};

#[derive(Parser)]
#[command(name = "stagflow", version, about = "Staggered schemes for barotropic flows at low Mach number")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One run of the configured case.
    Run(Common),
    /// ε sweep against the incompressible limit.
    Sweep(Common),
    /// Traveling vortex over a set of pressure levels.
    Vortex(Common),
    /// Discrete identities of every scheme on random data.
    Check(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file (INI style); defaults apply without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// ε values, comma separated (the first one for `run`).
    #[arg(long, value_parser = parse_eps)]
    eps: Option<EpsList>,
    /// Treat diagnostic violations as errors (default).
    #[arg(long, overrides_with = "no_strict")]
    strict: bool,
    /// Report diagnostic violations as warnings only.
    #[arg(long = "no-strict")]
    no_strict: bool,
    /// Worker threads for sweeps and vortex sets.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Clone)]
struct EpsList(Vec<f64>);

fn parse_eps(s: &str) -> Result<EpsList, String> {
    let v = parse_list(s)?;
    if v.is_empty() || v.iter().any(|e| !(*e > 0.0)) {
        return Err("expected positive numbers".into());
    }
    Ok(EpsList(v))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Run(c) | Command::Sweep(c) | Command::Vortex(c) | Command::Check(c)) = &cli.command;
    let cfg = match &c.config {
        Some(p) => match commands::load(p) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
        },
        None => RunConfig::default(),
    };
    let opts = Options { out: c.out.clone(), eps: c.eps.as_ref().map(|e| e.0.clone()), strict: !c.no_strict, threads: c.threads };
    let result = match &cli.command {
        Command::Run(_) => commands::run(&cfg, &opts),
        Command::Sweep(_) => commands::sweep(&cfg, &opts),
        Command::Vortex(_) => commands::vortex_set(&cfg, &opts),
        Command::Check(_) => commands::check(&cfg, &opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
