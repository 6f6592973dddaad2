use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use untrusted_qkd::cli::{
    cmd_figures, cmd_max_distance, cmd_rate, cmd_sweep_delta, cmd_verify, exit_code,
    write_rate_csv, RateOptions, EXIT_OK, EXIT_VERIFY,
};
use untrusted_qkd::config::RunConfig;
use untrusted_qkd::figures::write_csv_file;
use untrusted_qkd::protocols::ProtocolKind;
use untrusted_qkd::QkdError;

#[derive(Parser)]
#[command(
    name = "qkd",
    version,
    about = "Key-rate lower bounds for QKD with an untrusted source"
)]
struct Cli {
    /// TOML run configuration. Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.path` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the key rate at one distance.
    Rate {
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        distance: Option<f64>,
        /// Search the transmittance grid even if the config fixes them.
        #[arg(long)]
        optimize: bool,
    },
    /// Write fig2.csv to fig5.csv.
    Figures,
    /// Run the brute-force soundness campaign.
    Verify {
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_bound: bool,
    },
    /// Largest distance with a positive optimized rate.
    MaxDistance {
        #[arg(long)]
        protocol: Option<ProtocolKind>,
    },
    /// Optimized rates across the delta grid.
    SweepDelta {
        #[arg(long)]
        protocol: Option<ProtocolKind>,
        #[arg(long)]
        distance: Option<f64>,
    },
}

fn out_dir(cli: &Cli, config: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .unwrap_or_else(|| config.output.path.clone())
}

fn ensure_dir(dir: &Path) -> Result<(), QkdError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<i32, QkdError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let dir = out_dir(cli, &config);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Rate {
            protocol,
            distance,
            optimize,
        } => {
            let opts = RateOptions {
                protocol: *protocol,
                distance_km: *distance,
                optimize: *optimize,
            };
            let outcome = cmd_rate(&config, &opts)?;
            outcome.print(&mut out)?;
            ensure_dir(&dir)?;
            write_rate_csv(&outcome, &dir.join("rate.csv"))?;
        }
        Command::Figures => {
            for path in cmd_figures(&config, &dir)? {
                writeln!(out, "wrote {}", path.display())?;
            }
        }
        Command::Verify {
            trials,
            seed,
            corrupt_bound,
        } => {
            let path = dir.join("verify.csv");
            let report = cmd_verify(*trials, *seed, *corrupt_bound, Some(&path))?;
            let violations = report.violations();
            let differs = report.records.iter().filter(|r| r.y1_differs).count();
            writeln!(out, "trials = {}", report.records.len())?;
            writeln!(out, "violations = {violations}")?;
            writeln!(out, "y1_signal_ne_decoy = {differs}")?;
            writeln!(out, "report = {}", path.display())?;
            if violations > 0 {
                return Ok(EXIT_VERIFY);
            }
        }
        Command::MaxDistance { protocol } => {
            let m = cmd_max_distance(&config, *protocol)?;
            writeln!(out, "protocol = {}", m.protocol.name())?;
            writeln!(out, "delta = {}", m.delta)?;
            writeln!(out, "max_distance_untrusted_km = {}", m.untrusted_km)?;
            writeln!(out, "max_distance_trusted_km = {}", m.trusted_km)?;
            writeln!(out, "gap_km = {}", m.trusted_km - m.untrusted_km)?;
        }
        Command::SweepDelta { protocol, distance } => {
            let rows = cmd_sweep_delta(&config, *protocol, *distance)?;
            ensure_dir(&dir)?;
            let path = dir.join("sweep_delta.csv");
            write_csv_file(&rows, &path)?;
            writeln!(out, "wrote {} rows to {}", rows.len(), path.display())?;
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
