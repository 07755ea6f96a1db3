use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fdmimo_cli::campaign::{load_config, simulate_to_dir, summarize_dir};
use fdmimo_cli::curves::{capacity_curve, capacity_table, overhead_curve, overhead_table, CapacityParams, OverheadParams};
use fdmimo_cli::pattern::{pattern_cuts, pattern_table};
use fdmimo_cli::{CliError, OUT_DIR_ENV};
use fdmimo_core::array::{ArrayConfig, Direction};

/// FD-MIMO analysis toolkit and system-level simulator.
#[derive(Parser)]
#[command(name = "fdmimo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Horizontal and vertical array-factor cuts from −90° to 90°.
    Pattern {
        /// JSON array block, e.g. {"M":8,"N":4,"P":2,"dv_lambda":0.8,"dh_lambda":0.5}.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        steer_az: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        steer_el: f64,
        /// Angular step in degrees.
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Direction feedback bits and pilot overhead versus antenna count.
    Overhead {
        #[arg(long, default_value_t = 1)]
        nt_min: usize,
        #[arg(long, default_value_t = 64)]
        nt_max: usize,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value_t = 4)]
        n_b: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// ZF effective sum capacity with and without pilot overhead.
    Capacity {
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
        nt: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        users: usize,
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        snr_db: f64,
        #[arg(long, default_value_t = 12)]
        n_b: usize,
        #[arg(long, default_value_t = 2000)]
        draws: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        out: OutDir,
    },
    /// Runs one drop per seed of a simulation configuration.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        /// Worker threads (defaults to the available cores).
        #[arg(long)]
        parallel: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Distribution statistics of a `simulate` output directory.
    Summarize {
        /// Directory holding the simulate outputs (defaults to --out).
        input: Option<PathBuf>,
        #[command(flatten)]
        out: OutDir,
    },
}

fn read_array(path: &Path) -> Result<ArrayConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pattern {
            config,
            steer_az,
            steer_el,
            step,
            out,
        } => {
            let array = match config {
                Some(p) => read_array(&p)?,
                None => ArrayConfig::default(),
            };
            let points = pattern_cuts(&array, Direction::new(steer_az, steer_el), step)?;
            pattern_table(&array, &points).write(&out.out.join("pattern.csv"))
        }
        Command::Overhead {
            nt_min,
            nt_max,
            snr_db,
            n_b,
            out,
        } => {
            let p = OverheadParams {
                n_t_min: nt_min,
                n_t_max: nt_max,
                snr_db,
                n_b,
            };
            overhead_table(&p, &overhead_curve(&p)?).write(&out.out.join("overhead.csv"))
        }
        Command::Capacity {
            nt,
            users,
            snr_db,
            n_b,
            draws,
            seed,
            out,
        } => {
            let p = CapacityParams {
                n_t: nt,
                users,
                snr_db,
                n_b,
                draws,
                seed,
            };
            capacity_table(&p, &capacity_curve(&p)?).write(&out.out.join("capacity.csv"))
        }
        Command::Simulate {
            config,
            seeds,
            parallel,
            out,
        } => {
            let cfg = load_config(&config)?;
            let name = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "config".into());
            let threads = parallel.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let report = simulate_to_dir(&name, &cfg, &seeds, threads, &out.out)?;
            let failed = report.rows.iter().filter(|r| r.outcome.is_err()).count();
            if failed > 0 {
                return Err(CliError::PartialFailure {
                    failed,
                    total: report.rows.len(),
                });
            }
            Ok(())
        }
        Command::Summarize { input, out } => {
            let input = input.unwrap_or_else(|| out.out.clone());
            summarize_dir(&input, &out.out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
