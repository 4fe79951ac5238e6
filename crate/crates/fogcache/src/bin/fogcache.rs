use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fogcache::harness::config::{load_config, parse_config_str, Scheme, SimConfig};
use fogcache::harness::{run_experiment, sweep_capacity, validate};
use fogcache::Error;

#[derive(Debug, Parser)]
#[command(name = "fogcache", about = "Cooperative edge-caching simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every configured scheme once and write per-slot metrics.
    Run {
        /// Config file (TOML); an empty or missing list of keys uses defaults.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Comma-separated subset of schemes (marl,dqn,iql,lru).
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
    },
    /// Sweep the cache capacity over a list of values, shared seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Capacities to sweep.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        capacities: Vec<usize>,
    },
    /// Print the preflight report for a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn apply_overrides(config: &mut SimConfig, seed: Option<u64>, schemes: Option<Vec<Scheme>>) {
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(list) = schemes {
        config.schemes = list;
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            schemes,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, schemes);
            cfg.validate()?;
            let summaries = run_experiment(&cfg, &out)?;
            if !cli.quiet {
                println!("wrote {}", out.join("metrics.csv").display());
                for s in &summaries {
                    println!(
                        "{}: mean delay {:.6} s, tail mean {:.6} s (seed {})",
                        s.scheme, s.mean_delay_s, s.tail_mean_delay_s, s.seed
                    );
                }
            }
            Ok(())
        }
        Command::Sweep {
            config,
            seed,
            out,
            schemes,
            capacities,
        } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, schemes);
            cfg.validate()?;
            let summaries = sweep_capacity(&cfg, &capacities, &out)?;
            if !cli.quiet {
                println!("wrote {}", out.join("sweep_summary.csv").display());
                for s in &summaries {
                    println!(
                        "S={:>3} {}: tail mean {:.6} s",
                        s.cache_capacity, s.scheme, s.tail_mean_delay_s
                    );
                }
            }
            Ok(())
        }
        Command::Validate { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg = parse_config_str(&text)?;
            let report = validate(&cfg);
            print!("{}", report.render());
            Ok(())
        }
    }
}
