use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use clocksync::output::{topology_csv, write_results};
use clocksync::{load_config, run_experiment, run_rngs};
use clocksync_core::experiment::Method;

#[derive(Parser)]
#[command(name = "sync", version, about = "Distributed clock synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Bp,
    Mf,
    Ats,
    Admm,
    Lc,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its CSV files.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the algorithms of the config.
        #[arg(long, value_enum)]
        algo: Option<Algo>,
        /// Also compute the Bayesian Cramer-Rao bound.
        #[arg(long)]
        bcrb: bool,
        /// Write message passing traces, one file per run.
        #[arg(long)]
        trace: bool,
    },
    /// Generate the topology of run 0 and print it as CSV.
    Topo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preview: bool,
        /// Write `topology.csv` here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            seed,
            algo,
            bcrb,
            trace,
        } => {
            let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(a) = algo {
                cfg.algorithms = match a {
                    Algo::Bp => vec![Method::Bp],
                    Algo::Mf => vec![Method::Mf],
                    Algo::Ats => vec![Method::Ats],
                    Algo::Admm => vec![Method::Admm],
                    Algo::Lc => vec![Method::Lc],
                    Algo::All => Method::ALL.to_vec(),
                };
            }
            cfg.bcrb |= bcrb;
            let results = run_experiment(&cfg)?;
            for p in write_results(&out, &cfg.name, &results, trace)? {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Topo {
            config,
            seed,
            preview,
            out,
        } => {
            let mut cfg = load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (mut rng, _) = run_rngs(cfg.seed, 0, cfg.new_topology_per_run);
            let topo = cfg.build_topology(&mut rng)?;
            let text = topology_csv(&topo);
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("topology.csv"), text)?;
                }
                None if preview => print!("{text}"),
                None => bail!("pass --preview to print or --out to write the topology"),
            }
        }
    }
    Ok(())
}
