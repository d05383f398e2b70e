use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msdoa::config::{load_config, ExperimentConfig};
use msdoa::harness::{run_crb, run_single, run_sweep, write_single};
use msdoa::Error;

/// Metasurface DOA simulation harness.
#[derive(Parser)]
#[command(name = "msdoa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One trial; writes FFT, spectrum and snapshot CSVs into a directory.
    Single {
        #[command(flatten)]
        common: Common,
        /// Also dump the raw time series (.bin + .hdr).
        #[arg(long)]
        raw: bool,
    },
    /// Monte Carlo sweep; writes the results CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Square-root CRB per sweep point.
    Crb {
        #[command(flatten)]
        common: Common,
    },
    /// Parse and check a configuration.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a key, e.g. `--set noise.snr_db=-10`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Output file (sweep, crb) or directory (single). Defaults to stdout or `output.path`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> msdoa::Result<ExperimentConfig> {
        let mut cfg = load_config(&self.config).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", self.config.display())),
            other => other,
        })?;
        for o in &self.overrides {
            cfg.set(o)?;
        }
        if let Some(t) = self.trials {
            cfg.run.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if self.threads.is_some() {
            cfg.run.threads = self.threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self, cfg: &ExperimentConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| cfg.output.path.clone())
    }
}

fn sink(path: Option<PathBuf>) -> msdoa::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn run(cli: Cli) -> msdoa::Result<()> {
    match cli.command {
        Command::Validate { common } => {
            let cfg = common.load()?;
            let points = cfg.sweep_points()?.len();
            println!("ok: {} source(s), {points} sweep point(s), {} trial(s)", cfg.scene.sources_deg.len(), cfg.run.trials);
        }
        Command::Sweep { common } => {
            let cfg = common.load()?;
            let res = run_sweep(&cfg, cfg.run.threads)?;
            let mut out = sink(common.output(&cfg))?;
            res.write_csv(&mut out)?;
            out.flush()?;
        }
        Command::Crb { common } => {
            let cfg = common.load()?;
            let table = run_crb(&cfg, cfg.run.threads)?;
            let mut out = sink(common.output(&cfg))?;
            table.write_csv(&mut out)?;
            out.flush()?;
        }
        Command::Single { common, raw } => {
            let cfg = common.load()?;
            let dir = common.output(&cfg).unwrap_or_else(|| PathBuf::from("single_run"));
            let result = run_single(&cfg)?;
            for p in write_single(&result, &cfg, &dir, raw)? {
                println!("{}", p.display());
            }
            for (k, d) in result.spectrum_1d.estimates.iter().enumerate() {
                println!("estimate {k}: theta {:.2} deg", d.theta_deg());
            }
            if let Some(s2) = &result.spectrum_2d {
                for (k, d) in s2.estimates.iter().enumerate() {
                    println!("lattice estimate {k}: theta {:.2} deg, phi {:.2} deg", d.theta_deg(), d.phi_deg());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
