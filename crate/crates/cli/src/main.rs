//! `ssmp` — experiment runner: configuration-driven batches over the
//! library with CSV emission and a PASS/FAIL summary.

mod config;
mod experiments;
mod report;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use ssmp::ode::Tolerances;
use ssmp::simplicity::admissible_band;

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "SSMP_OUT_DIR";

#[derive(Parser)]
#[command(name = "ssmp", version, about = "Stationary-metric scattering experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML configuration.
    Run {
        /// Path to the configuration file.
        config: PathBuf,
        /// Output directory (overrides config and SSMP_OUT_DIR).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker thread count for batch experiments.
        #[arg(long)]
        threads: Option<usize>,
        /// Absolute integration tolerance override.
        #[arg(long)]
        abs_tol: Option<f64>,
        /// Relative integration tolerance override.
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Print the built-in manifold catalog.
    ListGallery,
    /// Parse a configuration, build its manifold, and report validation
    /// and admissibility without running the experiment.
    Validate {
        /// Path to the configuration file.
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::ListGallery => {
            for entry in ssmp::gallery::catalog() {
                println!("{:<20} {}", entry.name, entry.summary);
                println!("{:<20} parameters: {}", "", entry.parameters);
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = config::parse(&text)?;
            let spec = config::build_manifold(&cfg.manifold)?;
            let (a, b, band) = admissible_band(&spec, cfg.experiment.mass);
            println!("manifold: valid (dim {})", spec.dim());
            println!("lambda range: [{:.6}, {:.6}]", a, b);
            println!("admissible momentum band for mass {}: {}", cfg.experiment.mass, band);
            let mut ok = true;
            for rho in &cfg.experiment.rho {
                let rep = ssmp::simplicity::check_admissible(&spec, *rho, cfg.experiment.mass);
                println!(
                    "rho = {rho}: {} (margin {:.6})",
                    if rep.band_ok { "admissible" } else { "NOT admissible" },
                    rep.margin
                );
                ok &= rep.band_ok || cfg.experiment.allow_inadmissible;
            }
            Ok(ok)
        }
        Command::Run { config, out_dir, seed, threads, abs_tol, rel_tol } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = config::parse(&text)?;
            if let Some(seed) = seed {
                cfg.experiment.seed = seed;
            }
            if let Some(tol) = abs_tol {
                cfg.experiment.abs_tol = Some(tol);
            }
            if let Some(tol) = rel_tol {
                cfg.experiment.rel_tol = Some(tol);
            }
            let tol = Tolerances::new(
                cfg.experiment.abs_tol.unwrap_or(1e-10),
                cfg.experiment.rel_tol.unwrap_or(1e-10),
            );
            let out = out_dir
                .or_else(|| cfg.output.dir.clone())
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("ssmp-out"));
            fs::create_dir_all(&out)
                .with_context(|| format!("creating output directory {}", out.display()))?;

            let summary = match threads {
                Some(width) => rayon::ThreadPoolBuilder::new()
                    .num_threads(width)
                    .build()
                    .context("building thread pool")?
                    .install(|| experiments::run(&cfg, &out, tol)),
                None => experiments::run(&cfg, &out, tol),
            }?;
            print!("{}", summary.render());
            summary.write(&out)?;
            Ok(summary.all_passed())
        }
    }
}
