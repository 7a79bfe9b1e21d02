//! `thinfilm` command-line interface.
//!
//! Exit status: 0 on success, 1 on usage or input errors, 2 when a checked
//! invariant fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thinfilm::config::RunConfig;
use thinfilm::experiments::{self, RateMode};
use thinfilm::functionals::{self, Params};
use thinfilm::grid::{fmt17, PeriodicGrid};
use thinfilm::steady;
use thinfilm::Error;

#[derive(Parser)]
#[command(name = "thinfilm", version, about = "Thin-film equation on a horizontal cylinder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Powerlaw,
    Exponential,
}

#[derive(Subcommand)]
enum Command {
    /// Droplet mass versus contact point, CSV `tau,M`.
    Massmap {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energies of all steady states over a mass sweep.
    Catalog {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        mass_min: f64,
        #[arg(long)]
        mass_max: f64,
        #[arg(long, default_value_t = 111)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy minimizer of a given mass sampled on N nodes, CSV `x,u`.
    Steady {
        #[arg(long, allow_hyphen_values = true)]
        alpha: f64,
        #[arg(long)]
        mass: f64,
        #[arg(long = "N")]
        grid_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an evolution configuration and write the trajectory to a directory.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Convergence-rate checks on a written trajectory.
    Rates {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Invariant(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::PositivityLoss { .. } | Error::MassMismatch { .. } => Failure::Invariant(vec![e.to_string()]),
            other => Failure::Usage(other.to_string()),
        }
    }
}

fn check(failures: Vec<String>) -> Result<(), Failure> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Invariant(failures))
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Massmap { alpha, out } => {
            let rows = experiments::massmap(alpha)?;
            experiments::write_text(&out, &experiments::massmap_csv(&rows))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
            let monotone = rows.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
            check(if monotone { vec![] } else { vec!["mass map is not strictly increasing".into()] })
        }
        Command::Catalog { alpha, mass_min, mass_max, points, out } => {
            let sweep = experiments::catalog_sweep(alpha, mass_min, mass_max, points)?;
            experiments::write_text(&out, &sweep.to_csv())?;
            println!("wrote {} masses to {}", sweep.rows.len(), out.display());
            match experiments::saddle_onset(alpha, mass_min, mass_max)? {
                Some(m) => println!("saddle_onset,{}", fmt17(m)),
                None => println!("saddle_onset,none"),
            }
            if let Some((m, e)) = sweep.threshold_proxy().first() {
                println!("lowest_non_minimizer_energy_at_first_mass,{},{}", fmt17(*m), fmt17(*e));
            }
            let bad = sweep.ordering_violations();
            check(bad.iter().map(|m| format!("minimizer not strictly lowest at M = {}", fmt17(*m))).collect())
        }
        Command::Steady { alpha, mass, grid_size, out } => {
            let grid = PeriodicGrid::new(grid_size)?;
            let star = steady::minimizer(alpha, mass)?;
            let u = star.evaluate(&grid);
            u.write_csv(&out)?;
            let residual = steady::el_residual(&star, &grid);
            let params = Params::new(3.0, alpha, mass, 0.0)?;
            let d = functionals::dissipation(&u, &params, functionals::default_delta(&u));
            println!("kind,{}", star.kind.name());
            if let Some(drop) = star.droplet() {
                println!("tau,{}", fmt17(drop.tau));
            }
            println!("lambda,{}", fmt17(star.lambda()));
            println!("energy,{}", fmt17(star.energy));
            println!("el_residual,{}", fmt17(residual));
            println!("dissipation,{}", fmt17(d));
            let mut bad = Vec::new();
            if residual > 1e-10 {
                bad.push(format!("Euler-Lagrange residual {} > 1e-10", fmt17(residual)));
            }
            if d > 1e-6 {
                bad.push(format!("dissipation {} > 1e-6", fmt17(d)));
            }
            check(bad)
        }
        Command::Evolve { config, outdir } => {
            let cfg = RunConfig::load(&config)?;
            let outcome = experiments::evolve(&cfg, &outdir)?;
            let rec = &outcome.record;
            println!("steps,{}", rec.steps.len());
            println!("t_final,{}", fmt17(rec.final_time()));
            println!("max_mass_drift,{}", fmt17(rec.max_mass_drift));
            println!("max_energy_increase,{}", fmt17(rec.max_energy_increase));
            if let Some(last) = rec.samples.last() {
                println!("dLinf_final,{}", fmt17(last.d_linf));
            }
            check(outcome.invariant_failures)
        }
        Command::Rates { traj, mode, out } => {
            let mode = match mode {
                Mode::Powerlaw => RateMode::PowerLaw,
                Mode::Exponential => RateMode::Exponential,
            };
            let report = experiments::load_and_rate(&traj, mode)?;
            experiments::write_text(&out, &report.to_text())?;
            println!("violations,{}", report.violations);
            println!("fitted_exponent,{}", fmt17(report.fitted_exponent));
            if mode == RateMode::Exponential {
                println!("mu,{}", fmt17(report.mu));
                println!("rate_ratio,{}", fmt17(report.rate_ratio));
            }
            check(report.failures())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Invariant(msgs)) => {
            for m in msgs {
                eprintln!("invariant violated: {m}");
            }
            ExitCode::from(2)
        }
    }
}
