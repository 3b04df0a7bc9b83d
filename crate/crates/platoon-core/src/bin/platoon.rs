//! Command-line front end: run scenarios, emit certificates, sweep platoon
//! sizes, and dump stored trajectories in plot-ready long format.
//!
//! Exit codes: 0 on success (and a passing sweep verdict), 1 when a sweep
//! verdict fails, 2 on any error. A reader that stops consuming stdout
//! early (`platoon report out | head`) ends the command quietly with 0.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Prints one line to stdout, exiting quietly when the reader has gone
/// away instead of panicking mid-pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            eprintln!("error: stdout: {e}");
            std::process::exit(2);
        }
    }};
}

use platoon_core::certify;
use platoon_core::config::load_scenario;
use platoon_core::dynamics::simulate;
use platoon_core::harness::{
    asymptotic_check, compute_metrics, read_trajectory, string_stability_sweep,
    three_phase_windows, write_certificate, write_trajectory,
};
use platoon_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "platoon",
    version,
    about = "Mesoscopic platoon simulator and string-stability certifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop scenario and write its trajectory CSV.
    Simulate {
        /// Scenario config file (TOML).
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Certify string stability of a scenario's parameters.
    Certify {
        /// Scenario config file (TOML).
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-run a scenario at several platoon sizes and compare peak deviations.
    Sweep {
        /// Scenario config file (TOML).
        config: PathBuf,
        /// Platoon sizes to run, comma separated (e.g. 5,11,21,41).
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        /// Relative peak spread accepted as size-independent.
        #[arg(long, default_value_t = 0.05)]
        tolerance: f64,
    },
    /// Print a stored trajectory as long-format rows: t, vehicle, signal, value.
    Report {
        /// Directory holding trajectory.csv, or a direct path to a CSV file.
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate { config, out } => {
            let scenario = load_scenario(&config)?;
            let traj = simulate(&scenario)?;
            ensure_dir(&out)?;
            let csv_path = out.join("trajectory.csv");
            write_trajectory(&traj, &csv_path)?;
            let metrics = compute_metrics(&traj, scenario.params.dp_bar, &three_phase_windows());
            say!("vehicles: {}", scenario.n_vehicles);
            say!(
                "duration: {} s at h = {} s, sampled every {} s",
                scenario.t_end,
                scenario.h,
                scenario.output_every
            );
            say!("platoon peak deviation: {:.6}", metrics.platoon_peak);
            say!("asymptotic residual: {:.6}", metrics.residual);
            for s in &metrics.settling {
                say!(
                    "phase [{}, {}] s: last excursion above {} at t = {} s",
                    s.window.t_start,
                    s.window.t_end,
                    s.window.tolerance,
                    s.settled_at
                );
            }
            let calm = asymptotic_check(&traj, scenario.t_end - 5.0, 0.15, scenario.params.dp_bar);
            say!("final 5 s below 0.15 and non-increasing: {calm}");
            say!("wrote {}", csv_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Certify { config, out } => {
            let scenario = load_scenario(&config)?;
            let pairs = scenario.n_vehicles.max(2) - 1;
            let cert = certify::certificate(&scenario.params, pairs)?;
            ensure_dir(&out)?;
            let path = out.join("certificate.txt");
            write_certificate(&cert, &path)?;
            say!("gamma_tilde: {}", cert.gamma_tilde);
            say!("string_stable: {}", cert.string_stable);
            say!(
                "deviation bound factor 1/(1 - gamma_tilde): {}",
                cert.recursive_bound_factor
            );
            say!(
                "diagonal scaling over {} pairs: margin {} at ratio {}",
                cert.n,
                cert.pd_margin,
                cert.c_ratio
            );
            say!(
                "wrote {} and {}",
                path.display(),
                path.with_extension("json").display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            sizes,
            tolerance,
        } => {
            let base = load_scenario(&config)?;
            let gain = certify::iss_gain(&base.params)?;
            let report = string_stability_sweep(&base, &sizes, tolerance)?;
            say!("size  peak          max_amplification  residual");
            for e in &report.entries {
                say!(
                    "{:<5} {:<13.6} {:<18.6} {:.6}",
                    e.n_vehicles,
                    e.platoon_peak,
                    e.max_amplification,
                    e.residual
                );
            }
            say!(
                "peak variation across sizes: {:.2}% (tolerance {:.2}%)",
                report.peak_variation * 100.0,
                tolerance * 100.0
            );
            say!(
                "gamma_tilde: {} (< 1: {})",
                gain.gamma_tilde,
                gain.string_stable
            );
            let verdict = report.within_tolerance && gain.string_stable;
            say!(
                "string-stability verdict: {}",
                if verdict { "pass" } else { "fail" }
            );
            Ok(if verdict {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Report { dir } => {
            let path = if dir.is_dir() {
                dir.join("trajectory.csv")
            } else {
                dir
            };
            let table = read_trajectory(&path)?;
            let stdout = std::io::stdout().lock();
            let mut w = std::io::BufWriter::new(stdout);
            let emit = |w: &mut dyn Write| -> std::io::Result<()> {
                writeln!(w, "t,vehicle,signal,value")?;
                for (name, values) in &table.columns {
                    let (signal, vehicle) = name.rsplit_once('_').unwrap_or((name.as_str(), ""));
                    for (k, value) in values.iter().enumerate() {
                        writeln!(w, "{},{},{},{}", table.times[k], vehicle, signal, value)?;
                    }
                }
                w.flush()
            };
            match emit(&mut w) {
                Ok(()) => Ok(ExitCode::SUCCESS),
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(ExitCode::SUCCESS),
                Err(e) => Err(Error::io("stdout", e)),
            }
        }
    }
}
