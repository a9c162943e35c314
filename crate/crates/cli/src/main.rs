//! `capplan`: incident risk estimation and vehicle/crew allocation.
//!
//! Exit codes: 0 success, 2 parse or validation error, 3 infeasible
//! instance, 4 numeric failure.

mod commands;
mod config;
mod render;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use capplan_core::Error;
use clap::{Args, Parser, Subcommand};

use crate::config::Settings;

#[derive(Parser)]
#[command(
    name = "capplan",
    version,
    about = "Incident risk maps and minimax allocation of vehicles and crews"
)]
struct Cli {
    /// Flat `key = value` file; flags of the same name override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Poisson incident pattern by thinning.
    Simulate(SimulateArgs),
    /// Pilot, scaling factors and adaptive intensity estimate.
    Estimate(EstimateArgs),
    /// Integrate an intensity field over nearest-station catchments.
    Risks(RisksArgs),
    /// Greedy minimax vehicle allocation.
    AllocateVehicles(VehicleArgs),
    /// Greedy minimax crew allocation under shortage.
    AllocateCrews(CrewArgs),
    /// Grayscale PGM of a field and SVG catchment map.
    Render(RenderArgs),
    /// Check an allocation against the exhaustive optimum.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Window file (`RECT xmin ymin xmax ymax` or CSV `x,y`).
    #[arg(long)]
    window: Option<String>,
    /// Constant intensity.
    #[arg(long)]
    rate: Option<String>,
    /// Intensity field CSV (with JSON sidecar) instead of a constant rate.
    #[arg(long)]
    field: Option<String>,
    /// Upper bound of the field intensity (default: field maximum).
    #[arg(long)]
    lmax: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Incident CSV to write; metadata goes to the `.json` next to it.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    window: Option<String>,
    /// Incident CSV `x,y`.
    #[arg(long)]
    incidents: Option<String>,
    /// Raster size, `N` or `NXxNY` (default 256).
    #[arg(long)]
    grid: Option<String>,
    /// Final bandwidth criterion: `loocv` or `cvl`.
    #[arg(long = "bw-method")]
    bw_method: Option<String>,
    /// Final bandwidth candidates `min:max:count` (log-spaced).
    #[arg(long = "bw-grid")]
    bw_grid: Option<String>,
    /// Pilot bandwidth criterion: `loocv` or `cvl`.
    #[arg(long = "pilot-method")]
    pilot_method: Option<String>,
    /// Pilot bandwidth candidates `min:max:count` (log-spaced).
    #[arg(long = "pilot-grid")]
    pilot_grid: Option<String>,
    /// Cut the kernel at six local bandwidths (`true`/`false`).
    #[arg(long)]
    truncate: Option<String>,
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
}

#[derive(Args)]
struct RisksArgs {
    #[arg(long)]
    window: Option<String>,
    /// Field CSV written by `estimate`.
    #[arg(long)]
    field: Option<String>,
    /// Station CSV `id,x,y`.
    #[arg(long)]
    stations: Option<String>,
    /// Risk CSV to write (default: standard output).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct VehicleArgs {
    /// Risk CSV `station,risk`.
    #[arg(long)]
    risks: Option<String>,
    /// Total number of vehicles.
    #[arg(long)]
    k: Option<String>,
    /// Raise risks below this value to it.
    #[arg(long = "risk-floor")]
    risk_floor: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<String>,
    /// Write the vehicle counts as CSV `station,n`.
    #[arg(long = "vehicles-out")]
    vehicles_out: Option<String>,
    /// Print the JSON report instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CrewArgs {
    #[arg(long)]
    risks: Option<String>,
    /// Vehicle CSV `station,n`.
    #[arg(long)]
    vehicles: Option<String>,
    /// Crew size per vehicle.
    #[arg(long)]
    alpha: Option<String>,
    /// Total number of crew members.
    #[arg(long)]
    k: Option<String>,
    #[arg(long = "risk-floor")]
    risk_floor: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    field: Option<String>,
    #[arg(long)]
    stations: Option<String>,
    /// Risk CSV used for the colour classes (default: integrate the field).
    #[arg(long)]
    risks: Option<String>,
    /// Incident CSV drawn as dots.
    #[arg(long)]
    incidents: Option<String>,
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    risks: Option<String>,
    /// JSON report of `allocate-vehicles` or `allocate-crews` to check;
    /// without it the greedy is run on the given instance.
    #[arg(long)]
    allocation: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Vehicle CSV; selects the crew problem.
    #[arg(long)]
    vehicles: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long = "risk-floor")]
    risk_floor: Option<String>,
    /// Largest number of allocations to enumerate.
    #[arg(long)]
    cap: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) | Error::Precondition(_) => 3,
        Error::Numeric(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> capplan_core::Result<String> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => {
            let s = Settings::load(
                "simulate",
                cfg,
                vec![
                    ("window", a.window),
                    ("rate", a.rate),
                    ("field", a.field),
                    ("lmax", a.lmax),
                    ("seed", a.seed),
                    ("out", a.out),
                ],
            )?;
            commands::simulate(&s)
        }
        Command::Estimate(a) => {
            let s = Settings::load(
                "estimate",
                cfg,
                vec![
                    ("window", a.window),
                    ("incidents", a.incidents),
                    ("grid", a.grid),
                    ("bw-method", a.bw_method),
                    ("bw-grid", a.bw_grid),
                    ("pilot-method", a.pilot_method),
                    ("pilot-grid", a.pilot_grid),
                    ("truncate", a.truncate),
                    ("out-dir", a.out_dir),
                ],
            )?;
            commands::estimate_cmd(&s)
        }
        Command::Risks(a) => {
            let s = Settings::load(
                "risks",
                cfg,
                vec![
                    ("window", a.window),
                    ("field", a.field),
                    ("stations", a.stations),
                    ("out", a.out),
                ],
            )?;
            commands::risks(&s)
        }
        Command::AllocateVehicles(a) => {
            let s = Settings::load(
                "allocate-vehicles",
                cfg,
                vec![
                    ("risks", a.risks),
                    ("k", a.k),
                    ("risk-floor", a.risk_floor),
                    ("out", a.out),
                    ("vehicles-out", a.vehicles_out),
                ],
            )?;
            commands::allocate_vehicles_cmd(&s, a.json)
        }
        Command::AllocateCrews(a) => {
            let s = Settings::load(
                "allocate-crews",
                cfg,
                vec![
                    ("risks", a.risks),
                    ("vehicles", a.vehicles),
                    ("alpha", a.alpha),
                    ("k", a.k),
                    ("risk-floor", a.risk_floor),
                    ("out", a.out),
                ],
            )?;
            commands::allocate_crews_cmd(&s, a.json)
        }
        Command::Render(a) => {
            let s = Settings::load(
                "render",
                cfg,
                vec![
                    ("window", a.window),
                    ("field", a.field),
                    ("stations", a.stations),
                    ("risks", a.risks),
                    ("incidents", a.incidents),
                    ("out-dir", a.out_dir),
                ],
            )?;
            commands::render_cmd(&s)
        }
        Command::Verify(a) => {
            let s = Settings::load(
                "verify",
                cfg,
                vec![
                    ("risks", a.risks),
                    ("allocation", a.allocation),
                    ("k", a.k),
                    ("vehicles", a.vehicles),
                    ("alpha", a.alpha),
                    ("risk-floor", a.risk_floor),
                    ("cap", a.cap),
                ],
            )?;
            commands::verify(&s)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            // a closed pipe is not an error worth reporting
            let _ = stdout.write_all(out.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("capplan: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
