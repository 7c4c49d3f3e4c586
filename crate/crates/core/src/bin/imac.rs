use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use imac_igs::channel::{resolve_scenario, LiftedNetwork, Scenario};
use imac_igs::sca::{ImproperStart, SolverOptions, DEFAULT_BUDGET};
use imac_igs::subproblem::Mode;
use imac_igs::sweep::{
    emit_table, parse_modes, run_sweep_on, solve_point, DemandGrid, Execution, PointSettings, RateConvention, SweepRow,
    SweepSpec,
};
use imac_igs::Error;

#[derive(Parser)]
#[command(name = "imac", version, about = "Uplink sum-power minimization with improper Gaussian signaling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file path, `builtin:mi` or `builtin:si`.
    #[arg(long)]
    scenario: String,
    /// Receive antennas per base station (truncates the scenario's vectors).
    #[arg(long)]
    antennas: Option<usize>,
    /// Override the scenario's per-antenna noise variance σ².
    #[arg(long)]
    noise_variance: Option<f64>,
    /// Outer convergence threshold on the sum-power change.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Per-user budget on Tr(Q).
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: f64,
    #[arg(long, default_value_t = 200)]
    max_iterations: usize,
    /// Fraction of the budget used by the initial covariances.
    #[arg(long, default_value_t = 0.5)]
    init_fraction: f64,
    /// Unit of demands and margins: `lifted` (log-det difference of the
    /// real-lifted covariances) or `complex` (bits per complex channel use,
    /// half the lifted value).
    #[arg(long, default_value = "lifted")]
    rate_convention: RateConvention,
    /// Real/imaginary power split ρ ∈ [0, 1) of the improper start.
    #[arg(long, default_value_t = ImproperStart::default().eccentricity)]
    eccentricity: f64,
    /// Power variation τ ∈ [0, 1) across time slots of the improper start.
    #[arg(long, default_value_t = ImproperStart::default().slot_imbalance)]
    slot_imbalance: f64,
    /// Print per-iteration (t, sum power) lines to stderr.
    #[arg(long)]
    trace: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario, Error> {
        let s = resolve_scenario(&self.scenario, self.antennas)?;
        match self.noise_variance {
            Some(v) => s.with_noise_variance(v),
            None => Ok(s),
        }
    }

    fn settings(&self) -> PointSettings {
        PointSettings { budget: self.budget, convention: self.rate_convention, options: self.options() }
    }

    fn options(&self) -> SolverOptions {
        SolverOptions {
            epsilon: self.epsilon,
            max_outer_iterations: self.max_iterations,
            init_power_fraction: self.init_fraction,
            improper_start: ImproperStart { eccentricity: self.eccentricity, slot_imbalance: self.slot_imbalance },
            ..SolverOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a single demand point.
    Solve {
        #[command(flatten)]
        common: Common,
        /// pgs or igs
        #[arg(long, default_value = "igs")]
        mode: Mode,
        /// Symbol extension length N.
        #[arg(long, default_value_t = 1)]
        extension: usize,
        /// Rate demand for every user, bits per channel use.
        #[arg(long)]
        demand: f64,
    },
    /// Sweep demands over several (mode, N) pairs.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated mode:N pairs, e.g. pgs:1,igs:1,igs:2.
        #[arg(long, default_value = "pgs:1,igs:1,igs:2")]
        modes: String,
        /// start:step:stop in bits per channel use.
        #[arg(long)]
        demands: DemandGrid,
        /// Solve points one after another.
        #[arg(long)]
        sequential: bool,
        /// Do not seed larger schemes with the solutions of nested ones.
        #[arg(long)]
        independent: bool,
    },
}

fn print_traces(rows: &[SweepRow]) {
    let mut err = io::stderr().lock();
    for r in rows {
        let _ = writeln!(err, "# {} N={} demand={}: {}", r.mode.label(), r.extension, r.demand, r.status);
        for (t, p) in r.power_trace.iter().enumerate() {
            let _ = writeln!(err, "{}\t{:.12e}", t + 1, p);
        }
    }
}

fn write_rows(rows: &[SweepRow], out: Option<&PathBuf>) -> Result<(), Error> {
    match out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| Error::Input(format!("out: cannot write `{}`: {e}", path.display())))?;
            emit_table(rows, BufWriter::new(file))
        }
        None => emit_table(rows, io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<Vec<SweepRow>, Error> {
    let (common, rows) = match cli.command {
        Command::Solve { common, mode, extension, demand } => {
            if !(demand.is_finite() && demand >= 0.0) {
                return Err(Error::Input(format!("demand must be ≥ 0, got {demand}")));
            }
            let scenario = common.scenario()?;
            let net = LiftedNetwork::new(&scenario, extension)?;
            let (row, _) = solve_point(&common.scenario, &net, mode, demand, &common.settings(), &[]);
            (common, vec![row])
        }
        Command::Sweep { common, modes, demands, sequential, independent } => {
            let scenario = common.scenario()?;
            let mut spec = SweepSpec::new(common.scenario.clone(), common.antennas, parse_modes(&modes)?, demands);
            spec.settings = common.settings();
            spec.nested_starts = !independent;
            let exec = if sequential { Execution::Sequential } else { Execution::Parallel };
            let rows = run_sweep_on(&common.scenario, &scenario, &spec, exec)?;
            (common, rows)
        }
    };
    if common.trace {
        print_traces(&rows);
    }
    write_rows(&rows, common.out.as_ref())?;
    Ok(rows)
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(rows) => {
            let failed: Vec<&SweepRow> = rows.iter().filter(|r| r.status == "error").collect();
            for r in &failed {
                eprintln!(
                    "error at {} N={} demand={}: {}",
                    r.mode.label(),
                    r.extension,
                    r.demand,
                    r.diagnostic.as_deref().unwrap_or("unknown")
                );
            }
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
