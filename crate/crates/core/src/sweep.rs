//! Demand sweeps over signaling modes and extension lengths, and their CSV
//! output.
//!
//! Sweep points are independent solves over the same immutable scenario, so
//! with the `parallel` feature they run on the rayon pool. Rows always come
//! back in mode-major, demand-ascending order.

use std::io::Write;
use std::str::FromStr;

use log::debug;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::channel::{resolve_scenario, LiftedNetwork, Scenario};
use crate::error::{Error, Result};
use crate::rates::{properness_defect, CovarianceSet};
use crate::sca::{minimize_on_network, SignalingConfig, SolveResult, SolveStatus, SolverOptions, DEFAULT_BUDGET};
use crate::subproblem::Mode;

pub const CSV_HEADER: [&str; 11] = [
    "scenario",
    "M",
    "mode",
    "N",
    "demand_bits_per_cu",
    "sum_power",
    "status",
    "outer_iters",
    "min_rate_margin",
    "max_properness_defect",
    "ranks",
];

/// Arithmetic demand grid `start, start + step, …, ≤ stop`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemandGrid {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl DemandGrid {
    pub fn new(start: f64, step: f64, stop: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::Input(format!("demand step must be > 0, got {step}")));
        }
        if !(start.is_finite() && stop.is_finite() && start >= 0.0 && start <= stop) {
            return Err(Error::Input(format!("demand range needs 0 ≤ start ≤ stop, got {start}..{stop}")));
        }
        Ok(Self { start, step, stop })
    }

    /// `count` evenly spaced points from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Input("linspace needs at least two points".into()));
        }
        Self::new(start, (stop - start) / (count - 1) as f64, stop)
    }

    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-6).floor() as usize + 1;
        (0..count)
            .map(|k| {
                let v = self.start + k as f64 * self.step;
                if (v - self.stop).abs() < 1e-6 * self.step {
                    self.stop
                } else {
                    v
                }
            })
            .collect()
    }
}

impl FromStr for DemandGrid {
    type Err = Error;

    /// Parses `start:step:stop`, or a single value.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Input(format!("demands: cannot parse `{p}` as a number")))
        };
        match parts.as_slice() {
            [v] => {
                let v = num(v)?;
                Self::new(v, 1.0, v)
            }
            [a, b, c] => Self::new(num(a)?, num(b)?, num(c)?),
            _ => Err(Error::Input(format!("demands: expected start:step:stop, got `{s}`"))),
        }
    }
}

/// Parses `pgs:1,igs:1,igs:2`.
pub fn parse_modes(s: &str) -> Result<Vec<(Mode, usize)>> {
    s.split(',')
        .map(|item| {
            let (mode, n) = item.trim().split_once(':').unwrap_or((item.trim(), "1"));
            let n: usize = n
                .parse()
                .map_err(|_| Error::Input(format!("modes: bad extension length in `{item}`")))?;
            if n == 0 {
                return Err(Error::Input(format!("modes: extension length must be ≥ 1 in `{item}`")));
            }
            Ok((mode.parse()?, n))
        })
        .collect()
}

/// Unit in which demands and rate margins are read and reported.
///
/// The solver works with `(log2|A| − log2|B|)/N` on the real-lifted
/// covariances. A real-lifted proper signal carries twice the log-det of its
/// complex counterpart, so that quantity is twice the rate in bits per complex
/// channel use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateConvention {
    /// The lifted log-det difference itself.
    #[default]
    Lifted,
    /// Bits per complex channel use: half the lifted value.
    Complex,
}

impl RateConvention {
    pub fn label(&self) -> &'static str {
        match self {
            RateConvention::Lifted => "lifted",
            RateConvention::Complex => "complex",
        }
    }

    fn factor(&self) -> f64 {
        match self {
            RateConvention::Lifted => 1.0,
            RateConvention::Complex => 2.0,
        }
    }

    /// Converts a demand in this unit into the solver's lifted unit.
    pub fn to_lifted(&self, rate: f64) -> f64 {
        rate * self.factor()
    }

    pub fn from_lifted(&self, rate: f64) -> f64 {
        rate / self.factor()
    }
}

impl FromStr for RateConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lifted" => Ok(RateConvention::Lifted),
            "complex" => Ok(RateConvention::Complex),
            other => Err(Error::Input(format!("rate convention must be `lifted` or `complex`, got `{other}`"))),
        }
    }
}

/// Settings shared by every point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSettings {
    /// Budget on `Tr(Q)` for every user.
    pub budget: f64,
    pub convention: RateConvention,
    pub options: SolverOptions,
}

impl Default for PointSettings {
    fn default() -> Self {
        Self { budget: DEFAULT_BUDGET, convention: RateConvention::default(), options: SolverOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    /// `builtin:mi`, `builtin:si` or a path to a scenario file.
    pub scenario: String,
    pub antennas: Option<usize>,
    pub modes: Vec<(Mode, usize)>,
    pub demands: DemandGrid,
    pub settings: PointSettings,
    /// Also start each point from the solutions of the nested signaling
    /// schemes at the same demand (see [`run_sweep_on`]).
    pub nested_starts: bool,
}

impl SweepSpec {
    pub fn new(scenario: impl Into<String>, antennas: Option<usize>, modes: Vec<(Mode, usize)>, demands: DemandGrid) -> Self {
        Self {
            scenario: scenario.into(),
            antennas,
            modes,
            demands,
            settings: PointSettings::default(),
            nested_starts: true,
        }
    }
}

/// One `(mode, N, demand)` point of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: String,
    pub antennas: usize,
    pub mode: Mode,
    pub extension: usize,
    pub demand: f64,
    /// Present unless the point is infeasible or failed.
    pub sum_power: Option<f64>,
    /// `converged`, `infeasible`, `max_iterations` or `error`.
    pub status: String,
    pub outer_iters: usize,
    pub min_rate_margin: Option<f64>,
    pub max_properness_defect: Option<f64>,
    pub ranks: Vec<usize>,
    pub power_trace: Vec<f64>,
    /// Covariances of the reported point, absent when infeasible or failed.
    pub qset: Option<CovarianceSet>,
    pub diagnostic: Option<String>,
}

impl SweepRow {
    pub fn is_converged(&self) -> bool {
        self.status == SolveStatus::Converged.label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise runs
    /// sequentially.
    Parallel,
}

fn map_points<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

/// `(inner, outer)` schemes where every covariance of `inner` is one of
/// `outer`: proper inside improper, and extension `N` inside any multiple of
/// `N` through repetition.
fn nests(inner: (Mode, usize), outer: (Mode, usize)) -> bool {
    inner != outer && outer.1 % inner.1 == 0 && (inner.0 == outer.0 || inner.0 == Mode::Proper)
}

/// Solves one point and turns the outcome into a table row. `demand` is in
/// the unit of `settings.convention`. Each seed, a converged covariance set
/// of this network's extension, is tried as an additional start; the
/// converged run with the smallest sum power wins.
pub fn solve_point(
    scenario_id: &str,
    net: &LiftedNetwork,
    mode: Mode,
    demand: f64,
    settings: &PointSettings,
    seeds: &[CovarianceSet],
) -> (SweepRow, Option<SolveResult>) {
    let users = net.num_users();
    let lifted = settings.convention.to_lifted(demand);
    let config = SignalingConfig::uniform(mode, net.extension(), users, lifted, settings.budget);
    let mut row = SweepRow {
        scenario: scenario_id.to_string(),
        antennas: net.scenario().antennas(),
        mode,
        extension: net.extension(),
        demand,
        sum_power: None,
        status: "error".into(),
        outer_iters: 0,
        min_rate_margin: None,
        max_properness_defect: None,
        ranks: Vec::new(),
        power_trace: Vec::new(),
        qset: None,
        diagnostic: None,
    };
    if let Err(e) = settings.options.validate() {
        row.diagnostic = Some(e.to_string());
        return (row, None);
    }
    let mut runs = Vec::with_capacity(1 + seeds.len());
    for warm in std::iter::once(None).chain(seeds.iter().map(Some)) {
        match minimize_on_network(net, &config, &settings.options, warm) {
            Ok(r) => runs.push(r),
            Err(e) => {
                debug!("{} N={} demand={demand}: {e}", mode.label(), net.extension());
                row.diagnostic.get_or_insert(e.to_string());
            }
        }
    }
    let converged = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.status == SolveStatus::Converged)
        .min_by(|(_, a), (_, b)| a.sum_power().total_cmp(&b.sum_power()))
        .map(|(i, _)| i);
    let Some(best) = converged.or(if runs.is_empty() { None } else { Some(0) }) else {
        return (row, None);
    };
    let best = runs.swap_remove(best);
    row.status = best.status.label().to_string();
    row.outer_iters = best.outer_iterations;
    row.power_trace = best.power_trace.clone();
    row.diagnostic = best.diagnostic.clone();
    if best.status != SolveStatus::Infeasible {
        row.sum_power = Some(best.sum_power());
        let margin = best.rates.rates.iter().zip(&config.demands).map(|(r, d)| r - d).fold(f64::INFINITY, f64::min);
        row.min_rate_margin = Some(settings.convention.from_lifted(margin));
        row.max_properness_defect = Some(best.qset.iter().map(properness_defect).fold(0.0, f64::max));
        row.ranks = best.ranks.clone();
        row.qset = Some(best.qset.clone());
    }
    (row, Some(best))
}

/// Runs every `(mode, N, demand)` point of `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    run_sweep_with(spec, Execution::Parallel)
}

pub fn run_sweep_with(spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRow>> {
    let scenario = resolve_scenario(&spec.scenario, spec.antennas)?;
    run_sweep_on(&spec.scenario, &scenario, spec, exec)
}

/// Like [`run_sweep_with`] for an already loaded scenario.
///
/// The sweep is parallel over demands. At one demand the schemes are solved
/// from the smallest to the largest, and with `nested_starts` every converged
/// solution of a nested scheme seeds the larger ones. The solver is local;
/// the seeds make each curve at least as good as the curves it contains.
pub fn run_sweep_on(scenario_id: &str, scenario: &Scenario, spec: &SweepSpec, exec: Execution) -> Result<Vec<SweepRow>> {
    if !(spec.settings.budget.is_finite() && spec.settings.budget > 0.0) {
        return Err(Error::Input(format!("budget must be > 0, got {}", spec.settings.budget)));
    }
    let mut nets = Vec::with_capacity(spec.modes.len());
    for &(_, n) in &spec.modes {
        nets.push(LiftedNetwork::new(scenario, n)?);
    }
    // Solve order: extension ascending, proper before improper.
    let mut order: Vec<usize> = (0..spec.modes.len()).collect();
    order.sort_by_key(|&m| (spec.modes[m].1, spec.modes[m].0 == Mode::Improper));
    let demands = spec.demands.values();
    let columns: Vec<Vec<SweepRow>> = map_points(&demands, exec, |&demand| {
        let mut rows: Vec<Option<SweepRow>> = vec![None; spec.modes.len()];
        let mut solved: Vec<((Mode, usize), CovarianceSet)> = Vec::new();
        for &m in &order {
            let scheme = spec.modes[m];
            let seeds: Vec<CovarianceSet> = if spec.nested_starts {
                solved
                    .iter()
                    .filter(|(inner, _)| nests(*inner, scheme))
                    .map(|(inner, q)| q.repeated(scheme.1 / inner.1))
                    .collect()
            } else {
                Vec::new()
            };
            let (row, res) = solve_point(scenario_id, &nets[m], scheme.0, demand, &spec.settings, &seeds);
            if let Some(r) = res.filter(|r| r.status == SolveStatus::Converged) {
                solved.push((scheme, r.qset));
            }
            rows[m] = Some(row);
        }
        rows.into_iter().map(|r| r.expect("every scheme solved")).collect()
    });
    let mut out = Vec::with_capacity(demands.len() * spec.modes.len());
    for m in 0..spec.modes.len() {
        for col in &columns {
            out.push(col[m].clone());
        }
    }
    Ok(out)
}

/// Formats `x` with 12 significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.11e}", x);
    let exp: i32 = sci.split_once('e').map(|(_, e)| e.parse().unwrap_or(0)).unwrap_or(0);
    if (-5..12).contains(&exp) {
        format!("{:.*}", (11 - exp).max(0) as usize, x)
    } else {
        sci
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig).unwrap_or_default()
}

/// Writes `rows` as CSV with the fixed header.
pub fn emit_table<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let ranks = r.ranks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            r.scenario.clone(),
            r.antennas.to_string(),
            r.mode.label().to_string(),
            r.extension.to_string(),
            format_sig(r.demand),
            opt(r.sum_power),
            r.status.clone(),
            r.outer_iters.to_string(),
            opt(r.min_rate_margin),
            opt(r.max_properness_defect),
            ranks,
        ])?;
    }
    w.flush()?;
    Ok(())
}
