//! Successive convex approximation for sum-power minimization.
//!
//! Each outer iteration solves the convex subproblem for the current `Γ`,
//! then resets `Γ_u = B_u(Q)` at the new covariances. The bound is tight at
//! that point, so the previous iterate stays feasible and the sum power
//! cannot increase. Every feasible subproblem point meets the true rate
//! demands because the bound never exceeds the true rate.

use log::debug;

use crate::bound::{gamma_from_covariances, GammaSet};
use crate::channel::{LiftedNetwork, Scenario};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, Mat};
use crate::rates::{achievable_rates, properness_defect, CovarianceSet, RateVector};
use crate::subproblem::{
    phase1_feasible_point, solve_subproblem_with, BarrierOptions, Mode, SubproblemResult, SubproblemSpec,
    SubproblemStatus,
};

pub const DEFAULT_BUDGET: f64 = 100.0;
pub const RANK_REL_TOL: f64 = 1e-8;
/// Smallest slack gain that keeps a restoration going.
const RESTORATION_PROGRESS: f64 = 1e-6;
pub const CERTIFY_TOL: f64 = 1e-6;

/// Signaling mode, extension length and per-user demands/budgets in flat
/// user order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalingConfig {
    pub mode: Mode,
    pub extension: usize,
    /// Budgets on `Tr(Q_u)`.
    pub budgets: Vec<f64>,
    /// Demands in bits per channel use.
    pub demands: Vec<f64>,
}

impl SignalingConfig {
    /// Same demand and budget for every user.
    pub fn uniform(mode: Mode, extension: usize, users: usize, demand: f64, budget: f64) -> Self {
        Self { mode, extension, budgets: vec![budget; users], demands: vec![demand; users] }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        let users = scenario.num_users();
        if self.extension == 0 {
            return Err(Error::Input("extension length N must be at least 1".into()));
        }
        if self.demands.len() != users || self.budgets.len() != users {
            return Err(Error::Input(format!(
                "config has {} demands and {} budgets for {users} users",
                self.demands.len(),
                self.budgets.len()
            )));
        }
        if self.demands.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Input("demands must be finite and ≥ 0".into()));
        }
        if self.budgets.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Input("budgets must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the sum power changes by less than this between iterations.
    pub epsilon: f64,
    pub max_outer_iterations: usize,
    /// Fraction of each budget spent by the isotropic initial covariances.
    pub init_power_fraction: f64,
    /// Re-initializations allowed when the first subproblem is infeasible.
    pub retry_budget: usize,
    pub improper_start: ImproperStart,
    /// Feasibility rounds per initialization before giving up on it.
    pub restoration_iterations: usize,
    pub barrier: BarrierOptions,
}

/// Shape of the initial covariances in improper mode.
///
/// A proper start is a fixed point of the improper iteration: the subproblem
/// is invariant under a common 90° rotation of every user's real plane, so
/// from a rotation-invariant Γ the convex subproblem returns a rotation-invariant
/// (proper) optimum and the loop never leaves the proper set. The start is
/// therefore made deliberately improper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImproperStart {
    /// Ratio spread `ρ ∈ [0, 1)` of the real/imaginary power split per slot.
    pub eccentricity: f64,
    /// Power variation `τ ∈ [0, 1)` across the time slots of an extension.
    pub slot_imbalance: f64,
}

impl Default for ImproperStart {
    fn default() -> Self {
        Self { eccentricity: 0.5, slot_imbalance: 0.5 }
    }
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            max_outer_iterations: 200,
            init_power_fraction: 0.5,
            retry_budget: 3,
            improper_start: ImproperStart::default(),
            restoration_iterations: 100,
            barrier: BarrierOptions::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Input("epsilon must be > 0".into()));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::Input("max_outer_iterations must be ≥ 1".into()));
        }
        if !(self.init_power_fraction > 0.0 && self.init_power_fraction <= 1.0) {
            return Err(Error::Input("init_power_fraction must lie in (0, 1]".into()));
        }
        let unit = |v: f64| (0.0..1.0).contains(&v);
        if !unit(self.improper_start.eccentricity) || !unit(self.improper_start.slot_imbalance) {
            return Err(Error::Input("improper start eccentricity and slot imbalance must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    Infeasible,
    MaxIterations,
}

impl SolveStatus {
    pub fn label(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub qset: CovarianceSet,
    /// Sum power per channel use after each solved subproblem.
    pub power_trace: Vec<f64>,
    /// True rates at `qset`.
    pub rates: RateVector,
    /// Eigenvalues above `1e-8 ·` max, per user.
    pub ranks: Vec<usize>,
    pub outer_iterations: usize,
    /// Re-initializations spent on the first subproblem.
    pub retries: usize,
    /// Feasibility rounds spent before the first subproblem became feasible.
    pub restorations: usize,
    /// Total Newton steps over all subproblems.
    pub newton_steps: usize,
    /// Set when the run stopped early, e.g. because the inner solver ran out
    /// of iterations.
    pub diagnostic: Option<String>,
}

impl SolveResult {
    pub fn sum_power(&self) -> f64 {
        self.qset.sum_power()
    }
}

/// Isotropic start `Q⁰_u = (f · P_u / 2N) I` for users with positive demand
/// and `Γ⁰ = B(Q⁰)`. On retry `r` the fraction becomes `f^(1/(r+1))`.
/// Per-slot 2×2 blocks `w_b (I + ρ F(φ))` with `F(φ)` the reflection
/// `[[cos φ, sin φ], [sin φ, −cos φ]]`. Phases and slot weights are spread
/// over the users so that no two users start with the same real-plane
/// orientation or the same time-slot profile; the trace is `2N`.
fn improper_shape(user: usize, num_users: usize, extension: usize, start: &ImproperStart) -> Mat {
    use std::f64::consts::PI;
    let d = 2 * extension;
    let frac = user as f64 / num_users as f64;
    let mut m = Mat::zeros(d, d);
    for b in 0..extension {
        let phi = PI * (frac + 0.5 * b as f64 / num_users as f64);
        let w = if extension > 1 {
            1.0 + start.slot_imbalance * (2.0 * PI * (frac + b as f64 / extension as f64)).cos()
        } else {
            1.0
        };
        let (c, s) = (start.eccentricity * phi.cos(), start.eccentricity * phi.sin());
        m[(2 * b, 2 * b)] = w * (1.0 + c);
        m[(2 * b, 2 * b + 1)] = w * s;
        m[(2 * b + 1, 2 * b)] = w * s;
        m[(2 * b + 1, 2 * b + 1)] = w * (1.0 - c);
    }
    m
}

pub fn initialize_gamma(
    net: &LiftedNetwork,
    config: &SignalingConfig,
    opts: &SolverOptions,
    retry: usize,
) -> Result<(GammaSet, CovarianceSet)> {
    let fraction = opts.init_power_fraction.powf(1.0 / (retry as f64 + 1.0));
    let d = net.tx_dim();
    let mut q = CovarianceSet::zeros(net);
    for u in 0..net.num_users() {
        if config.demands[u] > 0.0 {
            let scale = fraction * config.budgets[u] / d as f64;
            let shape = match config.mode {
                Mode::Proper => Mat::identity(d, d),
                Mode::Improper => improper_shape(u, net.num_users(), config.extension, &opts.improper_start),
            };
            q.set(u, shape * scale);
        }
    }
    Ok((gamma_from_covariances(net, &q)?, q))
}

fn ranks(q: &CovarianceSet) -> Vec<usize> {
    q.iter().map(|m| numerical_rank(m, RANK_REL_TOL)).collect()
}

fn assemble(
    net: &LiftedNetwork,
    status: SolveStatus,
    qset: CovarianceSet,
    power_trace: Vec<f64>,
    counters: &Counters,
    diagnostic: Option<String>,
) -> Result<SolveResult> {
    let rates = achievable_rates(net, &qset)?;
    Ok(SolveResult {
        status,
        ranks: ranks(&qset),
        outer_iterations: power_trace.len(),
        qset,
        power_trace,
        rates,
        retries: counters.retries,
        restorations: counters.restorations,
        newton_steps: counters.newton_steps,
        diagnostic,
    })
}

fn subproblem_spec<'a>(net: &'a LiftedNetwork, gamma: &'a GammaSet, config: &'a SignalingConfig) -> SubproblemSpec<'a> {
    SubproblemSpec { net, gamma, demands: &config.demands, budgets: &config.budgets, mode: config.mode }
}

/// Runs the outer loop for one scenario and signaling configuration.
pub fn minimize_sum_power(
    scenario: &Scenario,
    config: &SignalingConfig,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    config.validate(scenario)?;
    opts.validate()?;
    let net = LiftedNetwork::new(scenario, config.extension)?;
    minimize_on_network(&net, config, opts, None)
}

#[derive(Default)]
struct Counters {
    retries: usize,
    restorations: usize,
    newton_steps: usize,
}

enum First {
    Solved(SubproblemResult),
    Stalled(CovarianceSet, String),
}

/// Solves the first subproblem with `Γ = B(q)`. When it is infeasible the
/// feasibility problem is itself convexified: each round maximizes the
/// smallest normalized slack at `Γ = B(q)` and moves `q` to the maximizer.
/// The bound is tight at `q`, so the attained slack never decreases; the
/// round stops once it turns positive or stops improving.
fn first_subproblem(
    net: &LiftedNetwork,
    config: &SignalingConfig,
    opts: &SolverOptions,
    mut q: CovarianceSet,
    counters: &mut Counters,
) -> Result<Option<First>> {
    let mut best = f64::NEG_INFINITY;
    for round in 0..=opts.restoration_iterations {
        let gamma = gamma_from_covariances(net, &q)?;
        let spec = subproblem_spec(net, &gamma, config);
        if round > 0 {
            let (q1, slack) = phase1_feasible_point(spec, Some(&q))?;
            counters.restorations += 1;
            debug!("restoration round {round}: min normalized slack {slack}");
            if slack <= 0.0 && slack - best < RESTORATION_PROGRESS {
                return Ok(None);
            }
            best = best.max(slack);
            q = q1;
            if slack <= 0.0 {
                continue;
            }
        }
        let gamma = gamma_from_covariances(net, &q)?;
        let sub = solve_subproblem_with(subproblem_spec(net, &gamma, config), Some(&q), &opts.barrier)?;
        counters.newton_steps += sub.barrier_iterations;
        match sub.status {
            SubproblemStatus::Optimal => return Ok(Some(First::Solved(sub))),
            SubproblemStatus::Infeasible => {}
            SubproblemStatus::NonConverged => {
                return Ok(Some(First::Stalled(
                    sub.qset,
                    format!("inner solver did not converge on the first subproblem (retry {})", counters.retries),
                )));
            }
        }
    }
    Ok(None)
}

pub(crate) fn minimize_on_network(
    net: &LiftedNetwork,
    config: &SignalingConfig,
    opts: &SolverOptions,
    warm: Option<&CovarianceSet>,
) -> Result<SolveResult> {
    if config.demands.iter().all(|&d| d == 0.0) {
        return assemble(net, SolveStatus::Converged, CovarianceSet::zeros(net), vec![0.0], &Counters::default(), None);
    }

    let mut counters = Counters::default();
    let mut first = None;
    if let Some(q0) = warm {
        first = first_subproblem(net, config, opts, q0.clone(), &mut counters)?;
    }
    for retry in 0..=opts.retry_budget {
        if first.is_some() {
            break;
        }
        counters.retries = retry;
        let (_, q0) = initialize_gamma(net, config, opts, retry)?;
        first = first_subproblem(net, config, opts, q0, &mut counters)?;
    }
    let (retries, restorations) = (counters.retries, counters.restorations);
    let first = match first {
        Some(First::Solved(sub)) => sub,
        Some(First::Stalled(q, msg)) => {
            return assemble(net, SolveStatus::MaxIterations, q, Vec::new(), &counters, Some(msg));
        }
        None => {
            return assemble(
                net,
                SolveStatus::Infeasible,
                CovarianceSet::zeros(net),
                Vec::new(),
                &counters,
                Some(format!(
                    "no feasible subproblem after {} initializations and {restorations} restoration steps",
                    retries + 1
                )),
            );
        }
    };
    debug!("first subproblem solved after {retries} retries and {restorations} restoration steps");

    let mut q = first.qset;
    let mut trace = vec![first.objective];
    while trace.len() < opts.max_outer_iterations {
        let gamma = gamma_from_covariances(net, &q)?;
        let sub = solve_subproblem_with(subproblem_spec(net, &gamma, config), Some(&q), &opts.barrier)?;
        counters.newton_steps += sub.barrier_iterations;
        match sub.status {
            SubproblemStatus::Optimal => {}
            SubproblemStatus::Infeasible => {
                return Err(Error::LostFeasibility { iteration: trace.len() + 1, min_slack: sub.phase1_min_slack });
            }
            SubproblemStatus::NonConverged => {
                let it = trace.len() + 1;
                return assemble(
                    net,
                    SolveStatus::MaxIterations,
                    q,
                    trace,
                    &counters,
                    Some(format!("inner solver did not converge at outer iteration {it}")),
                );
            }
        }
        let prev = *trace.last().expect("non-empty trace");
        debug!("outer iteration {}: sum power {}", trace.len() + 1, sub.objective);
        trace.push(sub.objective);
        q = sub.qset;
        if (sub.objective - prev).abs() < opts.epsilon {
            return assemble(net, SolveStatus::Converged, q, trace, &counters, None);
        }
    }
    assemble(net, SolveStatus::MaxIterations, q, trace, &counters, None)
}

/// Independent re-check of a converged result against the true rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    /// `R̄_u − ψ_u` per user.
    pub margins: Vec<f64>,
    pub properness_defects: Vec<f64>,
    pub ranks: Vec<usize>,
}

impl Certification {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_properness_defect(&self) -> f64 {
        self.properness_defects.iter().copied().fold(0.0, f64::max)
    }
}

/// Recomputes the true rates of `result.qset` from scratch and checks every
/// demand is met to within `1e-6`.
pub fn certify(result: &SolveResult, scenario: &Scenario, config: &SignalingConfig) -> Result<Certification> {
    if result.status != SolveStatus::Converged {
        return Err(Error::Input(format!("cannot certify a result with status {}", result.status.label())));
    }
    config.validate(scenario)?;
    let net = LiftedNetwork::new(scenario, config.extension)?;
    let rates = achievable_rates(&net, &result.qset)?;
    let margins: Vec<f64> = rates.rates.iter().zip(&config.demands).map(|(r, d)| r - d).collect();
    if let Some((user, &margin)) = margins.iter().enumerate().find(|(_, m)| **m < -CERTIFY_TOL) {
        return Err(Error::Certification { user, margin });
    }
    Ok(Certification {
        margins,
        properness_defects: result.qset.iter().map(properness_defect).collect(),
        ranks: ranks(&result.qset),
    })
}
