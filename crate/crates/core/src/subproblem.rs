//! Interior-point solver for the convexified power-minimization subproblem.
//!
//! For a fixed [`GammaSet`] the problem
//!
//! ```text
//! minimize   Σ_u Tr(Q_u) / N
//! subject to R̃_u(Q) ≥ ψ_u,  Tr(Q_u) ≤ P_u,  Q_u ⪰ 0
//! ```
//!
//! is convex. It is solved with a primal log-barrier method: Newton steps
//! with exact Hessians and Armijo backtracking, the barrier weight shrinking
//! tenfold after each centering. A phase-I stage maximizes the smallest
//! normalized slack to find a strictly feasible start or to certify
//! infeasibility.
//!
//! Covariances are expressed in an orthonormal basis of the admissible
//! symmetric matrices. In [`Mode::Proper`] that basis spans only matrices
//! commuting with `J = I_N ⊗ [[0,-1],[1,0]]`, so every iterate is proper.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::bound::GammaSet;
use crate::channel::LiftedNetwork;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_inner, symmetrize, trace_product, Mat, SpdFactor};
use crate::rates::{received_covariance, spd_ln_det, CovarianceSet};

/// Signaling scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Proper Gaussian signaling: covariances commute with `J`.
    Proper,
    /// Improper Gaussian signaling: any symmetric PSD covariance.
    Improper,
}

impl Mode {
    pub fn label(&self) -> &'static str {
        match self {
            Mode::Proper => "pgs",
            Mode::Improper => "igs",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgs" | "proper" => Ok(Mode::Proper),
            "igs" | "improper" => Ok(Mode::Improper),
            other => Err(Error::Input(format!("unknown mode `{other}` (expected pgs or igs)"))),
        }
    }
}

/// Barrier method settings. The defaults are the ones the outer loop uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    pub initial_mu: f64,
    pub mu_factor: f64,
    /// Centering stops once `λ²/2` drops below this value.
    pub decrement_tol: f64,
    /// Stop once `m · μ` is below this value, `m` counting every inequality
    /// (each PSD constraint counts as its side length).
    pub gap_tol: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub max_newton_per_centering: usize,
    pub max_newton_total: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            initial_mu: 1.0,
            mu_factor: 10.0,
            decrement_tol: 1e-6,
            gap_tol: 1e-8,
            armijo: 0.3,
            shrink: 0.5,
            max_newton_per_centering: 200,
            max_newton_total: 5000,
        }
    }
}

/// Phase-I verdict threshold on the maximal min-slack.
pub const INFEASIBLE_SLACK: f64 = -1e-9;

/// Inputs of one convex subproblem.
#[derive(Debug, Clone, Copy)]
pub struct SubproblemSpec<'a> {
    pub net: &'a LiftedNetwork,
    pub gamma: &'a GammaSet,
    /// Rate demands in bits per channel use, flat user order.
    pub demands: &'a [f64],
    /// Budgets on `Tr(Q_u)`, flat user order.
    pub budgets: &'a [f64],
    pub mode: Mode,
}

impl SubproblemSpec<'_> {
    pub fn validate(&self) -> Result<()> {
        let users = self.net.num_users();
        if self.demands.len() != users || self.budgets.len() != users || self.gamma.len() != users {
            return Err(Error::Input(format!(
                "subproblem sizes disagree: {users} users, {} demands, {} budgets, {} Γ",
                self.demands.len(),
                self.budgets.len(),
                self.gamma.len()
            )));
        }
        if let Some(u) = self.demands.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Input(format!("demand of user {u} must be finite and ≥ 0")));
        }
        if let Some(u) = self.budgets.iter().position(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Input(format!("budget of user {u} must be finite and > 0")));
        }
        let n = self.net.rx_dim();
        for (u, g) in self.gamma.iter().enumerate() {
            if g.shape() != (n, n) {
                return Err(Error::Input(format!("Γ of user {u} has shape {:?}, expected {n}x{n}", g.shape())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubproblemStatus {
    Optimal,
    Infeasible,
    /// The Newton iteration budget ran out.
    NonConverged,
}

/// Diagnostics recorded after every Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierStep {
    pub phase1: bool,
    pub mu: f64,
    pub objective: f64,
    pub min_slack: f64,
    pub decrement: f64,
}

#[derive(Debug, Clone)]
pub struct SubproblemResult {
    pub status: SubproblemStatus,
    pub qset: CovarianceSet,
    /// `Σ Tr(Q_u) / N`.
    pub objective: f64,
    /// `R̃_u − ψ_u`; users with zero demand report their true rate instead.
    pub rate_slacks: Vec<f64>,
    /// `P_u − Tr(Q_u)`.
    pub power_slacks: Vec<f64>,
    /// Largest attained phase-I min-slack (normalized), or the normalized
    /// min-slack of the start point when phase I was skipped.
    pub phase1_min_slack: f64,
    pub barrier_iterations: usize,
    /// Final `m · μ`.
    pub duality_gap: f64,
    pub trace: Vec<BarrierStep>,
}

/// Orthonormal (Frobenius) basis of the symmetric `2N x 2N` matrices
/// admissible in `mode`.
pub fn covariance_basis(mode: Mode, extension: usize) -> Vec<Mat> {
    let d = 2 * extension;
    let mut basis = Vec::new();
    match mode {
        Mode::Improper => {
            for i in 0..d {
                for j in i..d {
                    let mut e = Mat::zeros(d, d);
                    if i == j {
                        e[(i, i)] = 1.0;
                    } else {
                        e[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
                        e[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
                    }
                    basis.push(e);
                }
            }
        }
        Mode::Proper => {
            // Real forms of the Hermitian basis: real diagonal entries, then
            // the real and imaginary parts of each off-diagonal pair.
            for a in 0..extension {
                let mut e = Mat::zeros(d, d);
                e[(2 * a, 2 * a)] = std::f64::consts::FRAC_1_SQRT_2;
                e[(2 * a + 1, 2 * a + 1)] = std::f64::consts::FRAC_1_SQRT_2;
                basis.push(e);
            }
            for a in 0..extension {
                for b in a + 1..extension {
                    let mut re = Mat::zeros(d, d);
                    let mut im = Mat::zeros(d, d);
                    for k in 0..2 {
                        re[(2 * a + k, 2 * b + k)] = 0.5;
                        re[(2 * b + k, 2 * a + k)] = 0.5;
                    }
                    // block (a, b) = [[0, -1], [1, 0]] / 2, block (b, a) its transpose
                    im[(2 * a, 2 * b + 1)] = -0.5;
                    im[(2 * a + 1, 2 * b)] = 0.5;
                    im[(2 * b + 1, 2 * a)] = -0.5;
                    im[(2 * b, 2 * a + 1)] = 0.5;
                    basis.push(re);
                    basis.push(im);
                }
            }
        }
    }
    basis
}

/// Gradient of the lower bound of user `u` with respect to every user's
/// covariance, as symmetric `2N x 2N` matrices in flat user order.
pub fn grad_rate_lower_bound(
    net: &LiftedNetwork,
    u: usize,
    q: &CovarianceSet,
    gamma: &GammaSet,
) -> Result<Vec<Mat>> {
    q.validate_for(net)?;
    if u >= net.num_users() || gamma.len() != net.num_users() {
        return Err(Error::Input("user index or Γ set does not match the network".into()));
    }
    let rx = net.user(u).cell;
    let a = received_covariance(net, rx, &net.signal_set(u), q);
    let a_f = SpdFactor::new(&a).ok_or_else(|| Error::Domain("signal covariance is not positive definite".into()))?;
    let g_f = SpdFactor::new(gamma.get(u)).ok_or_else(|| Error::Domain("Γ is singular".into()))?;
    let scale = 1.0 / (net.extension() as f64 * LN_2);
    let d = net.tx_dim();
    let mut grads = vec![Mat::zeros(d, d); net.num_users()];
    for v in net.signal_set(u) {
        let g = net.g_bar(rx, v);
        grads[v] += g.transpose() * a_f.solve(g) * scale;
    }
    for v in net.interference_set(u) {
        let g = net.g_bar(rx, v);
        grads[v] -= g.transpose() * g_f.solve(g) * scale;
    }
    Ok(grads.iter().map(symmetrize).collect())
}

/// Rate constraint of one active user in basis coordinates.
struct RateTerm {
    user: usize,
    demand: f64,
    /// `−ln|Γ| − (σ²/2) Tr(Γ⁻¹) + 2MN`, in nats.
    constant: f64,
    /// `(active slot, images Ḡ E_a Ḡᵀ)` for active users in the signal set.
    images: Vec<(usize, Vec<Mat>)>,
    /// `Tr(Γ⁻¹ Ḡ E_a Ḡᵀ)` over all coordinates (zero outside the interference set).
    linear: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

struct Eval {
    value: f64,
    grad: DVector<f64>,
    hess: Mat,
    min_slack: f64,
}

struct Problem<'a> {
    spec: SubproblemSpec<'a>,
    /// Flat indices of users with positive demand; only they carry variables.
    active: Vec<usize>,
    basis: Vec<Mat>,
    basis_trace: Vec<f64>,
    terms: Vec<RateTerm>,
    noise_half: f64,
    rate_scale: f64,
}

impl<'a> Problem<'a> {
    fn new(spec: SubproblemSpec<'a>) -> Result<Self> {
        spec.validate()?;
        let net = spec.net;
        let active: Vec<usize> = (0..net.num_users()).filter(|&u| spec.demands[u] > 0.0).collect();
        let basis = covariance_basis(spec.mode, net.extension());
        let basis_trace = basis.iter().map(|e| e.trace()).collect();
        let dim = basis.len();
        let n_vars = dim * active.len();
        let n_rx = net.rx_dim();
        let noise_half = net.noise_variance() / 2.0;

        let mut terms = Vec::with_capacity(active.len());
        for &u in &active {
            let rx = net.user(u).cell;
            let gf = SpdFactor::new(spec.gamma.get(u))
                .ok_or_else(|| Error::Domain(format!("Γ of user {u} is not positive definite")))?;
            let constant = -gf.ln_det() - noise_half * gf.inverse().trace() + n_rx as f64;
            let signal = net.signal_set(u);
            let mut images = Vec::new();
            let mut linear = DVector::zeros(n_vars);
            for (slot, &v) in active.iter().enumerate() {
                if !signal.contains(&v) {
                    continue;
                }
                let g = net.g_bar(rx, v);
                let imgs: Vec<Mat> = basis.iter().map(|e| g * e * g.transpose()).collect();
                if v != u {
                    for (a, c) in imgs.iter().enumerate() {
                        linear[slot * dim + a] = gf.solve(c).trace();
                    }
                }
                images.push((slot, imgs));
            }
            terms.push(RateTerm { user: u, demand: spec.demands[u], constant, images, linear });
        }
        Ok(Self {
            spec,
            active,
            basis,
            basis_trace,
            terms,
            noise_half,
            rate_scale: 1.0 / (net.extension() as f64 * LN_2),
        })
    }

    fn dim(&self) -> usize {
        self.basis.len()
    }

    fn n_vars(&self) -> usize {
        self.dim() * self.active.len()
    }

    /// Inequality count used in the duality-gap bound.
    fn n_constraints(&self) -> usize {
        self.active.len() * (2 + self.spec.net.tx_dim())
    }

    fn covariance(&self, x: &[f64], slot: usize) -> Mat {
        let d = self.spec.net.tx_dim();
        let dim = self.dim();
        let mut q = Mat::zeros(d, d);
        for (a, e) in self.basis.iter().enumerate() {
            q += e * x[slot * dim + a];
        }
        q
    }

    fn coordinates(&self, q: &CovarianceSet) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n_vars());
        for &u in &self.active {
            x.extend(self.basis.iter().map(|e| frobenius_inner(q.get(u), e)));
        }
        x
    }

    fn to_covariances(&self, x: &[f64]) -> CovarianceSet {
        let mut q = CovarianceSet::zeros(self.spec.net);
        for (slot, &u) in self.active.iter().enumerate() {
            q.set(u, symmetrize(&self.covariance(x, slot)));
        }
        q
    }

    fn power(&self, x: &[f64], slot: usize) -> f64 {
        let dim = self.dim();
        (0..dim).map(|a| self.basis_trace[a] * x[slot * dim + a]).sum()
    }

    fn signal_matrix(&self, term: &RateTerm, x: &[f64]) -> Mat {
        let n = self.spec.net.rx_dim();
        let dim = self.dim();
        let mut a = Mat::identity(n, n) * self.noise_half;
        for (slot, imgs) in &term.images {
            for (k, c) in imgs.iter().enumerate() {
                let w = x[slot * dim + k];
                if w != 0.0 {
                    a += c * w;
                }
            }
        }
        a
    }

    /// Lower-bound rate `R̃` of a term in bits per channel use.
    fn lower_rate(&self, term: &RateTerm, x: &[f64]) -> Option<f64> {
        let a = SpdFactor::new(&self.signal_matrix(term, x))?;
        let lin: f64 = term.linear.iter().zip(x).map(|(c, v)| c * v).sum();
        Some((a.ln_det() - lin + term.constant) * self.rate_scale)
    }

    /// Normalized slacks: `(R̃ − ψ)/ψ` per rate constraint then
    /// `(P − Tr Q)/P` per budget.
    fn normalized_slacks(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(2 * self.active.len());
        for term in &self.terms {
            out.push((self.lower_rate(term, x)? - term.demand) / term.demand);
        }
        for (slot, &u) in self.active.iter().enumerate() {
            let p = self.spec.budgets[u];
            out.push((p - self.power(x, slot)) / p);
        }
        Some(out)
    }

    fn strictly_feasible(&self, x: &[f64]) -> bool {
        (0..self.active.len()).all(|slot| SpdFactor::new(&self.covariance(x, slot)).is_some())
            && self.normalized_slacks(x).is_some_and(|s| s.iter().all(|&v| v > 0.0))
    }

    /// Barrier function at `z` (`z = x` in phase II, `z = (x, s)` in phase I).
    /// `None` outside the domain.
    fn evaluate(&self, z: &[f64], t: f64, phase: Phase, derivs: bool) -> Option<Eval> {
        let nv = self.n_vars();
        let nz = z.len();
        let dim = self.dim();
        let x = &z[..nv];
        let aux = if phase == Phase::One { z[nv] } else { 0.0 };
        let n_ext = self.spec.net.extension() as f64;

        let mut value = 0.0;
        let mut grad = DVector::zeros(if derivs { nz } else { 0 });
        let mut hess = Mat::zeros(if derivs { nz } else { 0 }, if derivs { nz } else { 0 });
        let mut min_slack = f64::INFINITY;

        match phase {
            Phase::Two => {
                for slot in 0..self.active.len() {
                    value += t * self.power(x, slot) / n_ext;
                }
                if derivs {
                    for slot in 0..self.active.len() {
                        for a in 0..dim {
                            grad[slot * dim + a] += t * self.basis_trace[a] / n_ext;
                        }
                    }
                }
            }
            Phase::One => {
                value -= t * aux;
                if derivs {
                    grad[nv] -= t;
                }
            }
        }

        // −ln det Q
        for slot in 0..self.active.len() {
            let q = self.covariance(x, slot);
            let f = SpdFactor::new(&q)?;
            value -= f.ln_det();
            if derivs {
                let w: Vec<Mat> = self.basis.iter().map(|e| f.solve(e)).collect();
                for a in 0..dim {
                    grad[slot * dim + a] -= w[a].trace();
                    for b in a..dim {
                        let h = trace_product(&w[a], &w[b]);
                        hess[(slot * dim + a, slot * dim + b)] += h;
                        if a != b {
                            hess[(slot * dim + b, slot * dim + a)] += h;
                        }
                    }
                }
            }
        }

        // −ln(rate slack)
        for term in &self.terms {
            let a = SpdFactor::new(&self.signal_matrix(term, x))?;
            let lin: f64 = term.linear.iter().zip(x).map(|(c, v)| c * v).sum();
            let rate = (a.ln_det() - lin + term.constant) * self.rate_scale;
            let (slack, weight) = match phase {
                Phase::Two => (rate - term.demand, 1.0),
                Phase::One => ((rate - term.demand) / term.demand - aux, 1.0 / term.demand),
            };
            if !(slack > 0.0) {
                return None;
            }
            min_slack = min_slack.min(slack);
            value -= slack.ln();
            if derivs {
                let mut g = DVector::zeros(nz);
                for i in 0..nv {
                    g[i] = -term.linear[i] * self.rate_scale * weight;
                }
                let mut idx = Vec::new();
                let mut m = Vec::new();
                for (slot, imgs) in &term.images {
                    for (k, c) in imgs.iter().enumerate() {
                        let mk = a.solve(c);
                        g[slot * dim + k] += mk.trace() * self.rate_scale * weight;
                        idx.push(slot * dim + k);
                        m.push(mk);
                    }
                }
                if phase == Phase::One {
                    g[nv] = -1.0;
                }
                grad -= &g / slack;
                hess += &g * g.transpose() / (slack * slack);
                // −∇²slack / slack, with ∇²R̃ = −scale Tr(A⁻¹C_a A⁻¹C_b)
                let c = self.rate_scale * weight / slack;
                for p in 0..idx.len() {
                    for r in p..idx.len() {
                        let h = c * trace_product(&m[p], &m[r]);
                        hess[(idx[p], idx[r])] += h;
                        if p != r {
                            hess[(idx[r], idx[p])] += h;
                        }
                    }
                }
            }
        }

        // −ln(budget slack)
        for (slot, &u) in self.active.iter().enumerate() {
            let p = self.spec.budgets[u];
            let used = self.power(x, slot);
            let (slack, weight) = match phase {
                Phase::Two => (p - used, 1.0),
                Phase::One => ((p - used) / p - aux, 1.0 / p),
            };
            if !(slack > 0.0) {
                return None;
            }
            min_slack = min_slack.min(slack);
            value -= slack.ln();
            if derivs {
                let mut g = DVector::zeros(nz);
                for a in 0..dim {
                    g[slot * dim + a] = -self.basis_trace[a] * weight;
                }
                if phase == Phase::One {
                    g[nv] = -1.0;
                }
                grad -= &g / slack;
                hess += &g * g.transpose() / (slack * slack);
            }
        }

        if !value.is_finite() {
            return None;
        }
        Some(Eval { value, grad, hess, min_slack })
    }

}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Centering {
    /// Newton decrement below tolerance.
    Converged,
    /// Line search found no decrease; the point is as centered as double precision allows.
    Stalled,
    /// Per-centering step cap reached.
    Capped,
    /// Total Newton budget exhausted.
    Budget,
}

struct BarrierRun {
    z: Vec<f64>,
    newton: usize,
    trace: Vec<BarrierStep>,
}

impl BarrierRun {
    /// Newton centering of `t·f0 + φ` from the current point.
    fn center(&mut self, prob: &Problem, t: f64, phase: Phase, opts: &BarrierOptions) -> Result<Centering> {
        for _ in 0..opts.max_newton_per_centering {
            if self.newton >= opts.max_newton_total {
                return Ok(Centering::Budget);
            }
            let ev = prob
                .evaluate(&self.z, t, phase, true)
                .ok_or_else(|| Error::Domain("barrier iterate left the domain".into()))?;
            let step = newton_direction(&ev.hess, &ev.grad);
            let slope = ev.grad.dot(&step);
            let decrement = -slope / 2.0;
            self.newton += 1;
            self.trace.push(BarrierStep {
                phase1: phase == Phase::One,
                mu: 1.0 / t,
                objective: self.objective(prob, phase),
                min_slack: ev.min_slack,
                decrement,
            });
            if !(decrement > opts.decrement_tol) {
                return Ok(Centering::Converged);
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-16 {
                let trial: Vec<f64> = self.z.iter().zip(step.iter()).map(|(z, d)| z + alpha * d).collect();
                if let Some(e) = prob.evaluate(&trial, t, phase, false) {
                    if e.value <= ev.value + opts.armijo * alpha * slope {
                        self.z = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= opts.shrink;
            }
            if !accepted {
                return Ok(Centering::Stalled);
            }
        }
        Ok(Centering::Capped)
    }

    fn objective(&self, prob: &Problem, phase: Phase) -> f64 {
        match phase {
            Phase::One => self.z[prob.n_vars()],
            Phase::Two => {
                let n = prob.spec.net.extension() as f64;
                (0..prob.active.len()).map(|s| prob.power(&self.z, s)).sum::<f64>() / n
            }
        }
    }
}

fn newton_direction(hess: &Mat, grad: &DVector<f64>) -> DVector<f64> {
    let n = grad.len();
    let scale = hess.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut reg = 0.0;
    loop {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..n {
                h[(i, i)] += reg * scale;
            }
        }
        if let Some(ch) = h.cholesky() {
            return -ch.solve(grad);
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 10.0 };
    }
}

struct PhaseOne {
    x: Vec<f64>,
    min_slack: f64,
    newton: usize,
    trace: Vec<BarrierStep>,
    exhausted: bool,
}

/// Share of the budget spent by the default phase-I start. Low power keeps
/// the normalized slacks of order one.
const DEFAULT_START_FRACTION: f64 = 1e-3;

fn default_start(prob: &Problem) -> Vec<f64> {
    let net = prob.spec.net;
    let d = net.tx_dim();
    let mut q = CovarianceSet::zeros(net);
    for &u in &prob.active {
        q.set(u, Mat::identity(d, d) * (DEFAULT_START_FRACTION * prob.spec.budgets[u] / d as f64));
    }
    prob.coordinates(&q)
}

/// Maximizes the smallest normalized slack. With `stop_when_feasible` the
/// search ends as soon as a strictly feasible point is found.
fn run_phase_one(
    prob: &Problem,
    start: Option<Vec<f64>>,
    stop_when_feasible: bool,
    opts: &BarrierOptions,
) -> Result<PhaseOne> {
    let mut x = start.unwrap_or_else(|| default_start(prob));
    let pd = (0..prob.active.len()).all(|s| SpdFactor::new(&prob.covariance(&x, s)).is_some());
    if !pd {
        x = default_start(prob);
    }
    let slacks = prob
        .normalized_slacks(&x)
        .ok_or_else(|| Error::Domain("signal covariance not positive definite at start".into()))?;
    let s0 = slacks.iter().copied().fold(f64::INFINITY, f64::min);
    let mut z = x;
    z.push(s0 - 1.0);
    let mut run = BarrierRun { z, newton: 0, trace: Vec::new() };
    let nv = prob.n_vars();
    let m = (prob.n_constraints() + 1) as f64;
    let mut t = 1.0 / opts.initial_mu;
    let mut exhausted = false;
    loop {
        let centering = run.center(prob, t, Phase::One, opts)?;
        if centering == Centering::Budget {
            exhausted = true;
            break;
        }
        let x = &run.z[..nv];
        let attained = prob
            .normalized_slacks(x)
            .map(|s| s.iter().copied().fold(f64::INFINITY, f64::min))
            .unwrap_or(f64::NEG_INFINITY);
        if stop_when_feasible && attained > 0.0 {
            break;
        }
        // On the central path the optimal min-slack is at most s + m/t; the
        // bound is only trusted after a converged centering.
        let gap = m / t;
        let centered = centering == Centering::Converged;
        if (centered && run.z[nv] + gap < INFEASIBLE_SLACK) || gap <= opts.gap_tol * 1e-2 {
            break;
        }
        t *= opts.mu_factor;
    }
    let x: Vec<f64> = run.z[..nv].to_vec();
    let min_slack = prob
        .normalized_slacks(&x)
        .map(|s| s.iter().copied().fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NEG_INFINITY);
    Ok(PhaseOne { x, min_slack, newton: run.newton, trace: run.trace, exhausted })
}

/// Maximizes the minimum normalized slack (`(R̃−ψ)/ψ` and `(P−Tr Q)/P`)
/// over positive-definite covariances. A positive min-slack certifies that
/// the subproblem is strictly feasible.
pub fn phase1_feasible_point(
    spec: SubproblemSpec,
    start: Option<&CovarianceSet>,
) -> Result<(CovarianceSet, f64)> {
    let prob = Problem::new(spec)?;
    if prob.active.is_empty() {
        return Ok((CovarianceSet::zeros(spec.net), f64::INFINITY));
    }
    let x0 = start.filter(|q| q.validate_for(spec.net).is_ok()).map(|q| prob.coordinates(q));
    let p1 = run_phase_one(&prob, x0, false, &BarrierOptions::default())?;
    Ok((prob.to_covariances(&p1.x), p1.min_slack))
}

pub fn solve_subproblem(spec: SubproblemSpec, start: Option<&CovarianceSet>) -> Result<SubproblemResult> {
    solve_subproblem_with(spec, start, &BarrierOptions::default())
}

pub fn solve_subproblem_with(
    spec: SubproblemSpec,
    start: Option<&CovarianceSet>,
    opts: &BarrierOptions,
) -> Result<SubproblemResult> {
    let prob = Problem::new(spec)?;
    let net = spec.net;
    if prob.active.is_empty() {
        let q = CovarianceSet::zeros(net);
        return Ok(finish(&prob, SubproblemStatus::Optimal, q, f64::INFINITY, 0, 0.0, Vec::new()));
    }

    let start_x = match start {
        Some(q) if q.validate_for(net).is_ok() => Some(prob.coordinates(q)),
        _ => None,
    };
    let mut trace = Vec::new();
    let mut newton = 0;
    let (x0, phase1_min_slack) = match start_x {
        Some(x) if prob.strictly_feasible(&x) => {
            let s = prob
                .normalized_slacks(&x)
                .map(|s| s.iter().copied().fold(f64::INFINITY, f64::min))
                .unwrap_or(f64::NEG_INFINITY);
            (x, s)
        }
        other => {
            let p1 = run_phase_one(&prob, other, true, opts)?;
            newton += p1.newton;
            trace.extend(p1.trace);
            if p1.min_slack <= 0.0 {
                let status = if p1.exhausted || p1.min_slack >= INFEASIBLE_SLACK {
                    SubproblemStatus::NonConverged
                } else {
                    SubproblemStatus::Infeasible
                };
                let q = prob.to_covariances(&p1.x);
                return Ok(finish(&prob, status, q, p1.min_slack, newton, f64::NAN, trace));
            }
            (p1.x, p1.min_slack)
        }
    };

    let mut run = BarrierRun { z: x0, newton, trace };
    let m = prob.n_constraints() as f64;
    let mut t = 1.0 / opts.initial_mu;
    let status = loop {
        if run.center(&prob, t, Phase::Two, opts)? == Centering::Budget {
            break SubproblemStatus::NonConverged;
        }
        if m / t <= opts.gap_tol {
            break SubproblemStatus::Optimal;
        }
        t *= opts.mu_factor;
    };
    let q = prob.to_covariances(&run.z);
    Ok(finish(&prob, status, q, phase1_min_slack, run.newton, m / t, run.trace))
}

fn finish(
    prob: &Problem,
    status: SubproblemStatus,
    qset: CovarianceSet,
    phase1_min_slack: f64,
    barrier_iterations: usize,
    duality_gap: f64,
    trace: Vec<BarrierStep>,
) -> SubproblemResult {
    let net = prob.spec.net;
    let x = prob.coordinates(&qset);
    let mut rate_slacks = vec![0.0; net.num_users()];
    for term in &prob.terms {
        rate_slacks[term.user] = prob.lower_rate(term, &x).unwrap_or(f64::NEG_INFINITY) - term.demand;
    }
    for u in (0..net.num_users()).filter(|u| !prob.active.contains(u)) {
        let rx = net.user(u).cell;
        let a = received_covariance(net, rx, &net.signal_set(u), &qset);
        let b = received_covariance(net, rx, &net.interference_set(u), &qset);
        rate_slacks[u] = match (spd_ln_det(&a, ""), spd_ln_det(&b, "")) {
            (Ok(la), Ok(lb)) => (la - lb) / (LN_2 * net.extension() as f64),
            _ => f64::NEG_INFINITY,
        };
    }
    let power_slacks = (0..net.num_users()).map(|u| prob.spec.budgets[u] - qset.get(u).trace()).collect();
    SubproblemResult {
        status,
        objective: qset.sum_power(),
        qset,
        rate_slacks,
        power_slacks,
        phase1_min_slack,
        barrier_iterations,
        duality_gap,
        trace,
    }
}
