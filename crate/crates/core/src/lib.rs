//! Uplink sum-power minimization for multi-cell interference networks with
//! improper Gaussian signaling and symbol extension.
//!
//! The crate lifts complex channels to real-valued MIMO channels
//! ([`channel`]), evaluates successive-decoding rates ([`rates`]), bounds
//! the non-concave part of each rate ([`bound`]), solves the resulting
//! convex subproblem with an interior-point method ([`subproblem`]) and
//! iterates to a stationary power allocation ([`sca`]). [`sweep`] runs demand
//! sweeps and writes CSV tables.

pub mod bound;
pub mod channel;
pub mod error;
pub mod linalg;
pub mod rates;
pub mod sca;
pub mod subproblem;
pub mod sweep;

pub use bound::{fenchel_upper, gamma_from_covariances, rate_lower_bound, GammaSet};
pub use channel::{
    builtin_scenarios, extend, lift_complex_to_real, load_scenario, resolve_scenario, LiftedNetwork,
    Polar, Scenario, UserId,
};
pub use error::{Error, Result};
pub use rates::{
    achievable_rate, achievable_rate_raw, achievable_rates, interference_covariance, project_proper,
    properness_defect, signal_covariance, CovarianceSet, RateVector,
};
pub use sca::{
    certify, initialize_gamma, minimize_sum_power, Certification, ImproperStart, SignalingConfig,
    SolveResult, SolveStatus, SolverOptions,
};
pub use subproblem::{
    grad_rate_lower_bound, phase1_feasible_point, solve_subproblem, Mode, SubproblemResult,
    SubproblemSpec, SubproblemStatus,
};
pub use sweep::{run_sweep, DemandGrid, PointSettings, RateConvention, SweepRow, SweepSpec};
