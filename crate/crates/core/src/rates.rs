//! Successive-decoding rate evaluation on the real-valued lifted channel.
//!
//! The base station of cell `k` decodes its users in index order. When user
//! `i` is decoded, its own signal, the not-yet-decoded users `i+1..` of the
//! same cell and every out-of-cell user are present:
//!
//! ```text
//! A = σ²/2 I + Σ_{j ≥ i} Ḡ_kj Q_j Ḡ_kjᵀ + Σ_{l ≠ k} Σ_j Ḡ_kj_l Q_j_l Ḡ_kj_lᵀ
//! B = A − Ḡ_ki Q_i Ḡ_kiᵀ
//! R = log2|A| − log2|B|
//! ```
//!
//! Rates and powers are reported per channel use, i.e. divided by `N`.

use std::f64::consts::LN_2;

use crate::channel::LiftedNetwork;
use crate::error::{Error, Result};
use crate::linalg::{kron_identity, min_eigenvalue, symmetry_defect, Mat, SpdFactor};

pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-9;

/// One real symmetric `2N x 2N` transmit covariance per user, in flat user
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    extension: usize,
    q: Vec<Mat>,
}

impl CovarianceSet {
    pub fn new(extension: usize, q: Vec<Mat>) -> Result<Self> {
        if extension == 0 {
            return Err(Error::Input("extension length N must be at least 1".into()));
        }
        let set = Self { extension, q };
        for (u, m) in set.q.iter().enumerate() {
            set.check_one(u, m)?;
        }
        Ok(set)
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(extension: usize, q: Vec<Mat>) -> Self {
        Self { extension, q }
    }

    pub fn zeros(net: &LiftedNetwork) -> Self {
        let d = net.tx_dim();
        Self { extension: net.extension(), q: vec![Mat::zeros(d, d); net.num_users()] }
    }

    fn check_one(&self, u: usize, m: &Mat) -> Result<()> {
        let d = 2 * self.extension;
        if m.shape() != (d, d) {
            return Err(Error::Input(format!(
                "covariance of user {u} has shape {:?}, expected {d}x{d}",
                m.shape()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("covariance of user {u} is not finite")));
        }
        let asym = symmetry_defect(m);
        if asym > SYMMETRY_TOL {
            return Err(Error::Domain(format!("covariance of user {u} is not symmetric ({asym:e})")));
        }
        let min_ev = min_eigenvalue(m);
        if min_ev < -PSD_TOL {
            return Err(Error::Domain(format!(
                "covariance of user {u} is not positive semidefinite (min eigenvalue {min_ev:e})"
            )));
        }
        Ok(())
    }

    /// Checks that the set matches `net`: one covariance per user, each of
    /// side `2N`, symmetric and PSD.
    pub fn validate_for(&self, net: &LiftedNetwork) -> Result<()> {
        if self.extension != net.extension() {
            return Err(Error::Input(format!(
                "covariance set uses N = {}, network uses N = {}",
                self.extension,
                net.extension()
            )));
        }
        if self.q.len() != net.num_users() {
            return Err(Error::Input(format!(
                "covariance set has {} users, scenario has {}",
                self.q.len(),
                net.num_users()
            )));
        }
        for (u, m) in self.q.iter().enumerate() {
            self.check_one(u, m)?;
        }
        Ok(())
    }

    pub fn extension(&self) -> usize {
        self.extension
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn get(&self, u: usize) -> &Mat {
        &self.q[u]
    }

    pub fn set(&mut self, u: usize, m: Mat) {
        self.q[u] = m;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mat> {
        self.q.iter()
    }

    /// `Σ Tr(Q) / N`.
    pub fn sum_power(&self) -> f64 {
        self.q.iter().map(|m| m.trace()).sum::<f64>() / self.extension as f64
    }

    pub fn scaled_user(&self, u: usize, alpha: f64) -> Self {
        let mut out = self.clone();
        out.q[u] *= alpha;
        out
    }

    /// The same signaling repeated over `factor` consecutive extensions,
    /// `I_factor ⊗ Q`. Rates and sum power per channel use are unchanged.
    pub fn repeated(&self, factor: usize) -> Self {
        Self {
            extension: self.extension * factor,
            q: self.q.iter().map(|m| kron_identity(factor, m)).collect(),
        }
    }
}

/// Per-user rates in bits per channel use, flat user order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector {
    pub rates: Vec<f64>,
}

/// `σ²/2 I + Σ_{v ∈ users} Ḡ Q_v Ḡᵀ` at base station `rx`.
pub(crate) fn received_covariance(
    net: &LiftedNetwork,
    rx: usize,
    users: &[usize],
    q: &CovarianceSet,
) -> Mat {
    let n = net.rx_dim();
    let mut acc = Mat::identity(n, n) * (net.noise_variance() / 2.0);
    for &v in users {
        let g = net.g_bar(rx, v);
        acc += g * q.get(v) * g.transpose();
    }
    acc
}

fn checked(net: &LiftedNetwork, u: usize, q: &CovarianceSet) -> Result<()> {
    if u >= net.num_users() {
        return Err(Error::Input(format!("user index {u} out of range")));
    }
    q.validate_for(net)
}

/// Received signal-plus-interference-plus-noise covariance when user `u`
/// is decoded.
pub fn signal_covariance(net: &LiftedNetwork, u: usize, q: &CovarianceSet) -> Result<Mat> {
    checked(net, u, q)?;
    Ok(received_covariance(net, net.user(u).cell, &net.signal_set(u), q))
}

/// Interference-plus-noise covariance seen by user `u`.
pub fn interference_covariance(net: &LiftedNetwork, u: usize, q: &CovarianceSet) -> Result<Mat> {
    checked(net, u, q)?;
    Ok(received_covariance(net, net.user(u).cell, &net.interference_set(u), q))
}

pub(crate) fn spd_ln_det(m: &Mat, what: &str) -> Result<f64> {
    SpdFactor::new(m)
        .map(|f| f.ln_det())
        .ok_or_else(|| Error::Domain(format!("{what} is not positive definite")))
}

/// Rate of user `u` without the `1/N` normalization, in bits per `N`
/// channel uses.
pub fn achievable_rate_raw(net: &LiftedNetwork, u: usize, q: &CovarianceSet) -> Result<f64> {
    let a = signal_covariance(net, u, q)?;
    let b = interference_covariance(net, u, q)?;
    Ok((spd_ln_det(&a, "signal covariance")? - spd_ln_det(&b, "interference covariance")?) / LN_2)
}

/// Rate of user `u` in bits per channel use.
pub fn achievable_rate(net: &LiftedNetwork, u: usize, q: &CovarianceSet) -> Result<f64> {
    Ok(achievable_rate_raw(net, u, q)? / net.extension() as f64)
}

pub fn achievable_rates(net: &LiftedNetwork, q: &CovarianceSet) -> Result<RateVector> {
    q.validate_for(net)?;
    let rates = (0..net.num_users())
        .map(|u| {
            let rx = net.user(u).cell;
            let a = received_covariance(net, rx, &net.signal_set(u), q);
            let b = received_covariance(net, rx, &net.interference_set(u), q);
            Ok((spd_ln_det(&a, "signal covariance")? - spd_ln_det(&b, "interference covariance")?)
                / (LN_2 * net.extension() as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateVector { rates })
}

/// `J = I_N ⊗ [[0, -1], [1, 0]]`, the real form of multiplication by `i`.
pub fn proper_rotation(extension: usize) -> Mat {
    let mut j = Mat::zeros(2 * extension, 2 * extension);
    for b in 0..extension {
        j[(2 * b, 2 * b + 1)] = -1.0;
        j[(2 * b + 1, 2 * b)] = 1.0;
    }
    j
}

fn rotated(q: &Mat) -> Mat {
    let j = proper_rotation(q.nrows() / 2);
    &j * q * j.transpose()
}

/// `‖Q − J Q Jᵀ‖_F`; zero exactly when `Q` is the real form of a proper
/// complex covariance.
pub fn properness_defect(q: &Mat) -> f64 {
    (q - rotated(q)).norm()
}

/// Orthogonal projection onto the proper (J-commuting) symmetric matrices.
pub fn project_proper(q: &Mat) -> Mat {
    (q + rotated(q)) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelKey, Polar, Scenario};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    pub(crate) fn single_user(mag: f64, phase: f64, n: usize) -> LiftedNetwork {
        let channels = BTreeMap::from([(
            ChannelKey { rx_cell: 0, user: 0, tx_cell: 0 },
            vec![Polar::new(mag, phase)],
        )]);
        LiftedNetwork::new(&Scenario::new(vec![1], 1, 1.0, channels).unwrap(), n).unwrap()
    }

    fn two_user_cell() -> LiftedNetwork {
        let channels = BTreeMap::from([
            (ChannelKey { rx_cell: 0, user: 0, tx_cell: 0 }, vec![Polar::new(1.0, 0.3)]),
            (ChannelKey { rx_cell: 0, user: 1, tx_cell: 0 }, vec![Polar::new(2.0, -1.0)]),
        ]);
        LiftedNetwork::new(&Scenario::new(vec![2], 1, 1.0, channels).unwrap(), 1).unwrap()
    }

    #[test]
    fn noise_only_covariances() {
        let net = LiftedNetwork::new(&crate::channel::builtin_scenarios()["mi"], 2).unwrap();
        let q = CovarianceSet::zeros(&net);
        for u in 0..4 {
            let a = signal_covariance(&net, u, &q).unwrap();
            assert_abs_diff_eq!(a, Mat::identity(8, 8) * 0.5, epsilon = 1e-15);
            let b = interference_covariance(&net, u, &q).unwrap();
            assert_abs_diff_eq!(b, Mat::identity(8, 8) * 0.5, epsilon = 1e-15);
            assert_eq!(achievable_rate(&net, u, &q).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_user_proper_and_rank_one() {
        let p = 0.7;
        let net = single_user(1.0, 0.4, 1);
        let q = CovarianceSet::new(1, vec![Mat::identity(2, 2) * (p / 2.0)]).unwrap();
        let a = signal_covariance(&net, 0, &q).unwrap();
        assert_abs_diff_eq!(a, Mat::identity(2, 2) * ((1.0 + p) / 2.0), epsilon = 1e-14);
        let b = interference_covariance(&net, 0, &q).unwrap();
        assert_abs_diff_eq!(b, Mat::identity(2, 2) * 0.5, epsilon = 1e-14);
        let r = achievable_rate(&net, 0, &q).unwrap();
        assert!((r - 2.0 * (1.0 + p).log2()).abs() < 1e-12);

        let mut e1 = Mat::zeros(2, 2);
        e1[(0, 0)] = p;
        let q = CovarianceSet::new(1, vec![e1]).unwrap();
        let r = achievable_rate(&net, 0, &q).unwrap();
        assert!((r - (1.0 + 2.0 * p).log2()).abs() < 1e-12);
    }

    #[test]
    fn intra_cell_interference_follows_decoding_order() {
        let net = two_user_cell();
        let q = CovarianceSet::new(1, vec![Mat::identity(2, 2) * 0.2, Mat::identity(2, 2) * 0.3]).unwrap();
        // user 0 sees user 1 as interference: |h|^2 * 0.3 = 1.2.
        let b0 = interference_covariance(&net, 0, &q).unwrap();
        assert_abs_diff_eq!(b0, Mat::identity(2, 2) * 1.7, epsilon = 1e-13);
        // user 1 is decoded last and sees only noise.
        let b1 = interference_covariance(&net, 1, &q).unwrap();
        assert_abs_diff_eq!(b1, Mat::identity(2, 2) * 0.5, epsilon = 1e-13);
        let a1 = signal_covariance(&net, 1, &q).unwrap();
        assert_abs_diff_eq!(a1, Mat::identity(2, 2) * 1.7, epsilon = 1e-13);
    }

    #[test]
    fn invalid_covariances_rejected() {
        let net = single_user(1.0, 0.0, 1);
        let bad = CovarianceSet::new_unchecked(1, vec![Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1])]);
        assert!(matches!(achievable_rate(&net, 0, &bad), Err(Error::Domain(_))));
        let wrong = CovarianceSet::new_unchecked(2, vec![Mat::zeros(4, 4)]);
        assert!(matches!(signal_covariance(&net, 0, &wrong), Err(Error::Input(_))));
        assert!(CovarianceSet::new(1, vec![Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])]).is_err());
    }

    #[test]
    fn properness_examples() {
        let p = 1.3;
        assert!(properness_defect(&(Mat::identity(2, 2) * (p / 2.0))) < 1e-15);
        let d = Mat::from_row_slice(2, 2, &[p, 0.0, 0.0, 0.0]);
        assert!((properness_defect(&d) - p * 2.0_f64.sqrt()).abs() < 1e-14);
        assert_abs_diff_eq!(project_proper(&d), Mat::identity(2, 2) * (p / 2.0), epsilon = 1e-15);
        let proper = Mat::identity(2, 2) * 0.4;
        assert_eq!(project_proper(&proper), proper);
    }
}
