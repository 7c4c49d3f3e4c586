//! Conjugate-function upper bound on `log2|B|` and the concave rate lower
//! bound obtained from it.
//!
//! For symmetric positive-definite `B` and `Γ` of side `n`,
//!
//! ```text
//! log2|B| ≤ log2|Γ| + (Tr(Γ⁻¹B) − n) / ln 2
//! ```
//!
//! with equality iff `Γ = B`. Replacing the subtracted term of the rate by
//! this bound gives a lower bound that is concave in the covariances.

use std::f64::consts::LN_2;

use crate::channel::LiftedNetwork;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetry_defect, Mat, SpdFactor};
use crate::rates::{received_covariance, spd_ln_det, CovarianceSet, SYMMETRY_TOL};

/// One symmetric positive-definite `2MN x 2MN` matrix per user.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSet {
    gamma: Vec<Mat>,
}

impl GammaSet {
    pub fn new(gamma: Vec<Mat>) -> Result<Self> {
        for (u, g) in gamma.iter().enumerate() {
            let asym = symmetry_defect(g);
            if asym > SYMMETRY_TOL {
                return Err(Error::Domain(format!("Γ of user {u} is not symmetric ({asym:e})")));
            }
            if SpdFactor::new(g).is_none() || min_eigenvalue(g) <= 0.0 {
                return Err(Error::Domain(format!("Γ of user {u} is not positive definite")));
            }
        }
        Ok(Self { gamma })
    }

    pub fn get(&self, u: usize) -> &Mat {
        &self.gamma[u]
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mat> {
        self.gamma.iter()
    }
}

/// `log2|Γ| + (Tr(Γ⁻¹B) − n) / ln 2`.
pub fn fenchel_upper(b: &Mat, gamma: &Mat) -> Result<f64> {
    if b.shape() != gamma.shape() || b.nrows() != b.ncols() {
        return Err(Error::Input(format!(
            "shape mismatch: B is {:?}, Γ is {:?}",
            b.shape(),
            gamma.shape()
        )));
    }
    let f = SpdFactor::new(gamma).ok_or_else(|| Error::Domain("Γ is singular or indefinite".into()))?;
    let n = b.nrows() as f64;
    Ok(f.ln_det() / LN_2 + (f.solve(b).trace() - n) / LN_2)
}

/// Concave lower bound on the rate of user `u` (bits per channel use) for a
/// fixed `Γ_u`.
pub fn rate_lower_bound(net: &LiftedNetwork, u: usize, q: &CovarianceSet, gamma: &Mat) -> Result<f64> {
    q.validate_for(net)?;
    if u >= net.num_users() {
        return Err(Error::Input(format!("user index {u} out of range")));
    }
    let n = net.rx_dim();
    if gamma.shape() != (n, n) {
        return Err(Error::Input(format!("Γ has shape {:?}, expected {n}x{n}", gamma.shape())));
    }
    let rx = net.user(u).cell;
    let a = received_covariance(net, rx, &net.signal_set(u), q);
    let b = received_covariance(net, rx, &net.interference_set(u), q);
    let log_a = spd_ln_det(&a, "signal covariance")? / LN_2;
    Ok((log_a - fenchel_upper(&b, gamma)?) / net.extension() as f64)
}

/// `Γ_u = B_u(Q)` for every user, which makes the lower bound tight at `Q`.
pub fn gamma_from_covariances(net: &LiftedNetwork, q: &CovarianceSet) -> Result<GammaSet> {
    q.validate_for(net)?;
    let gamma = (0..net.num_users())
        .map(|u| received_covariance(net, net.user(u).cell, &net.interference_set(u), q))
        .collect();
    GammaSet::new(gamma)
}
