//! Test-side oracles built from plain 2×2 arithmetic, independent of the
//! crate's linear algebra.

#![allow(dead_code)]

use std::f64::consts::{LN_2, PI};

pub type M2 = [[f64; 2]; 2];

pub fn add(a: M2, b: M2) -> M2 {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

pub fn scale(a: M2, s: f64) -> M2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

pub fn mul(a: M2, b: M2) -> M2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn transpose(a: M2) -> M2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

pub fn det(a: M2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn trace(a: M2) -> f64 {
    a[0][0] + a[1][1]
}

pub fn inv(a: M2) -> M2 {
    let d = det(a);
    [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]]
}

pub fn ident(s: f64) -> M2 {
    [[s, 0.0], [0.0, s]]
}

/// `|h| R(∠h)`: multiplication by a complex scalar on (Re, Im).
pub fn lift(mag: f64, phase: f64) -> M2 {
    let (s, c) = phase.sin_cos();
    [[mag * c, -mag * s], [mag * s, mag * c]]
}

/// Unit-trace real 2×2 covariance with eccentricity `r ∈ [0, 1]` and
/// orientation `θ`; every unit-trace PSD matrix has this form.
pub fn shape(r: f64, theta: f64) -> M2 {
    let (s, c) = theta.sin_cos();
    [[0.5 * (1.0 + r * c), 0.5 * r * s], [0.5 * r * s, 0.5 * (1.0 - r * c)]]
}

/// Two cells with one single-antenna user each and single-antenna receivers.
/// `g[rx][tx]` is the lifted channel from the user of cell `tx` to receiver `rx`.
#[derive(Clone, Copy)]
pub struct TwoLink {
    pub g: [[M2; 2]; 2],
    /// `σ²/2`.
    pub noise: f64,
}

/// How the rate of a user is evaluated when solving for its power.
#[derive(Clone, Copy)]
pub enum RateModel {
    /// `log2|A| − log2|B|`.
    Exact,
    /// `(ln|A| − Tr(Γ⁻¹B) − ln|Γ| + 2)/ln 2` with `Γ = γ I`.
    Bound { gamma: f64 },
}

impl TwoLink {
    fn image(&self, rx: usize, tx: usize, s: M2) -> M2 {
        let g = self.g[rx][tx];
        mul(mul(g, s), transpose(g))
    }

    /// Smallest own power `p` meeting `demand` given the other user's
    /// covariance, from the 2×2 determinant quadratic.
    fn own_power(&self, u: usize, own: M2, other: M2, demand: f64, model: RateModel) -> f64 {
        let o = 1 - u;
        let b = add(ident(self.noise), self.image(u, o, other));
        let log_target = match model {
            RateModel::Exact => demand * LN_2 + det(b).ln(),
            RateModel::Bound { gamma } => demand * LN_2 + trace(b) / gamma + 2.0 * gamma.ln() - 2.0,
        };
        let m = mul(inv(b), self.image(u, u, own));
        let c0 = 1.0 - log_target.exp() / det(b);
        if c0 >= 0.0 {
            return 0.0;
        }
        let (a2, a1) = (det(m), trace(m));
        if a2.abs() < 1e-14 * a1 * a1 {
            -c0 / a1
        } else {
            (-a1 + (a1 * a1 - 4.0 * a2 * c0).sqrt()) / (2.0 * a2)
        }
    }

    /// Minimal powers for fixed unit-trace shapes by the monotone fixed point
    /// `p_u ← f_u(p_other)`; `None` when it exceeds `budget`.
    pub fn powers(&self, shapes: [M2; 2], demand: f64, model: RateModel, budget: f64) -> Option<[f64; 2]> {
        let mut p = [0.0, 0.0];
        for _ in 0..2000 {
            let next = [
                self.own_power(0, shapes[0], scale(shapes[1], p[1]), demand, model),
                self.own_power(1, shapes[1], scale(shapes[0], p[0]), demand, model),
            ];
            if !(next[0].is_finite() && next[1].is_finite()) || next[0] > budget || next[1] > budget {
                return None;
            }
            let change = (next[0] - p[0]).abs() + (next[1] - p[1]).abs();
            p = next;
            if change <= 1e-13 * (p[0] + p[1]) {
                return Some(p);
            }
        }
        Some(p)
    }

    /// Grid over `(r, θ)` for both users followed by pattern-search
    /// refinement; returns the smallest sum power found and its parameters.
    pub fn grid_minimum(&self, demand: f64, model: RateModel, budget: f64, r_steps: usize, theta_steps: usize) -> (f64, [f64; 4]) {
        let sum_power = |v: [f64; 4]| {
            let r0 = v[0].clamp(0.0, 1.0);
            let r1 = v[2].clamp(0.0, 1.0);
            self.powers([shape(r0, v[1]), shape(r1, v[3])], demand, model, budget)
                .map(|p| p[0] + p[1])
                .unwrap_or(f64::INFINITY)
        };
        let rs: Vec<f64> = (0..=r_steps).map(|i| i as f64 / r_steps as f64).collect();
        let ts: Vec<f64> = (0..theta_steps).map(|i| 2.0 * PI * i as f64 / theta_steps as f64).collect();
        let mut best = (f64::INFINITY, [0.0; 4]);
        for &r0 in &rs {
            for &t0 in &ts {
                for &r1 in &rs {
                    for &t1 in &ts {
                        let v = [r0, t0, r1, t1];
                        let s = sum_power(v);
                        if s < best.0 {
                            best = (s, v);
                        }
                    }
                }
                if r0 == 0.0 {
                    break;
                }
            }
        }
        let mut step = [1.0 / r_steps as f64, 2.0 * PI / theta_steps as f64];
        while step[0] > 1e-7 {
            let mut improved = false;
            for k in 0..4 {
                for sign in [-1.0, 1.0] {
                    let mut v = best.1;
                    v[k] += sign * step[k % 2];
                    let s = sum_power(v);
                    if s < best.0 {
                        best = (s, v);
                        improved = true;
                    }
                }
            }
            if !improved {
                step = [step[0] * 0.5, step[1] * 0.5];
            }
        }
        (best.0, best.1)
    }
}
