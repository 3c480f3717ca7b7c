//! Nonlinear least-squares fit of the empirical low-pass band function
//! a/(1+(f/f₀)^s) to PIE-versus-drift-rate data.
//!
//! Small fixed-size Levenberg-Marquardt iteration with f₀ and s stepped in
//! log space so positivity is structural and the convergence test is a
//! relative parameter step. Points are equally weighted.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fitted parameters of a/(1+(f/f₀)^s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowPassFit {
    /// Plateau in bits per photon.
    pub a: f64,
    /// Cutoff frequency in Hz.
    pub f0: f64,
    /// Rolloff exponent (dimensionless).
    pub s: f64,
}

impl LowPassFit {
    pub fn eval(&self, f: f64) -> f64 {
        self.a / (1.0 + (f / self.f0).powf(self.s))
    }
}

const MAX_ITERATIONS: usize = 500;
const STEP_TOLERANCE: f64 = 1e-8;

fn residual_sum_sq(points: &[(f64, f64)], theta: &[f64; 3]) -> f64 {
    let fit = LowPassFit {
        a: theta[0],
        f0: theta[1].exp(),
        s: theta[2].exp(),
    };
    points
        .iter()
        .map(|&(f, y)| {
            let r = y - fit.eval(f);
            r * r
        })
        .sum()
}

/// Solve the damped 3×3 normal equations by Cramer's rule. Returns None when
/// the system is numerically singular.
fn solve3(m: &[[f64; 3]; 3], v: &[f64; 3]) -> Option<[f64; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .powi(3);
    if det.abs() < 1e-14 * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let mut out = [0.0; 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut mm = *m;
        for r in 0..3 {
            mm[r][c] = v[r];
        }
        let d = mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
            - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
            + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]);
        *slot = d / det;
    }
    Some(out)
}

/// Fit a/(1+(f/f₀)^s) to (drift rate, PIE) points.
///
/// Initialization: a = max PIE, f₀ = geometric median of the frequency grid,
/// s = 1.5. Converges when the relative parameter step drops below 1e-8;
/// reports fit-failed with the residual if 500 iterations pass without
/// convergence or the normal equations degenerate.
pub fn lowpass_fit(points: &[(f64, f64)]) -> Result<LowPassFit> {
    if points.len() < 4 {
        return Err(Error::invalid_argument(format!(
            "need at least 4 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|&(f, y)| f <= 0.0 || !f.is_finite() || !y.is_finite()) {
        return Err(Error::invalid_argument(
            "frequencies must be positive and values finite".to_string(),
        ));
    }
    let fmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let fmax = points.iter().map(|p| p.0).fold(0.0f64, f64::max);
    if fmax / fmin < 100.0 {
        return Err(Error::invalid_argument(
            "frequency grid must span at least two decades".to_string(),
        ));
    }

    let a0 = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    if !(a0 > 0.0) {
        return Err(Error::FitFailed(
            "all PIE values are non-positive".to_string(),
        ));
    }
    let mut logs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let f0_init = logs[logs.len() / 2];

    // theta = (a, ln f0, ln s)
    let mut theta = [a0, f0_init, 1.5f64.ln()];
    let mut rss = residual_sum_sq(points, &theta);
    let mut lambda = 1e-3;

    for _ in 0..MAX_ITERATIONS {
        let a = theta[0];
        let f0 = theta[1].exp();
        let s = theta[2].exp();

        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for &(f, y) in points {
            let ratio = (f / f0).powf(s);
            let denom = 1.0 + ratio;
            let model = a / denom;
            let r = y - model;
            let jac = [
                1.0 / denom,                                // ∂m/∂a
                a * s * ratio / (denom * denom),            // ∂m/∂ln f0
                -a * ratio * s * (f / f0).ln() / (denom * denom), // ∂m/∂ln s
            ];
            for i in 0..3 {
                jtr[i] += jac[i] * r;
                for j in 0..3 {
                    jtj[i][j] += jac[i] * jac[j];
                }
            }
        }

        let mut stepped = false;
        for _ in 0..24 {
            let mut damped = jtj;
            for i in 0..3 {
                damped[i][i] += lambda * jtj[i][i].max(1e-30);
            }
            let Some(delta) = solve3(&damped, &jtr) else {
                return Err(Error::FitFailed(format!(
                    "degenerate normal equations (residual {rss:.3e})"
                )));
            };
            let candidate = [theta[0] + delta[0], theta[1] + delta[1], theta[2] + delta[2]];
            let candidate_rss = residual_sum_sq(points, &candidate);
            if candidate_rss.is_finite() && candidate_rss <= rss {
                let rel_step = (delta[0].abs() / (theta[0].abs() + 1e-12))
                    .max(delta[1].abs())
                    .max(delta[2].abs());
                theta = candidate;
                rss = candidate_rss;
                lambda = (lambda / 10.0).max(1e-12);
                stepped = true;
                if rel_step < STEP_TOLERANCE {
                    return Ok(LowPassFit {
                        a: theta[0],
                        f0: theta[1].exp(),
                        s: theta[2].exp(),
                    });
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
        if !stepped {
            // Damping exhausted: either we are at a minimum (zero gradient)
            // or the surface is flat in some direction.
            let grad_norm = jtr.iter().map(|g| g * g).sum::<f64>().sqrt();
            if grad_norm < 1e-12 * (1.0 + rss) {
                return Ok(LowPassFit {
                    a: theta[0],
                    f0: theta[1].exp(),
                    s: theta[2].exp(),
                });
            }
            return Err(Error::FitFailed(format!(
                "no descent step found (residual {rss:.3e})"
            )));
        }
    }
    Err(Error::FitFailed(format!(
        "no convergence after {MAX_ITERATIONS} iterations (residual {rss:.3e})"
    )))
}
