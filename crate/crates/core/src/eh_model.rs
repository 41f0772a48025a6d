//! Circuit-based non-linear energy-harvesting law and its surrogates.
//!
//! The instantaneous harvested power for received power `x` is
//!
//! ```text
//! phi~(x) = lambda * (W0(mu e^mu I0(nu sqrt(2x))) / mu - 1)^2
//! phi(x)  = min(phi~(x), phi~(A_s^2))
//! ```
//!
//! Writing `u = W0(..)/mu - 1`, the defining equation of `W0` becomes
//! `ln(1 + u) + mu u = ln I0(t)`, which is what the evaluation below solves.
//! Small inputs use Newton on that equation directly (no cancellation in
//! `W/mu - 1`), large inputs go through [`lambert_w0_of_exp`] and get one
//! polishing step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{bessel_i1_over_t_i0, lambert_w0_of_exp, log_bessel_i0, LogDomainValue};

/// Constants of the rectifier model: `lambda` [W], `mu` [-], `nu` [1/sqrt(W)]
/// and the saturation input power `a_s_sq` [W].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EhCircuitParams {
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub a_s_sq: f64,
}

impl Default for EhCircuitParams {
    fn default() -> Self {
        EhCircuitParams { lambda: 2.5e-7, mu: 1.85, nu: 2.2e3, a_s_sq: 2e-4 }
    }
}

impl EhCircuitParams {
    pub fn new(lambda: f64, mu: f64, nu: f64, a_s_sq: f64) -> Result<Self> {
        let p = EhCircuitParams { lambda, mu, nu, a_s_sq };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("nu", self.nu), ("a_s_sq", self.a_s_sq)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("EH parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Harvested power at the onset of saturation, `phi(A_s^2)`.
    pub fn saturation_power(&self) -> f64 {
        self.lambda * self.u_of(self.a_s_sq).powi(2)
    }

    fn argument(&self, x: f64) -> f64 {
        self.nu * (2.0 * x).sqrt()
    }

    /// `u = W0(mu e^mu I0(t)) / mu - 1` for `x >= 0`, unclamped.
    fn u_of(&self, x: f64) -> f64 {
        let log_i0 = log_bessel_i0(self.argument(x)).expect("argument is non-negative").ln();
        self.u_from_log_i0(log_i0)
    }

    fn u_from_log_i0(&self, log_i0: f64) -> f64 {
        let mu = self.mu;
        if log_i0 <= 0.0 {
            return 0.0;
        }
        let residual = |u: f64| u.ln_1p() + mu * u - log_i0;
        let slope = |u: f64| 1.0 / (1.0 + u) + mu;
        if log_i0 < 1.0 {
            // Concave increasing residual, starting left of the root: monotone Newton.
            let mut u = log_i0 / (1.0 + mu);
            for _ in 0..50 {
                let step = residual(u) / slope(u);
                u -= step;
                if step.abs() <= 2.0 * f64::EPSILON * u {
                    break;
                }
            }
            u
        } else {
            let w = lambert_w0_of_exp(LogDomainValue::from_ln(mu.ln() + mu + log_i0));
            let u = w / mu - 1.0;
            u - residual(u) / slope(u)
        }
    }
}

/// Harvested power `phi(x)` for received power `x` [W].
pub fn phi(x: f64, p: &EhCircuitParams) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::domain("phi", x));
    }
    let x = x.min(p.a_s_sq);
    Ok(p.lambda * p.u_of(x).powi(2))
}

/// Derivative of the unsaturated law, defined on `0 < x < A_s^2`.
pub fn phi_prime(x: f64, p: &EhCircuitParams) -> Result<f64> {
    if !(x > 0.0 && x < p.a_s_sq) {
        return Err(Error::domain("phi_prime", x));
    }
    Ok(slope_unchecked(x, p))
}

fn slope_unchecked(x: f64, p: &EhCircuitParams) -> f64 {
    let t = p.argument(x);
    let u = p.u_of(x);
    // du/dL with L = ln I0(t); dL/dx = (I1/I0)(t) * nu / sqrt(2x) = (I1 / (t I0)) * nu^2.
    let du_dl = (1.0 + u) / (1.0 + p.mu * (1.0 + u));
    let dl_dx = bessel_i1_over_t_i0(t) * p.nu * p.nu;
    2.0 * p.lambda * u * du_dl * dl_dx
}

/// Tangent line `x -> slope * x + intercept` of `phi` at `x0`, the point
/// being clamped into `[0, A_s^2)`.
///
/// By convexity the line minorizes `phi` on `[0, A_s^2]`. At `x0 <= 0` it is
/// the exact limit `(0, 0)`.
pub fn phi_tangent(x0: f64, p: &EhCircuitParams) -> (f64, f64) {
    if x0 <= 0.0 {
        return (0.0, 0.0);
    }
    let x0 = x0.min(p.a_s_sq * (1.0 - 1e-12));
    let slope = slope_unchecked(x0, p);
    (slope, p.lambda * p.u_of(x0).powi(2) - slope * x0)
}

/// Received power `x` in `[0, A_s^2]` with `phi(x) = rho`, by bisection.
pub fn phi_inverse(rho: f64, p: &EhCircuitParams) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::domain("phi_inverse", rho));
    }
    let ceiling = p.saturation_power();
    if rho > ceiling * (1.0 + 1e-14) {
        return Err(Error::Range { demand: rho, ceiling });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    if rho >= ceiling {
        return Ok(p.a_s_sq);
    }
    let (mut lo, mut hi) = (0.0, p.a_s_sq);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if phi(mid, p)? < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Normalized logistic surrogate `psi(x) = M (1/(1+e^{-a(x-b)}) - Omega) / (1 - Omega)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidEhParams {
    pub m_sat: f64,
    pub a: f64,
    pub b: f64,
}

impl SigmoidEhParams {
    pub fn new(m_sat: f64, a: f64, b: f64) -> Result<Self> {
        if !(m_sat > 0.0 && a > 0.0 && b > 0.0) {
            return Err(Error::InvalidConfig(format!("sigmoid parameters must be positive: M={m_sat}, a={a}, b={b}")));
        }
        Ok(SigmoidEhParams { m_sat, a, b })
    }

    fn omega(&self) -> f64 {
        1.0 / (1.0 + (self.a * self.b).exp())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let omega = self.omega();
        let logistic = 1.0 / (1.0 + (-self.a * (x - self.b)).exp());
        self.m_sat * (logistic - omega) / (1.0 - omega)
    }
}

/// Constant-efficiency surrogate `eta * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEhParams {
    pub eta: f64,
}

impl LinearEhParams {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidConfig(format!("linear efficiency must lie in (0, 1], got {eta}")));
        }
        Ok(LinearEhParams { eta })
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eta * x
    }
}

/// Closed-form inverse of the logistic surrogate.
pub fn sigmoid_inverse(rho: f64, s: &SigmoidEhParams) -> Result<f64> {
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::domain("sigmoid_inverse", rho));
    }
    if rho >= s.m_sat {
        return Err(Error::Range { demand: rho, ceiling: s.m_sat });
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let omega = s.omega();
    let v = omega + rho * (1.0 - omega) / s.m_sat;
    // ln(1/v - 1) = ln((1 - v) / v)
    let x = s.b - ((1.0 - v) / v).ln() / s.a;
    Ok(x.max(0.0))
}

/// Result of fitting both surrogates against the circuit law on `[0, A_s^2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurrogateFit {
    pub sigmoid: SigmoidEhParams,
    pub linear: LinearEhParams,
    pub sigmoid_rms: f64,
    pub linear_rms: f64,
}

pub const DEFAULT_FIT_GRID: usize = 256;

/// Least-squares fits of the logistic and linear surrogates on a uniform grid.
///
/// The logistic ceiling is pinned to `phi(A_s^2)`; slope and inflection are
/// fitted in normalized coordinates by a coarse scan followed by
/// Levenberg-Marquardt.
pub fn fit_surrogates(p: &EhCircuitParams, grid_size: usize) -> Result<SurrogateFit> {
    if grid_size < 16 {
        return Err(Error::InvalidConfig(format!("surrogate grid needs at least 16 points, got {grid_size}")));
    }
    p.validate()?;
    let a_s = p.a_s_sq;
    let m_sat = p.saturation_power();
    let xs: Vec<f64> = (0..grid_size).map(|i| a_s * i as f64 / (grid_size - 1) as f64).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| phi(x, p)).collect::<Result<_>>()?;
    let rms = |f: &dyn Fn(f64) -> f64| -> f64 {
        let sse: f64 = xs.iter().zip(&ys).map(|(&x, &y)| (f(x) - y).powi(2)).sum();
        (sse / xs.len() as f64).sqrt()
    };

    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let eta = (sxy / sxx).clamp(f64::MIN_POSITIVE, 1.0);
    let linear = LinearEhParams::new(eta)?;

    // Normalized coordinates: s = x / A_s^2, targets y / M. Parameters are
    // theta = (ln a', ln b') with a' = a A_s^2, b' = b / A_s^2.
    let s: Vec<f64> = xs.iter().map(|x| x / a_s).collect();
    let t: Vec<f64> = ys.iter().map(|y| y / m_sat).collect();
    let model = |theta: [f64; 2], si: f64| -> f64 {
        let (a, b) = (theta[0].exp(), theta[1].exp());
        let omega = 1.0 / (1.0 + (a * b).exp());
        (1.0 / (1.0 + (-a * (si - b)).exp()) - omega) / (1.0 - omega)
    };
    let sse = |theta: [f64; 2]| -> f64 { s.iter().zip(&t).map(|(&si, &ti)| (model(theta, si) - ti).powi(2)).sum() };

    let mut best = [0.0, 0.0];
    let mut best_sse = f64::INFINITY;
    for i in 0..60 {
        let la = (1e-3f64).ln() + i as f64 * ((200.0f64).ln() - (1e-3f64).ln()) / 59.0;
        for j in 0..60 {
            let lb = (0.01f64).ln() + j as f64 * ((20.0f64).ln() - (0.01f64).ln()) / 59.0;
            let e = sse([la, lb]);
            if e < best_sse {
                best_sse = e;
                best = [la, lb];
            }
        }
    }

    let mut theta = best;
    let mut damping = 1e-3;
    for _ in 0..200 {
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (&si, &ti) in s.iter().zip(&t) {
            let r = model(theta, si) - ti;
            let mut g = [0.0; 2];
            for (d, gd) in g.iter_mut().enumerate() {
                let h = 1e-6;
                let mut tp = theta;
                let mut tm = theta;
                tp[d] += h;
                tm[d] -= h;
                *gd = (model(tp, si) - model(tm, si)) / (2.0 * h);
            }
            for r_i in 0..2 {
                jtr[r_i] += g[r_i] * r;
                for c in 0..2 {
                    jtj[r_i][c] += g[r_i] * g[c];
                }
            }
        }
        let a00 = jtj[0][0] * (1.0 + damping);
        let a11 = jtj[1][1] * (1.0 + damping);
        let a01 = jtj[0][1];
        let det = a00 * a11 - a01 * a01;
        if det.abs() < 1e-300 {
            break;
        }
        let step = [-(a11 * jtr[0] - a01 * jtr[1]) / det, -(a00 * jtr[1] - a01 * jtr[0]) / det];
        let trial = [theta[0] + step[0], theta[1] + step[1]];
        let trial_sse = sse(trial);
        if trial_sse < best_sse {
            theta = trial;
            let improvement = best_sse - trial_sse;
            best_sse = trial_sse;
            damping = (damping * 0.3).max(1e-12);
            if improvement <= 1e-15 * best_sse.max(1e-300) && step[0].abs().max(step[1].abs()) < 1e-10 {
                break;
            }
        } else {
            damping *= 10.0;
            if damping > 1e12 {
                break;
            }
        }
    }

    let sigmoid = SigmoidEhParams::new(m_sat, theta[0].exp() / a_s, theta[1].exp() * a_s)?;
    Ok(SurrogateFit {
        sigmoid,
        linear,
        sigmoid_rms: rms(&|x| sigmoid.eval(x)),
        linear_rms: rms(&|x| linear.eval(x)),
    })
}
