//! Per-user harvested-power demand curves, feasibility and trivial-regime
//! detection, and the search interval for the downlink fraction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::{ChannelRealization, SystemConfig};

/// Open-interval bounds used when bracketing roots of the demand curve.
pub const TAU_EPS: f64 = 1e-15;
const MAX_BISECTIONS: usize = 400;

/// Demand data of a single user: rate target, effective noise after ZF,
/// and stored energy per frame length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserDemand {
    pub rate: f64,
    pub eff_noise: f64,
    pub q_over_t: f64,
}

impl UserDemand {
    pub fn new(cfg: &SystemConfig, user: usize, eff_noise: f64) -> Self {
        UserDemand { rate: cfg.r_req[user], eff_noise, q_over_t: cfg.q_init_j[user] / cfg.t_frame_s }
    }

    /// Minimum average harvested power `f(tau)` the user needs.
    pub fn f(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::domain("demand_f", tau));
        }
        Ok(self.g(tau) / tau)
    }

    /// `tau f(tau) = (1 - tau)(2^{R/(1-tau)} - 1) sigma~^2 - q/T`.
    fn g(&self, tau: f64) -> f64 {
        let gamma = self.rate / (1.0 - tau);
        (1.0 - tau) * (gamma * std::f64::consts::LN_2).exp_m1() * self.eff_noise - self.q_over_t
    }

    /// Numerator of `f'(tau) = N(tau) / tau^2`; increasing in `tau`.
    pub fn derivative_numerator(&self, tau: f64) -> f64 {
        let gamma = self.rate / (1.0 - tau);
        let p = gamma.exp2();
        self.eff_noise * (p * (tau * std::f64::consts::LN_2 * gamma - 1.0) + 1.0) + self.q_over_t
    }

    pub fn derivative(&self, tau: f64) -> Result<f64> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::domain("demand_f derivative", tau));
        }
        Ok(self.derivative_numerator(tau) / (tau * tau))
    }

    /// Uplink power needed at the full-frame rate, `(2^R - 1) sigma~^2`.
    pub fn base_power(&self) -> f64 {
        (2f64.powf(self.rate) - 1.0) * self.eff_noise
    }

    /// Stored energy alone covers the uplink: `f` is increasing on (0,1)
    /// and the user imposes no lower bound on `tau`.
    pub fn is_self_sufficient(&self) -> bool {
        self.rate == 0.0 || self.base_power() < self.q_over_t
    }

    /// The two sides of the stationarity condition
    /// `2^{R/(1-tau)} ln2 R sigma~^2 = f(tau) + q/T`.
    pub fn stationarity_sides(&self, tau: f64) -> Result<(f64, f64)> {
        let lhs = (self.rate / (1.0 - tau)).exp2() * std::f64::consts::LN_2 * self.rate * self.eff_noise;
        Ok((lhs, self.f(tau)? + self.q_over_t))
    }
}

/// `f_k(tau)` for user `k` with effective noise `eff_noise`.
pub fn demand_f(tau_bar: f64, user: usize, cfg: &SystemConfig, eff_noise: f64) -> Result<f64> {
    UserDemand::new(cfg, user, eff_noise).f(tau_bar)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TauInterval {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Lower roots of `f_k = phi(A_s^2)`; zero for self-sufficient users.
    pub tau_min_k: [f64; 2],
    /// Minimizers of `f_k`; zero for self-sufficient users.
    pub tau_max_k: [f64; 2],
    /// Upper roots of `f_k = phi(A_s^2)`.
    pub tau_hi_k: [f64; 2],
}

impl TauInterval {
    /// Largest `tau` at which both demands are still within the ceiling.
    pub fn feasible_hi(&self) -> f64 {
        self.tau_hi_k[0].min(self.tau_hi_k[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeasibilityStatus {
    Infeasible,
    TrivialSolution,
    NonTrivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityVerdict {
    pub status: FeasibilityStatus,
    pub interval: Option<TauInterval>,
    pub trivial_powers: Option<[f64; 2]>,
}

/// Bisection to full precision; returns the final `(lo, hi)` bracket with
/// `below(lo)` and `!below(hi)`.
fn bisect(mut lo: f64, mut hi: f64, mut below: impl FnMut(f64) -> bool) -> (f64, f64) {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

struct UserRoots {
    lo: f64,
    argmin: f64,
    hi: f64,
}

/// Sublevel set `{tau : f(tau) <= ceiling}` of one user, or `None` if empty.
fn user_roots(d: &UserDemand, ceiling: f64) -> Option<UserRoots> {
    let (a, b) = (TAU_EPS, 1.0 - TAU_EPS);
    let f = |t: f64| d.g(t) / t;
    if d.rate == 0.0 {
        // f = -q/(T tau) <= 0 everywhere.
        return Some(UserRoots { lo: 0.0, argmin: 0.0, hi: 1.0 });
    }
    let argmin = if d.is_self_sufficient() || d.derivative_numerator(a) >= 0.0 {
        0.0
    } else {
        let (l, h) = bisect(a, b, |t| d.derivative_numerator(t) < 0.0);
        0.5 * (l + h)
    };
    let at_min = if argmin == 0.0 { f(a) } else { f(argmin) };
    if !(at_min <= ceiling) {
        return None;
    }
    let lo = if argmin == 0.0 { 0.0 } else { bisect(a, argmin, |t| f(t) > ceiling).1 };
    let start = if argmin == 0.0 { a } else { argmin };
    let hi = if f(b) <= ceiling { 1.0 } else { bisect(start, b, |t| f(t) <= ceiling).0 };
    Some(UserRoots { lo, argmin, hi })
}

fn demands(cfg: &SystemConfig, eff_noise: [f64; 2]) -> [UserDemand; 2] {
    [0, 1].map(|k| UserDemand::new(cfg, k, eff_noise[k]))
}

/// Classify a configuration given per-user effective noise powers.
pub fn check_feasibility_with_noise(cfg: &SystemConfig, eff_noise: [f64; 2]) -> FeasibilityVerdict {
    let ds = demands(cfg, eff_noise);
    if ds.iter().all(UserDemand::is_self_sufficient) {
        return FeasibilityVerdict {
            status: FeasibilityStatus::TrivialSolution,
            interval: None,
            trivial_powers: Some(ds.map(|d| d.base_power())),
        };
    }
    match interval_for(&ds, cfg.eh.saturation_power()) {
        Some(iv) => FeasibilityVerdict { status: FeasibilityStatus::NonTrivial, interval: Some(iv), trivial_powers: None },
        None => FeasibilityVerdict { status: FeasibilityStatus::Infeasible, interval: None, trivial_powers: None },
    }
}

fn interval_for(ds: &[UserDemand; 2], ceiling: f64) -> Option<TauInterval> {
    let r0 = user_roots(&ds[0], ceiling)?;
    let r1 = user_roots(&ds[1], ceiling)?;
    if r0.lo.max(r1.lo) > r0.hi.min(r1.hi) {
        return None;
    }
    let tau_min_k = [r0.lo, r1.lo];
    let tau_max_k = [r0.argmin, r1.argmin];
    Some(TauInterval {
        tau_min: tau_min_k[0].max(tau_min_k[1]),
        tau_max: tau_max_k[0].max(tau_max_k[1]),
        tau_min_k,
        tau_max_k,
        tau_hi_k: [r0.hi, r1.hi],
    })
}

pub fn check_feasibility(cfg: &SystemConfig, ch: &ChannelRealization) -> FeasibilityVerdict {
    check_feasibility_with_noise(cfg, ch.eff_noise_w)
}

/// Search interval for the downlink fraction. Fails if the problem is
/// trivial or infeasible.
pub fn compute_interval(cfg: &SystemConfig, ch: &ChannelRealization) -> Result<TauInterval> {
    let verdict = check_feasibility(cfg, ch);
    verdict
        .interval
        .ok_or_else(|| Error::Bracketing(format!("no search interval for a {:?} instance", verdict.status)))
}

/// Whether both demands at `tau` are within the saturation ceiling.
pub fn tau_is_feasible(cfg: &SystemConfig, eff_noise: [f64; 2], tau: f64) -> bool {
    let ceiling = cfg.eh.saturation_power();
    tau > 0.0 && tau < 1.0 && demands(cfg, eff_noise).iter().all(|d| d.f(tau).is_ok_and(|v| v <= ceiling))
}
