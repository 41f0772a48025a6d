//! Baseline schemes: covariance designs under the logistic or linear EH
//! surrogate, eigen-beams with an equal time split, and re-evaluation under
//! the circuit law.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::allocator::{
    grid_search, required_uplink_power, trivial_allocation, validate_allocation, AllocationDiagnostics, AllocationOutcome,
    ResourceAllocation, Slot,
};
use crate::conic::{solve, AffineRow, SdpSubproblem, Sense, SolveStatus};
use crate::eh_model::{fit_surrogates, sigmoid_inverse, SurrogateFit, DEFAULT_FIT_GRID};
use crate::error::{Error, Result};
use crate::feasibility::{check_feasibility, demand_f, FeasibilityStatus};
use crate::system::{harvested_power, uplink_rate, CMat, CVec, ChannelRealization, EnergyState, SystemConfig};

/// Eigenvalues at or below this fraction of the trace are dropped.
const EIGEN_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SurrogateModel {
    Sigmoid,
    Linear,
}

/// Covariance `X` from a surrogate design and its eigen-beams
/// `w_n = sqrt(N lambda_n) u_n`, each active for a fraction `1/N` of the
/// downlink.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceDesign {
    pub model: SurrogateModel,
    pub tau_bar: f64,
    pub x_tilde: CMat,
    pub beams: Vec<CVec>,
}

impl CovarianceDesign {
    pub fn rank(&self) -> usize {
        self.beams.len()
    }

    /// `(fraction, beam)` pairs with fractions summing to one.
    pub fn slots(&self) -> Vec<(f64, CVec)> {
        let frac = 1.0 / self.beams.len().max(1) as f64;
        self.beams.iter().map(|w| (frac, w.clone())).collect()
    }

    /// `tau * Tr(X)`.
    pub fn p_dl(&self) -> f64 {
        self.tau_bar * self.x_tilde.trace().re
    }
}

/// Received power each user needs under the surrogate at downlink fraction `tau_bar`.
pub fn surrogate_requirement(ch: &ChannelRealization, cfg: &SystemConfig, fit: &SurrogateFit, model: SurrogateModel, tau_bar: f64) -> Result<[f64; 2]> {
    let mut req = [0.0; 2];
    for (k, r) in req.iter_mut().enumerate() {
        let f = demand_f(tau_bar, k, cfg, ch.eff_noise_w[k])?.max(0.0);
        *r = match model {
            SurrogateModel::Linear => f / fit.linear.eta,
            SurrogateModel::Sigmoid => sigmoid_inverse(f, &fit.sigmoid).map_err(|_| {
                Error::Infeasible(format!("user {} demand {f:e} W exceeds the logistic ceiling {:e} W", k + 1, fit.sigmoid.m_sat))
            })?,
        };
    }
    Ok(req)
}

fn eigen_beams(x: &CMat) -> Vec<CVec> {
    let trace = x.trace().re;
    if trace <= 0.0 {
        return Vec::new();
    }
    let eig = x.clone().symmetric_eigen();
    let mut kept: Vec<(f64, CVec)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > EIGEN_CUTOFF * trace)
        .map(|(i, &l)| (l, eig.eigenvectors.column(i).into_owned()))
        .collect();
    kept.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n = kept.len() as f64;
    kept.into_iter().map(|(l, u)| u * Complex64::from((n * l).sqrt())).collect()
}

/// Minimum `tau Tr(X)` subject to `h_k^H X h_k >= req_k`: a single SDP.
pub fn baseline_design(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    fit: &SurrogateFit,
    model: SurrogateModel,
    tau_bar: f64,
) -> Result<CovarianceDesign> {
    if !(tau_bar > 0.0 && tau_bar < 1.0) {
        return Err(Error::domain("baseline_design (downlink fraction)", tau_bar));
    }
    let req = surrogate_requirement(ch, cfg, fit, model, tau_bar)?;
    let n_t = ch.n_antennas();
    let peak = req[0].max(req[1]);
    if peak <= 0.0 {
        return Ok(CovarianceDesign { model, tau_bar, x_tilde: CMat::zeros(n_t, n_t), beams: Vec::new() });
    }
    let gain = ch.h[0].norm_squared().max(ch.h[1].norm_squared());
    let mut sp = SdpSubproblem::new(vec![n_t], 0);
    sp.set_trace_cost(0, 1.0);
    for k in 0..2 {
        let h_hat = ch.outer(k) / Complex64::from(gain);
        sp.add_row(AffineRow::new(1, 0, Sense::Ge, req[k] / peak).with_block(0, h_hat));
    }
    let sol = solve(&sp)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver { status: sol.status });
    }
    let x_tilde = &sol.v_blocks[0] * Complex64::from(peak / gain);
    let beams = eigen_beams(&x_tilde);
    Ok(CovarianceDesign { model, tau_bar, x_tilde, beams })
}

/// Outcome of re-evaluating a design under the circuit law.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModelEvaluation {
    /// `kappa * tau * Tr(X)`.
    pub p_dl: f64,
    pub kappa: f64,
    pub p_u: [f64; 2],
    pub achieved_rates: [f64; 2],
    pub harvested_w: [f64; 2],
}

fn scaled(slots: &[(f64, CVec)], kappa: f64) -> Vec<(f64, CVec)> {
    let s = Complex64::from(kappa.sqrt());
    slots.iter().map(|(b, w)| (*b, w * s)).collect()
}

/// Smallest uniform scale `kappa >= 1` with which the design meets both
/// rate targets under the circuit law, uplink powers set to the rate
/// requirement.
pub fn evaluate_under_true_model(design: &CovarianceDesign, ch: &ChannelRealization, cfg: &SystemConfig) -> Result<TrueModelEvaluation> {
    let tau = design.tau_bar;
    let p_u = [0, 1].map(|k| required_uplink_power(cfg.r_req[k], ch.eff_noise_w[k], tau));
    let slots = design.slots();
    let meets = |kappa: f64| -> Result<bool> {
        let h = harvested_power(ch, &scaled(&slots, kappa), tau, &cfg.eh)?;
        let e = EnergyState::new(cfg, h);
        Ok((0..2).all(|k| e.supports(cfg, k, p_u[k], tau, 0.0)))
    };
    let kappa = if meets(1.0)? {
        1.0
    } else {
        // Past the scale that saturates every illuminated harvester nothing improves.
        let a_s = cfg.eh.a_s_sq;
        let kappa_cap = slots
            .iter()
            .flat_map(|(_, w)| [ch.received(0, w), ch.received(1, w)])
            .filter(|&x| x > 0.0)
            .map(|x| a_s / x)
            .fold(1.0, f64::max);
        if !meets(kappa_cap)? {
            return Err(Error::Infeasible("saturation caps the harvested power below the requirement".into()));
        }
        let (mut lo, mut hi) = (1.0, 2.0f64.min(kappa_cap));
        while !meets(hi)? {
            lo = hi;
            hi = (2.0 * hi).min(kappa_cap);
        }
        while hi - lo > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if meets(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let harvested_w = harvested_power(ch, &scaled(&slots, kappa), tau, &cfg.eh)?;
    Ok(TrueModelEvaluation {
        p_dl: kappa * design.p_dl(),
        kappa,
        p_u,
        achieved_rates: [0, 1].map(|k| uplink_rate(p_u[k], ch.eff_noise_w[k], tau)),
        harvested_w,
    })
}

/// Design plus true-model evaluation at one downlink fraction.
pub fn baseline_at(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    fit: &SurrogateFit,
    model: SurrogateModel,
    tau_bar: f64,
) -> Result<ResourceAllocation> {
    let design = baseline_design(ch, cfg, fit, model, tau_bar)?;
    let eval = evaluate_under_true_model(&design, ch, cfg)?;
    let slots = scaled(&design.slots(), eval.kappa)
        .into_iter()
        .map(|(beta, w)| Slot { beta, received: [ch.received(0, &w), ch.received(1, &w)], w })
        .collect();
    let allocation = ResourceAllocation {
        tau_bar,
        slots,
        p_u: eval.p_u,
        p_dl: eval.p_dl,
        achieved_rates: eval.achieved_rates,
        harvested_w: eval.harvested_w,
        diagnostics: AllocationDiagnostics {
            sca_iterations: 0,
            objective_trace: Vec::new(),
            rank_ratios: Vec::new(),
            reduced_slots: 0,
            repair_scale: eval.kappa,
            used_fallback_init: false,
        },
    };
    validate_allocation(&allocation, ch, cfg, 1e-6)?;
    Ok(allocation)
}

/// Grid search over the same downlink-fraction interval as the proposed
/// scheme, returning the cheapest true-model-feasible design.
pub fn baseline_allocate(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    fit: &SurrogateFit,
    model: SurrogateModel,
    eps_tau: f64,
) -> Result<AllocationOutcome> {
    if !(eps_tau > 0.0) {
        return Err(Error::InvalidConfig(format!("eps_tau must be positive, got {eps_tau}")));
    }
    let verdict = check_feasibility(cfg, ch);
    match verdict.status {
        FeasibilityStatus::TrivialSolution => {
            let p_u = verdict.trivial_powers.expect("trivial verdict carries powers");
            Ok(AllocationOutcome::Trivial(trivial_allocation(ch, p_u)))
        }
        FeasibilityStatus::Infeasible => Ok(AllocationOutcome::Infeasible(verdict)),
        FeasibilityStatus::NonTrivial => {
            let iv = verdict.interval.expect("non-trivial verdict carries an interval");
            let (allocation, curve) = grid_search(ch, cfg, &iv, eps_tau, |tau| baseline_at(ch, cfg, fit, model, tau))?;
            Ok(AllocationOutcome::Allocated { allocation, curve })
        }
    }
}

/// Surrogate fit for the configured circuit on the default grid.
pub fn default_fit(cfg: &SystemConfig) -> Result<SurrogateFit> {
    fit_surrogates(&cfg.eh, DEFAULT_FIT_GRID)
}
