//! Minimum downlink power allocation under the circuit EH law: successive
//! convex approximation (SCA) at a fixed downlink fraction, rank-one beam
//! extraction, and a grid search over the downlink fraction.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::Serialize;
use serde_json::json;

use crate::conic::{AffineRow, ConicBackend, InteriorPoint, SdpSubproblem, Sense, SolveStatus, SolverOptions};
use crate::eh_model::{phi, phi_tangent};
use crate::error::{Error, Result};
use crate::feasibility::{check_feasibility, tau_is_feasible, FeasibilityStatus, FeasibilityVerdict, TauInterval};
use crate::system::{harvested_power, uplink_rate, CMat, CVec, ChannelRealization, EnergyState, SystemConfig};

pub const N_SLOTS: usize = 3;
/// Saturation margin of the default linearization point.
const INIT_MARGIN: f64 = 0.9;
/// Fraction of `A_s^2` delivered to both users by the fallback joint beam.
const FALLBACK_LEVEL: f64 = 1.0 - 1e-6;
/// Blocks with `lambda_2 / lambda_1` at or below this use the dominant
/// eigenvector directly.
const EXACT_RANK_RATIO: f64 = 1e-6;
/// Relative excess over `A_s^2` tolerated when scaling beams up.
const SATURATION_SLACK: f64 = 1e-7;

/// Per-slot beam covariances `W_n` and slot fractions at which the EH law
/// is linearized.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizationPoint {
    pub w_blocks: [CMat; N_SLOTS],
    pub betas: [f64; N_SLOTS],
}

impl LinearizationPoint {
    /// `h_k^H W_n h_k` indexed `[n][k]`.
    pub fn received(&self, ch: &ChannelRealization) -> [[f64; 2]; N_SLOTS] {
        std::array::from_fn(|n| [ch.quad(0, &self.w_blocks[n]), ch.quad(1, &self.w_blocks[n])])
    }

    pub fn validate(&self, ch: &ChannelRealization, cfg: &SystemConfig) -> Result<()> {
        let a = cfg.eh.a_s_sq;
        if self.betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidLinearization(format!("slot fractions must be positive, got {:?}", self.betas)));
        }
        for (n, r) in self.received(ch).iter().enumerate() {
            if r.iter().any(|&x| !(x <= a * (1.0 + 1e-6))) {
                return Err(Error::InvalidLinearization(format!("slot {n} drives the harvester into saturation: {r:?}")));
            }
        }
        Ok(())
    }
}

/// Factors mapping the normalized subproblem back to physical units:
/// `V_n = v_scale * V^_n`, `beta_n = beta_scale * beta^_n`,
/// `p^u = p_scale * p^`, and the objective
/// `tau * sum Tr(V_n) = objective_scale * sum Tr(V^_n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemScaling {
    pub v_scale: f64,
    pub beta_scale: f64,
    pub p_scale: f64,
    pub objective_scale: f64,
}

/// Uplink power needed for rate `R` in the uplink fraction `1 - tau`.
pub fn required_uplink_power(rate: f64, eff_noise: f64, tau_bar: f64) -> f64 {
    (rate / (1.0 - tau_bar) * std::f64::consts::LN_2).exp_m1() * eff_noise
}

/// Scalar layout of the subproblem: three slot fractions, then two uplink powers.
pub const BETA_INDEX: usize = 0;
pub const POWER_INDEX: usize = N_SLOTS;

/// Convex inner approximation at `lp`, in normalized units.
///
/// Rows, in order: two rate rows, two linearized energy rows, six
/// saturation rows (slot-major), and `sum beta <= 1`. Downlink time left
/// over is idle.
///
/// Below saturation the optimal slot fractions are of order `f / Phi`, far
/// below one, so fractions are normalized by that ratio.
pub fn build_subproblem(
    tau_bar: f64,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    lp: &LinearizationPoint,
) -> Result<(SdpSubproblem, SubproblemScaling)> {
    if !(tau_bar > 0.0 && tau_bar < 1.0) {
        return Err(Error::domain("build_subproblem (downlink fraction)", tau_bar));
    }
    lp.validate(ch, cfg)?;
    let n_t = ch.n_antennas();
    let a_s = cfg.eh.a_s_sq;
    let x_t = lp.received(ch);
    let gain = ch.h[0].norm_squared().max(ch.h[1].norm_squared());
    let x_scale = x_t.iter().flatten().fold(1e-9 * a_s, |m, &x| m.max(x));

    let c = tau_bar / (1.0 - tau_bar);
    let rho = [0, 1].map(|k| required_uplink_power(cfg.r_req[k], ch.eff_noise_w[k], tau_bar));
    let q_bar = [0, 1].map(|k| cfg.q_init_j[k] / ((1.0 - tau_bar) * cfg.t_frame_s));
    let p_scale = rho.iter().chain(&q_bar).fold(0.0f64, |m, &v| m.max(v));
    let p_scale = if p_scale > 0.0 { p_scale } else { 1.0 };
    let demand = (0..2).map(|k| (rho[k] - q_bar[k]) / c).fold(0.0f64, f64::max);
    let beta_scale = (demand / cfg.eh.saturation_power()).clamp(1e-12, 1.0);
    let v_scale = beta_scale * x_scale / gain;

    let h_hat: [CMat; 2] = [0, 1].map(|k| ch.outer(k) / Complex64::from(gain));
    let mut sp = SdpSubproblem::new(vec![n_t; N_SLOTS], N_SLOTS + 2);
    for n in 0..N_SLOTS {
        sp.set_trace_cost(n, 1.0);
    }
    let row = |sense, rhs| AffineRow::new(N_SLOTS, N_SLOTS + 2, sense, rhs);

    for k in 0..2 {
        sp.add_row(row(Sense::Ge, rho[k] / p_scale).with_scalar(POWER_INDEX + k, 1.0));
    }
    for k in 0..2 {
        let mut r = row(Sense::Le, q_bar[k] / p_scale).with_scalar(POWER_INDEX + k, 1.0);
        for (n, x) in x_t.iter().enumerate() {
            let (slope, intercept) = phi_tangent(x[k], &cfg.eh);
            if slope > 0.0 {
                r.blocks[n] = Some(&h_hat[k] * Complex64::from(-c * slope * beta_scale * x_scale / p_scale));
            }
            r.scalars[BETA_INDEX + n] = -c * intercept * beta_scale / p_scale;
        }
        sp.add_row(r);
    }
    for n in 0..N_SLOTS {
        for h in &h_hat {
            sp.add_row(row(Sense::Le, 0.0).with_block(n, h.clone()).with_scalar(BETA_INDEX + n, -a_s / x_scale));
        }
    }
    // Kept in physical units so its slack, the idle fraction, is of order one.
    let mut simplex = row(Sense::Le, 1.0);
    for n in 0..N_SLOTS {
        simplex.scalars[BETA_INDEX + n] = beta_scale;
    }
    sp.add_row(simplex);

    Ok((sp, SubproblemScaling { v_scale, beta_scale, p_scale, objective_scale: tau_bar * v_scale }))
}

fn mrt_scaled(ch: &ChannelRealization, d: &CVec, level: f64) -> CVec {
    let peak = ch.received(0, d).max(ch.received(1, d));
    d * Complex64::from((level / peak).sqrt())
}

fn outer(w: &CVec) -> CMat {
    w * w.adjoint()
}

fn init_directions(ch: &ChannelRealization) -> [CVec; N_SLOTS] {
    let sum = &ch.h[0] / Complex64::from(ch.h[0].norm()) + &ch.h[1] / Complex64::from(ch.h[1].norm());
    let sum = if sum.norm() > 1e-12 * ch.h[0].norm() { sum } else { ch.h[0].clone() };
    [ch.h[0].clone(), ch.h[1].clone(), sum]
}

/// MRT beams toward each user and toward the normalized sum direction, each
/// peaking at `0.9 A_s^2`, with equal slot fractions.
pub fn default_init(ch: &ChannelRealization, cfg: &SystemConfig) -> LinearizationPoint {
    let level = INIT_MARGIN * cfg.eh.a_s_sq;
    let dirs = init_directions(ch);
    LinearizationPoint {
        w_blocks: std::array::from_fn(|n| outer(&mrt_scaled(ch, &dirs[n], level))),
        betas: [1.0 / N_SLOTS as f64; N_SLOTS],
    }
}

/// `default_init` with the beam directions and slot fractions randomly
/// perturbed by a seeded generator.
pub fn perturbed_init(ch: &ChannelRealization, cfg: &SystemConfig, seed: u64) -> LinearizationPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = INIT_MARGIN * cfg.eh.a_s_sq;
    let n_t = ch.n_antennas();
    let spread = Uniform::new(0.5, 1.5).expect("valid range");
    let dirs = init_directions(ch).map(|d| {
        let noise = CVec::from_fn(n_t, |_, _| {
            let (re, im): (f64, f64) = (StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            Complex64::new(re, im)
        });
        let noise = &noise * Complex64::from(0.5 * d.norm() / noise.norm());
        d + noise
    });
    let raw: [f64; N_SLOTS] = std::array::from_fn(|_| spread.sample(&mut rng));
    let total: f64 = raw.iter().sum();
    LinearizationPoint { w_blocks: std::array::from_fn(|n| outer(&mrt_scaled(ch, &dirs[n], level))), betas: raw.map(|b| b / total) }
}

/// Zero-forcing beam delivering `level` to both users.
fn joint_beam(ch: &ChannelRealization, level: f64) -> CVec {
    let a = level.sqrt();
    (ch.zf_rows[0].map(|z| z.conj()) + ch.zf_rows[1].map(|z| z.conj())) * Complex64::from(a)
}

/// Linearization point whose first slot delivers just under `A_s^2` to both
/// users at once; used when the default point gives an infeasible
/// subproblem near the saturation bound.
pub fn fallback_init(ch: &ChannelRealization, cfg: &SystemConfig) -> LinearizationPoint {
    let mut lp = default_init(ch, cfg);
    lp.w_blocks[2] = lp.w_blocks[1].clone();
    lp.w_blocks[1] = lp.w_blocks[0].clone();
    lp.w_blocks[0] = outer(&joint_beam(ch, FALLBACK_LEVEL * cfg.eh.a_s_sq));
    lp
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub beta: f64,
    pub w: CVec,
    /// `|h_k^H w|^2` per user.
    pub received: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationDiagnostics {
    pub sca_iterations: usize,
    /// `tau * sum Tr(V_n)` after each SCA iteration.
    pub objective_trace: Vec<f64>,
    /// `lambda_2 / lambda_1` of each converged block whose beam keeps a
    /// share of the frame.
    pub rank_ratios: Vec<f64>,
    /// Active blocks that went through the two-user rank-one reduction.
    pub reduced_slots: usize,
    /// Uniform beam scale applied so the true-model energy constraint holds.
    pub repair_scale: f64,
    pub used_fallback_init: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceAllocation {
    pub tau_bar: f64,
    pub slots: Vec<Slot>,
    pub p_u: [f64; 2],
    /// `tau * sum_n beta_n ||w_n||^2`.
    pub p_dl: f64,
    pub achieved_rates: [f64; 2],
    /// Frame-averaged harvested power `tau * sum_n beta_n phi(|h_k^H w_n|^2)`.
    pub harvested_w: [f64; 2],
    pub diagnostics: AllocationDiagnostics,
}

impl ResourceAllocation {
    pub fn active_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let slots: Vec<_> = self
            .slots
            .iter()
            .map(|s| {
                json!({
                    "beta": s.beta,
                    "w": s.w.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
                    "received_w": s.received,
                })
            })
            .collect();
        json!({
            "tau_bar": self.tau_bar,
            "p_dl_w": self.p_dl,
            "p_u_w": self.p_u,
            "achieved_rates": self.achieved_rates,
            "harvested_w": self.harvested_w,
            "slots": slots,
            "diagnostics": self.diagnostics,
        })
    }
}

/// The all-zero downlink allocation for the stored-energy regime.
pub fn trivial_allocation(ch: &ChannelRealization, p_u: [f64; 2]) -> ResourceAllocation {
    ResourceAllocation {
        tau_bar: 0.0,
        slots: Vec::new(),
        p_u,
        p_dl: 0.0,
        achieved_rates: [0, 1].map(|k| uplink_rate(p_u[k], ch.eff_noise_w[k], 0.0)),
        harvested_w: [0.0; 2],
        diagnostics: AllocationDiagnostics {
            sca_iterations: 0,
            objective_trace: Vec::new(),
            rank_ratios: Vec::new(),
            reduced_slots: 0,
            repair_scale: 1.0,
            used_fallback_init: false,
        },
    }
}

/// Whether every slot keeps both harvesters out of saturation.
pub fn check_saturation(a: &ResourceAllocation, ch: &ChannelRealization, cfg: &SystemConfig, rel_tol: f64) -> Result<()> {
    for (n, s) in a.slots.iter().enumerate() {
        for k in 0..2 {
            if ch.received(k, &s.w) > cfg.eh.a_s_sq * (1.0 + rel_tol) {
                return Err(Error::Validation(format!("slot {n} saturates user {}", k + 1)));
            }
        }
    }
    Ok(())
}

/// Check rates, slot fractions and the energy constraint against the exact
/// EH law, with relative tolerance `rel_tol`.
pub fn validate_allocation(a: &ResourceAllocation, ch: &ChannelRealization, cfg: &SystemConfig, rel_tol: f64) -> Result<()> {
    let fail = |msg: String| Err(Error::Validation(msg));
    if !a.slots.is_empty() {
        let total: f64 = a.slots.iter().map(|s| s.beta).sum();
        if (total - 1.0).abs() > 1e-8 {
            return fail(format!("slot fractions sum to {total}"));
        }
        if a.slots.iter().any(|s| s.beta < 0.0) {
            return fail("negative slot fraction".into());
        }
    }
    for k in 0..2 {
        let rate = uplink_rate(a.p_u[k], ch.eff_noise_w[k], a.tau_bar);
        if rate < cfg.r_req[k] - 1e-6 {
            return fail(format!("user {} rate {rate} below {}", k + 1, cfg.r_req[k]));
        }
    }
    let beams: Vec<(f64, CVec)> = a.slots.iter().map(|s| (s.beta, s.w.clone())).collect();
    let harvested = harvested_power(ch, &beams, a.tau_bar, &cfg.eh)?;
    let energy = EnergyState::new(cfg, harvested);
    for k in 0..2 {
        if !energy.supports(cfg, k, a.p_u[k], a.tau_bar, rel_tol) {
            return fail(format!(
                "user {} spends {:e} J but has {:e} J",
                k + 1,
                (1.0 - a.tau_bar) * a.p_u[k] * cfg.t_frame_s,
                energy.available_j[k]
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocatorOptions {
    pub eps_tau: f64,
    pub eps_sca: f64,
    pub max_sca_iterations: usize,
    pub beta_floor: f64,
    pub active_threshold: f64,
    /// Fail with `RankViolation` instead of reducing a high-rank block.
    pub strict_rank: bool,
    pub rank_tol: f64,
    /// Seed for a perturbed initial linearization point.
    pub init_seed: Option<u64>,
    pub solver: SolverOptions,
}

impl Default for AllocatorOptions {
    fn default() -> Self {
        AllocatorOptions {
            eps_tau: 0.1,
            eps_sca: 1e-4,
            max_sca_iterations: 200,
            beta_floor: 1e-9,
            active_threshold: 1e-6,
            strict_rank: false,
            rank_tol: 1e-4,
            init_seed: None,
            solver: SolverOptions::default(),
        }
    }
}

/// Converged SCA iterate in physical units.
struct ScaEndpoint {
    v: Vec<CMat>,
    betas: [f64; N_SLOTS],
    iterations: usize,
    trace: Vec<f64>,
}

fn run_sca(tau_bar: f64, ch: &ChannelRealization, cfg: &SystemConfig, init: &LinearizationPoint, opts: &AllocatorOptions) -> Result<ScaEndpoint> {
    let mut lp = init.clone();
    let mut trace: Vec<f64> = Vec::new();
    let a_s = cfg.eh.a_s_sq;
    for it in 1..=opts.max_sca_iterations {
        let (sp, scale) = build_subproblem(tau_bar, ch, cfg, &lp)?;
        let sol = InteriorPoint.solve(&sp, &opts.solver)?;
        if sol.status != SolveStatus::Optimal {
            return Err(Error::Solver { status: sol.status });
        }
        let v: Vec<CMat> = sol.v_blocks.iter().map(|b| b * Complex64::from(scale.v_scale)).collect();
        let betas: [f64; N_SLOTS] = std::array::from_fn(|n| (sol.scalars[BETA_INDEX + n] * scale.beta_scale).max(0.0));
        let beta_max = betas.iter().fold(0.0f64, |m, &b| m.max(b));
        let objective = tau_bar * v.iter().map(|b| b.trace().re).sum::<f64>();
        let prev = trace.last().copied();
        trace.push(objective);
        for n in 0..N_SLOTS {
            if betas[n] > opts.beta_floor * beta_max {
                let mut w = &v[n] / Complex64::from(betas[n]);
                let peak = ch.quad(0, &w).max(ch.quad(1, &w));
                if peak > a_s {
                    w *= Complex64::from(a_s / peak);
                }
                lp.w_blocks[n] = w;
                lp.betas[n] = betas[n];
            }
        }
        if let Some(prev) = prev {
            if (objective - prev).abs() <= opts.eps_sca * prev.abs() || objective == prev {
                return Ok(ScaEndpoint { v, betas, iterations: it, trace });
            }
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_sca_iterations })
}

/// Coordinates `(t, r)` of a 2x2 Hermitian matrix in the basis
/// `{I, sigma_x, sigma_y, sigma_z} / 2`.
fn bloch(m: &nalgebra::Matrix2<Complex64>) -> (f64, Vector3<f64>) {
    let t = m[(0, 0)].re + m[(1, 1)].re;
    let r = Vector3::new(2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, m[(0, 0)].re - m[(1, 1)].re);
    (t, r)
}

/// A single beam with the same received power at both users and no more
/// power than the PSD matrix `w`.
///
/// Only the part of `w` in the span of the two channels affects reception.
/// In that 2-D subspace the compressed matrix is moved along the direction
/// orthogonal to both users' Bloch vectors until it becomes rank one, which
/// keeps its trace and both received powers.
pub fn reduce_to_rank_one(w: &CMat, ch: &ChannelRealization) -> CVec {
    let q1 = &ch.h[0] / Complex64::from(ch.h[0].norm());
    let v = &ch.h[1] - &q1 * q1.dotc(&ch.h[1]);
    let q2 = &v / Complex64::from(v.norm());
    let q = [q1, q2];
    let m = nalgebra::Matrix2::from_fn(|i, j| q[i].dotc(&(w * &q[j])));
    let g: [nalgebra::Vector2<Complex64>; 2] = [0, 1].map(|k| nalgebra::Vector2::new(q[0].dotc(&ch.h[k]), q[1].dotc(&ch.h[k])));
    let (t, r) = bloch(&m);
    if t <= 0.0 {
        return CVec::zeros(w.nrows());
    }
    let s: [Vector3<f64>; 2] = g.map(|gk| bloch(&(gk * gk.adjoint())).1);
    let mut n = s[0].cross(&s[1]);
    if n.norm() <= 1e-12 * s[0].norm() * s[1].norm() {
        let axis = if s[0].x.abs() <= s[0].y.abs() && s[0].x.abs() <= s[0].z.abs() {
            Vector3::x()
        } else if s[0].y.abs() <= s[0].z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        n = s[0].cross(&axis);
    }
    let n = n.normalize();
    let rn = r.dot(&n);
    let disc = (rn * rn + t * t - r.norm_squared()).max(0.0).sqrt();
    let alpha = if rn >= 0.0 { -rn + disc } else { -rn - disc };
    let r1 = r + n * alpha;
    // Pure state with Bloch vector r1 and trace t: t * u u^H.
    let rho = r1 / t;
    let (theta_c, phase) = (((1.0 + rho.z) / 2.0).max(0.0).sqrt(), Complex64::new(rho.x, rho.y));
    let u = if theta_c > 1e-12 {
        nalgebra::Vector2::new(Complex64::from(theta_c), phase / Complex64::from(2.0 * theta_c))
    } else {
        nalgebra::Vector2::new(Complex64::from(0.0), Complex64::from(1.0))
    };
    let scale = Complex64::from(t.sqrt());
    (&q[0] * u[0] + &q[1] * u[1]) * scale
}

/// Dominant eigenpair and `lambda_2 / lambda_1` of a Hermitian PSD matrix.
fn dominant(w: &CMat) -> (f64, CVec, f64) {
    let eig = w.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l1 = eig.eigenvalues[idx[0]].max(0.0);
    let l2 = idx.get(1).map_or(0.0, |&i| eig.eigenvalues[i].max(0.0));
    let ratio = if l1 > 0.0 { l2 / l1 } else { 0.0 };
    (l1, eig.eigenvectors.column(idx[0]).into_owned(), ratio)
}

/// Cheapest slot fractions for fixed beams, meeting the exact energy
/// demand: a linear program over the beams plus an idle column, solved by
/// enumerating its vertices. The last entry is the idle fraction; `None`
/// when no fractions meet the demand.
pub fn polish_fractions(beams: &[CVec], ch: &ChannelRealization, cfg: &SystemConfig, tau_bar: f64, p_u: [f64; 2]) -> Result<Option<Vec<f64>>> {
    let nv = beams.len() + 1;
    let mut energy = [vec![0.0; nv], vec![0.0; nv]];
    for (n, w) in beams.iter().enumerate() {
        for k in 0..2 {
            energy[k][n] = phi(ch.received(k, w).min(cfg.eh.a_s_sq), &cfg.eh)?;
        }
    }
    let cost: Vec<f64> = (0..nv).map(|n| beams.get(n).map_or(0.0, |w| w.norm_squared())).collect();
    let demand = [0, 1].map(|k| ((1.0 - tau_bar) * p_u[k] - cfg.q_init_j[k] / cfg.t_frame_s) / tau_bar);

    // Candidate active constraints: the two energy rows, then beta_j >= 0.
    let n_cand = 2 + nv;
    let row = |c: usize| -> (Vec<f64>, f64) {
        if c < 2 {
            (energy[c].clone(), demand[c])
        } else {
            let mut e = vec![0.0; nv];
            e[c - 2] = 1.0;
            (e, 0.0)
        }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut pick = vec![0usize; nv - 1];
    let mut combos: Vec<Vec<usize>> = Vec::new();
    fn choose(start: usize, depth: usize, n: usize, pick: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if depth == pick.len() {
            out.push(pick.clone());
            return;
        }
        for c in start..n {
            pick[depth] = c;
            choose(c + 1, depth + 1, n, pick, out);
        }
    }
    choose(0, 0, n_cand, &mut pick, &mut combos);
    for combo in combos {
        let mut m = nalgebra::DMatrix::<f64>::zeros(nv, nv);
        let mut rhs = nalgebra::DVector::<f64>::zeros(nv);
        for j in 0..nv {
            m[(0, j)] = 1.0;
        }
        rhs[0] = 1.0;
        for (i, &c) in combo.iter().enumerate() {
            let (coef, r) = row(c);
            for j in 0..nv {
                m[(i + 1, j)] = coef[j];
            }
            rhs[i + 1] = r;
        }
        let Some(beta) = m.lu().solve(&rhs) else { continue };
        if beta.iter().any(|b| !b.is_finite() || *b < -1e-12) {
            continue;
        }
        let beta: Vec<f64> = beta.iter().map(|b| b.max(0.0)).collect();
        let meets = (0..2).all(|k| {
            let e: f64 = (0..nv).map(|j| beta[j] * energy[k][j]).sum();
            e >= demand[k] - 1e-12 * demand[k].abs()
        });
        if !meets {
            continue;
        }
        let c: f64 = beta.iter().zip(&cost).map(|(b, c)| b * c).sum();
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, beta));
        }
    }
    Ok(best.map(|b| b.1))
}

/// SCA to convergence at a fixed downlink fraction, followed by beam
/// extraction and validation against the exact EH law.
pub fn solve_fixed_tau(
    tau_bar: f64,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    init: &LinearizationPoint,
    opts: &AllocatorOptions,
) -> Result<ResourceAllocation> {
    let end = run_sca(tau_bar, ch, cfg, init, opts)?;
    let beta_max = end.betas.iter().fold(0.0f64, |m, &b| m.max(b));
    let power: Vec<f64> = end.v.iter().map(|v| v.trace().re.max(0.0)).collect();
    let power_total: f64 = power.iter().sum();
    let active: Vec<usize> = (0..N_SLOTS)
        .filter(|&n| end.betas[n] > opts.active_threshold * beta_max && power[n] > opts.active_threshold * power_total)
        .collect();
    let mut rank_ratios = Vec::new();
    let mut reduced_slots = 0;
    let mut beams: Vec<CVec> = Vec::new();
    for &n in &active {
        let w = &end.v[n] / Complex64::from(end.betas[n]);
        let (l1, u1, ratio) = dominant(&w);
        rank_ratios.push(ratio);
        let beam = if ratio <= EXACT_RANK_RATIO {
            u1 * Complex64::from(l1.sqrt())
        } else if opts.strict_rank && ratio > opts.rank_tol {
            return Err(Error::RankViolation { slot: n, ratio });
        } else {
            reduced_slots += 1;
            reduce_to_rank_one(&w, ch)
        };
        beams.push(beam);
    }

    let p_u = [0, 1].map(|k| required_uplink_power(cfg.r_req[k], ch.eff_noise_w[k], tau_bar));
    let scaled = |kappa: f64| -> Vec<CVec> { beams.iter().map(|w| w * Complex64::from(kappa.sqrt())).collect() };
    let mut repair_scale = 1.0;
    let mut fractions = polish_fractions(&beams, ch, cfg, tau_bar, p_u)?;
    if fractions.is_none() {
        // Residual shortfall from solver tolerance: scale all beams up to the
        // saturation cap and keep the smallest scale that admits a solution.
        let peak = beams.iter().map(|w| ch.received(0, w).max(ch.received(1, w))).fold(0.0, f64::max);
        let kappa_max = if peak > 0.0 { (cfg.eh.a_s_sq * (1.0 + SATURATION_SLACK) / peak).max(1.0) } else { 1.0 };
        if polish_fractions(&scaled(kappa_max), ch, cfg, tau_bar, p_u)?.is_none() {
            return Err(Error::Validation("beams cannot meet the energy demand under the circuit law".into()));
        }
        let (mut lo, mut hi) = (1.0, kappa_max);
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if polish_fractions(&scaled(mid), ch, cfg, tau_bar, p_u)?.is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        repair_scale = hi;
        beams = scaled(hi);
        fractions = polish_fractions(&beams, ch, cfg, tau_bar, p_u)?;
    }
    let fractions = fractions.expect("feasible after repair");
    let n_t = ch.n_antennas();
    let mut slots: Vec<Slot> = Vec::new();
    let mut kept_ratios = Vec::new();
    for (n, &beta) in fractions.iter().enumerate() {
        if beta > 0.0 {
            if let Some(&r) = rank_ratios.get(n) {
                kept_ratios.push(r);
            }
            let w = beams.get(n).cloned().unwrap_or_else(|| CVec::zeros(n_t));
            slots.push(Slot { beta, received: [ch.received(0, &w), ch.received(1, &w)], w });
        }
    }
    let beams: Vec<(f64, CVec)> = slots.iter().map(|s| (s.beta, s.w.clone())).collect();
    let p_dl = tau_bar * slots.iter().map(|s| s.beta * s.w.norm_squared()).sum::<f64>();
    let harvested_w = harvested_power(ch, &beams, tau_bar, &cfg.eh)?;
    let allocation = ResourceAllocation {
        tau_bar,
        slots,
        p_u,
        p_dl,
        achieved_rates: [0, 1].map(|k| uplink_rate(p_u[k], ch.eff_noise_w[k], tau_bar)),
        harvested_w,
        diagnostics: AllocationDiagnostics {
            sca_iterations: end.iterations,
            objective_trace: end.trace,
            rank_ratios: kept_ratios,
            reduced_slots,
            repair_scale,
            used_fallback_init: false,
        },
    };
    validate_allocation(&allocation, ch, cfg, 1e-6)?;
    check_saturation(&allocation, ch, cfg, 1e-6)?;
    Ok(allocation)
}

/// `solve_fixed_tau` from the default (or seeded) point, retried from the
/// joint-beam point if that fails.
pub fn solve_with_fallback(tau_bar: f64, ch: &ChannelRealization, cfg: &SystemConfig, opts: &AllocatorOptions) -> Result<ResourceAllocation> {
    let init = match opts.init_seed {
        Some(seed) => perturbed_init(ch, cfg, seed),
        None => default_init(ch, cfg),
    };
    match solve_fixed_tau(tau_bar, ch, cfg, &init, opts) {
        Ok(a) => Ok(a),
        Err(first) => match solve_fixed_tau(tau_bar, ch, cfg, &fallback_init(ch, cfg), opts) {
            Ok(mut a) => {
                a.diagnostics.used_fallback_init = true;
                Ok(a)
            }
            Err(_) => Err(first),
        },
    }
}

/// Grid `tau_min, tau_min + eps, ...` below `tau_max`, plus `tau_max`.
pub fn tau_grid(iv: &TauInterval, eps_tau: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    let mut i = 0usize;
    loop {
        let t = iv.tau_min + i as f64 * eps_tau;
        if t >= iv.tau_max - 1e-12 {
            break;
        }
        grid.push(t);
        i += 1;
    }
    grid.push(iv.tau_max.max(iv.tau_min));
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub tau_bar: f64,
    pub p_dl: Option<f64>,
    pub sca_iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AllocationOutcome {
    Trivial(ResourceAllocation),
    Infeasible(FeasibilityVerdict),
    Allocated { allocation: ResourceAllocation, curve: Vec<GridPoint> },
}

impl AllocationOutcome {
    pub fn allocation(&self) -> Option<&ResourceAllocation> {
        match self {
            AllocationOutcome::Trivial(a) | AllocationOutcome::Allocated { allocation: a, .. } => Some(a),
            AllocationOutcome::Infeasible(_) => None,
        }
    }
}

/// Grid search over `tau` using `solve_at` for each feasible point.
pub(crate) fn grid_search(
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    iv: &TauInterval,
    eps_tau: f64,
    mut solve_at: impl FnMut(f64) -> Result<ResourceAllocation>,
) -> Result<(ResourceAllocation, Vec<GridPoint>)> {
    let mut curve = Vec::new();
    let mut best: Option<ResourceAllocation> = None;
    let mut failures = Vec::new();
    for tau in tau_grid(iv, eps_tau) {
        if !tau_is_feasible(cfg, ch.eff_noise_w, tau) {
            let msg = "demand exceeds the saturation ceiling".to_string();
            failures.push((tau, msg.clone()));
            curve.push(GridPoint { tau_bar: tau, p_dl: None, sca_iterations: 0, error: Some(msg) });
            continue;
        }
        match solve_at(tau) {
            Ok(a) => {
                curve.push(GridPoint { tau_bar: tau, p_dl: Some(a.p_dl), sca_iterations: a.diagnostics.sca_iterations, error: None });
                if best.as_ref().is_none_or(|b| a.p_dl < b.p_dl) {
                    best = Some(a);
                }
            }
            Err(e) => {
                failures.push((tau, e.to_string()));
                curve.push(GridPoint { tau_bar: tau, p_dl: None, sca_iterations: 0, error: Some(e.to_string()) });
            }
        }
    }
    match best {
        Some(a) => Ok((a, curve)),
        None => Err(Error::AllGridPointsFailed { failures }),
    }
}

/// Full allocation: feasibility classification, then grid search with SCA.
pub fn allocate(ch: &ChannelRealization, cfg: &SystemConfig, opts: &AllocatorOptions) -> Result<AllocationOutcome> {
    if !(opts.eps_tau > 0.0) {
        return Err(Error::InvalidConfig(format!("eps_tau must be positive, got {}", opts.eps_tau)));
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
            let (allocation, curve) = grid_search(ch, cfg, &iv, opts.eps_tau, |tau| solve_with_fallback(tau, ch, cfg, opts))?;
            Ok(AllocationOutcome::Allocated { allocation, curve })
        }
    }
}
