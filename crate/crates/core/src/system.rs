//! System configuration, Ricean channel generation, zero-forcing uplink
//! processing and rate/energy bookkeeping.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::eh_model::{phi, EhCircuitParams};
use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Channels whose column condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e8;
const MAX_SAMPLING_ATTEMPTS: usize = 64;

/// Convert a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub carrier_hz: f64,
    pub distances_m: [f64; 2],
    pub noise_w: f64,
    pub ricean_k: f64,
    pub t_frame_s: f64,
    pub q_init_j: [f64; 2],
    /// Required uplink rates in bits/s/Hz.
    pub r_req: [f64; 2],
    pub eh: EhCircuitParams,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            n_antennas: 4,
            carrier_hz: 868e6,
            distances_m: [10.0, 10.0],
            noise_w: dbm_to_watts(-110.0),
            ricean_k: 1.0,
            t_frame_s: 1.0,
            q_init_j: [0.0, 0.0],
            r_req: [1.0, 1.0],
            eh: EhCircuitParams::default(),
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_antennas < 2 {
            return bad(format!("zero-forcing needs at least 2 antennas, got {}", self.n_antennas));
        }
        let positive = [("carrier_hz", self.carrier_hz), ("noise_w", self.noise_w), ("t_frame_s", self.t_frame_s)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for k in 0..2 {
            if !(self.distances_m[k].is_finite() && self.distances_m[k] > 0.0) {
                return bad(format!("distance of user {} must be positive", k + 1));
            }
            if !(self.q_init_j[k] >= 0.0 && self.q_init_j[k].is_finite()) {
                return bad(format!("initial energy of user {} must be non-negative", k + 1));
            }
            if !(self.r_req[k] >= 0.0 && self.r_req[k].is_finite()) {
                return bad(format!("required rate of user {} must be non-negative", k + 1));
            }
        }
        if !(self.ricean_k >= 0.0) {
            return bad(format!("Ricean factor must be non-negative, got {}", self.ricean_k));
        }
        self.eh.validate()
    }

    pub fn with_rates(mut self, r1: f64, r2: f64) -> Self {
        self.r_req = [r1, r2];
        self
    }

    pub fn with_antennas(mut self, n: usize) -> Self {
        self.n_antennas = n;
        self
    }
}

/// Free-space power gain `(c / (4 pi d f_c))^2` of user `user` (0 or 1).
pub fn path_loss(cfg: &SystemConfig, user: usize) -> f64 {
    (SPEED_OF_LIGHT / (4.0 * PI * cfg.distances_m[user] * cfg.carrier_hz)).powi(2)
}

/// Zero-forcing equalizer rows and the resulting per-user noise powers.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfOutput {
    /// Row `k` of `F = (H^H H)^-1 H^H`, so that `f_k . r` detects user `k`.
    pub rows: [CVec; 2],
    pub eff_noise_w: [f64; 2],
    pub condition: f64,
}

pub fn zf_process(h: &[CVec; 2], noise_w: f64) -> Result<ZfOutput> {
    let n = h[0].len();
    if h[1].len() != n {
        return Err(Error::InvalidConfig("channel vectors differ in length".into()));
    }
    let a = h[0].norm_squared();
    let d = h[1].norm_squared();
    let b = h[0].dotc(&h[1]);
    let det = a * d - b.norm_sqr();
    // Eigenvalues of the 2x2 Gram matrix.
    let mean = 0.5 * (a + d);
    let disc = (0.25 * (a - d).powi(2) + b.norm_sqr()).sqrt();
    let (lmax, lmin) = (mean + disc, (mean - disc).max(det / (mean + disc)));
    let condition = if lmin > 0.0 { (lmax / lmin).sqrt() } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) || det <= 0.0 {
        return Err(Error::SingularChannel { condition });
    }
    // (H^H H)^-1 = [[d, -b], [-conj(b), a]] / det
    let inv = [[Complex64::from(d / det), -b / det], [-b.conj() / det, Complex64::from(a / det)]];
    let row = |k: usize| -> CVec { CVec::from_fn(n, |i, _| inv[k][0] * h[0][i].conj() + inv[k][1] * h[1][i].conj()) };
    let rows = [row(0), row(1)];
    let eff_noise_w = [rows[0].norm_squared() * noise_w, rows[1].norm_squared() * noise_w];
    Ok(ZfOutput { rows, eff_noise_w, condition })
}

/// A channel draw with its derived zero-forcing quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: [CVec; 2],
    pub zf_rows: [CVec; 2],
    pub eff_noise_w: [f64; 2],
    pub condition: f64,
}

impl ChannelRealization {
    pub fn new(h1: CVec, h2: CVec, noise_w: f64) -> Result<Self> {
        let h = [h1, h2];
        let zf = zf_process(&h, noise_w)?;
        Ok(ChannelRealization { h, zf_rows: zf.rows, eff_noise_w: zf.eff_noise_w, condition: zf.condition })
    }

    pub fn n_antennas(&self) -> usize {
        self.h[0].len()
    }

    /// `h_k^H W h_k` for a Hermitian `W`.
    pub fn quad(&self, k: usize, w: &CMat) -> f64 {
        let hk = &self.h[k];
        hk.dotc(&(w * hk)).re
    }

    /// `|h_k^H w|^2` for a beam `w`.
    pub fn received(&self, k: usize, w: &CVec) -> f64 {
        self.h[k].dotc(w).norm_sqr()
    }

    /// `H_k = h_k h_k^H`.
    pub fn outer(&self, k: usize) -> CMat {
        &self.h[k] * self.h[k].adjoint()
    }
}

/// Uniform linear array response at angle `theta` with half-wavelength spacing.
pub fn steering_vector(n: usize, theta: f64) -> CVec {
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, PI * i as f64 * theta.sin()))
}

fn sample_user(cfg: &SystemConfig, user: usize, rng: &mut ChaCha8Rng) -> CVec {
    let n = cfg.n_antennas;
    let theta = rng.random_range(-0.5 * PI..0.5 * PI);
    let los = steering_vector(n, theta);
    let k = cfg.ricean_k;
    let (w_los, w_nlos) = if k.is_infinite() { (1.0, 0.0) } else { ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt()) };
    let scale = path_loss(cfg, user).sqrt();
    let half = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |i, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        let g = Complex64::new(re * half, im * half);
        (los[i] * w_los + g * w_nlos) * scale
    })
}

/// Draw a Ricean channel pair deterministically from `seed`.
///
/// Each user's vector comes from its own stream, and entries are drawn in
/// antenna order, so the first `N` entries of a draw with more antennas
/// coincide with the draw for `N` antennas.
pub fn sample_channel(cfg: &SystemConfig, seed: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    for attempt in 0..MAX_SAMPLING_ATTEMPTS as u64 {
        let mut draws = [0usize, 1].map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * attempt + k as u64);
            sample_user(cfg, k, &mut rng)
        });
        let h2 = std::mem::replace(&mut draws[1], CVec::zeros(0));
        let h1 = std::mem::replace(&mut draws[0], CVec::zeros(0));
        match ChannelRealization::new(h1, h2, cfg.noise_w) {
            Ok(ch) => return Ok(ch),
            Err(Error::SingularChannel { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ChannelSampling { attempts: MAX_SAMPLING_ATTEMPTS })
}

/// Uplink rate `(1 - tau) log2(1 + p_u / sigma~^2)` in bits/s/Hz.
pub fn uplink_rate(p_u: f64, eff_noise: f64, tau_bar: f64) -> f64 {
    (1.0 - tau_bar) * (p_u / eff_noise).ln_1p() / std::f64::consts::LN_2
}

/// Average harvested power `tau * sum_n beta_n phi(|h_k^H w_n|^2)` per user.
pub fn harvested_power(ch: &ChannelRealization, beams: &[(f64, CVec)], tau_bar: f64, eh: &EhCircuitParams) -> Result<[f64; 2]> {
    let mut out = [0.0; 2];
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (beta, w) in beams {
            if *beta < 0.0 {
                return Err(Error::domain("harvested_power (slot fraction)", *beta));
            }
            acc += beta * phi(ch.received(k, w), eh)?;
        }
        *o = tau_bar * acc;
    }
    Ok(out)
}

/// Energy bookkeeping at the end of the downlink phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyState {
    pub harvested_avg_w: [f64; 2],
    pub available_j: [f64; 2],
}

impl EnergyState {
    pub fn new(cfg: &SystemConfig, harvested_avg_w: [f64; 2]) -> Self {
        let available_j = [0, 1].map(|k| cfg.q_init_j[k] + harvested_avg_w[k] * cfg.t_frame_s);
        EnergyState { harvested_avg_w, available_j }
    }

    /// Whether `(1 - tau) p_u T_f <= E_k` holds for user `k`, with relative slack `rel_tol`.
    pub fn supports(&self, cfg: &SystemConfig, k: usize, p_u: f64, tau_bar: f64, rel_tol: f64) -> bool {
        let spent = (1.0 - tau_bar) * p_u * cfg.t_frame_s;
        spent <= self.available_j[k] + rel_tol * spent.max(self.available_j[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cvec(v: &[(f64, f64)]) -> CVec {
        CVec::from_iterator(v.len(), v.iter().map(|&(r, i)| Complex64::new(r, i)))
    }

    fn zf_residual(ch: &ChannelRealization) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..2 {
            for j in 0..2 {
                let v: Complex64 = ch.zf_rows[k].iter().zip(ch.h[j].iter()).map(|(f, h)| f * h).sum();
                let target = if k == j { 1.0 } else { 0.0 };
                worst = worst.max((v - target).norm());
            }
        }
        worst
    }

    #[test]
    fn path_loss_reference() {
        let cfg = SystemConfig::default();
        // Direct evaluation of the free-space formula with c = 299792458 m/s.
        assert_relative_eq!(path_loss(&cfg, 0), 7.554_091_264_870_047e-6, max_relative = 1e-12);
        let mut far = cfg.clone();
        far.distances_m[0] *= 2.0;
        assert_relative_eq!(path_loss(&far, 0), path_loss(&cfg, 0) / 4.0, max_relative = 1e-14);
        let mut high = cfg.clone();
        high.carrier_hz *= 2.0;
        assert_relative_eq!(path_loss(&high, 1), path_loss(&cfg, 1) / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn dbm_conversion() {
        assert_relative_eq!(dbm_to_watts(-110.0), 1e-14, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn zf_orthogonal_and_identity() {
        let h1 = cvec(&[(2.0, 0.0), (0.0, 0.0), (0.0, 0.0)]);
        let h2 = cvec(&[(0.0, 0.0), (0.0, 3.0), (0.0, 0.0)]);
        let ch = ChannelRealization::new(h1.clone(), h2.clone(), 1e-3).unwrap();
        for (k, hk) in [h1, h2].iter().enumerate() {
            let expect = hk.map(|c| c.conj() / hk.norm_squared());
            assert!((&ch.zf_rows[k] - expect).norm() < 1e-15);
            assert_relative_eq!(ch.eff_noise_w[k], 1e-3 / hk.norm_squared(), max_relative = 1e-14);
        }
        let id = ChannelRealization::new(cvec(&[(1.0, 0.0), (0.0, 0.0)]), cvec(&[(0.0, 0.0), (1.0, 0.0)]), 0.5).unwrap();
        assert_eq!(id.eff_noise_w, [0.5, 0.5]);
        assert!(zf_residual(&id) == 0.0);
    }

    #[test]
    fn zf_rejects_collinear() {
        let h = cvec(&[(1.0, 0.0), (0.5, 0.5)]);
        let err = ChannelRealization::new(h.clone(), h.map(|c| c * Complex64::new(0.0, 2.0)), 1.0).unwrap_err();
        assert!(matches!(err, Error::SingularChannel { .. }));
    }

    #[test]
    fn zf_residual_on_random_realizations() {
        for seed in 0..1000 {
            let cfg = SystemConfig::default().with_antennas(2 + (seed % 7) as usize);
            let ch = sample_channel(&cfg, seed).unwrap();
            let scale = ch.zf_rows[0].norm() * ch.h[0].norm();
            assert!(zf_residual(&ch) <= 1e-10 * scale.max(1.0), "seed {seed}");
            assert!(ch.eff_noise_w.iter().all(|&s| s > 0.0));
        }
    }

    #[test]
    fn sampling_is_deterministic_and_nested() {
        let cfg = SystemConfig::default().with_antennas(4);
        assert_eq!(sample_channel(&cfg, 42).unwrap(), sample_channel(&cfg, 42).unwrap());
        assert_ne!(sample_channel(&cfg, 42).unwrap().h[0], sample_channel(&cfg, 43).unwrap().h[0]);
        let big = sample_channel(&cfg.clone().with_antennas(8), 42).unwrap();
        let small = sample_channel(&cfg, 42).unwrap();
        for k in 0..2 {
            assert_eq!(big.h[k].rows(0, 4), small.h[k]);
        }
    }

    #[test]
    fn pure_line_of_sight_norm() {
        let mut cfg = SystemConfig::default().with_antennas(6);
        cfg.ricean_k = f64::INFINITY;
        let ch = sample_channel(&cfg, 7).unwrap();
        for k in 0..2 {
            assert_relative_eq!(ch.h[k].norm_squared(), path_loss(&cfg, k) * 6.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn rayleigh_mean_gain() {
        let mut cfg = SystemConfig::default().with_antennas(4);
        cfg.ricean_k = 0.0;
        let n = 10_000;
        let mean: f64 = (0..n).map(|s| sample_channel(&cfg, s).unwrap().h[0].norm_squared()).sum::<f64>() / n as f64;
        let expect = path_loss(&cfg, 0) * 4.0;
        assert!((mean / expect - 1.0).abs() < 0.05, "mean gain ratio {}", mean / expect);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(uplink_rate(0.0, 1e-10, 0.3), 0.0);
        assert_relative_eq!(uplink_rate(2e-10, 2e-10, 0.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(uplink_rate(3.0, 1.0, 0.5), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn harvested_power_examples() {
        let cfg = SystemConfig::default();
        let ch = sample_channel(&cfg, 3).unwrap();
        assert_eq!(harvested_power(&ch, &[], 0.5, &cfg.eh).unwrap(), [0.0, 0.0]);

        let a_s = cfg.eh.a_s_sq;
        let h1 = &ch.h[0];
        let w = h1 * Complex64::from(a_s.sqrt() / h1.norm_squared());
        assert_relative_eq!(ch.received(0, &w), a_s, max_relative = 1e-12);
        let p = harvested_power(&ch, &[(1.0, w.clone())], 0.5, &cfg.eh).unwrap();
        assert_relative_eq!(p[0], 0.5 * cfg.eh.saturation_power(), max_relative = 1e-11);

        let merged = harvested_power(&ch, &[(0.6, w.clone())], 0.4, &cfg.eh).unwrap();
        let split = harvested_power(&ch, &[(0.3, w.clone()), (0.3, w)], 0.4, &cfg.eh).unwrap();
        for k in 0..2 {
            assert_relative_eq!(merged[k], split[k], max_relative = 1e-14);
        }
    }

    #[test]
    fn energy_round_trip() {
        let cfg = SystemConfig { q_init_j: [1e-9, 0.0], ..SystemConfig::default() };
        let ch = sample_channel(&cfg, 11).unwrap();
        let w = ch.h[0].map(|c| c * 0.01);
        let tau = 0.3;
        let harvest = harvested_power(&ch, &[(1.0, w)], tau, &cfg.eh).unwrap();
        let state = EnergyState::new(&cfg, harvest);
        for k in 0..2 {
            let p_u = state.available_j[k] / ((1.0 - tau) * cfg.t_frame_s);
            assert!(state.supports(&cfg, k, p_u, tau, 1e-12));
            assert!(!state.supports(&cfg, k, p_u * 1.001, tau, 1e-12));
        }
    }

    proptest! {
        #[test]
        fn harvest_is_phase_invariant(seed in 0u64..200, theta in 0.0f64..(2.0 * PI), scale in 1e-3f64..0.5) {
            let cfg = SystemConfig::default();
            let ch = sample_channel(&cfg, seed).unwrap();
            let w = (&ch.h[0] + &ch.h[1]).map(|c| c * scale);
            let rotated = w.map(|c| c * Complex64::from_polar(1.0, theta));
            let a = harvested_power(&ch, &[(0.7, w)], 0.4, &cfg.eh).unwrap();
            let b = harvested_power(&ch, &[(0.7, rotated)], 0.4, &cfg.eh).unwrap();
            for k in 0..2 {
                prop_assert!((a[k] - b[k]).abs() <= 1e-12 * a[k].abs().max(1e-300));
            }
        }
    }
}
