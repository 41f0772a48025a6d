//! TOML experiment configuration.
//!
//! Every key is optional; missing keys take the reference values. Per-user
//! quantities accept either a scalar (both users) or a two-element array.
//!
//! ```toml
//! n_antennas = 4
//! carrier_hz = 868e6
//! distance_m = 10.0
//! noise_dbm = -110.0
//! ricean_k = 1.0
//! t_frame_s = 1.0
//! q_init_j = 0.0
//! r_req_bits = [2.0, 3.0]
//! seed = 1
//! n_realizations = 100
//! eps_sca = 1e-4
//! eps_tau = 0.1
//!
//! [eh]
//! mu = 1.85
//! nu = 2.2e3
//! lambda = 2.5e-7
//! a_s_sq = 2e-4
//!
//! [sweep]
//! n_antennas = [4, 8]
//! r_sum = [2.0, 6.0, 10.0]
//! schemes = ["proposed", "sigmoid", "linear"]
//! ```

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eh_model::EhCircuitParams;
use crate::error::{Error, Result};
use crate::experiments::{Scheme, SweepPlan};
use crate::system::{dbm_to_watts, CVec, ChannelRealization, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum PerUser {
    Same(f64),
    Each([f64; 2]),
}

impl PerUser {
    pub fn pair(self) -> [f64; 2] {
        match self {
            PerUser::Same(v) => [v, v],
            PerUser::Each(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EhSection {
    mu: Option<f64>,
    nu: Option<f64>,
    lambda: Option<f64>,
    a_s_sq: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    n_antennas: Option<Vec<usize>>,
    r_sum: Option<Vec<f64>>,
    schemes: Option<Vec<Scheme>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n_antennas: Option<usize>,
    carrier_hz: Option<f64>,
    distance_m: Option<PerUser>,
    noise_dbm: Option<f64>,
    ricean_k: Option<f64>,
    t_frame_s: Option<f64>,
    q_init_j: Option<PerUser>,
    r_req_bits: Option<PerUser>,
    seed: Option<u64>,
    n_realizations: Option<usize>,
    eps_sca: Option<f64>,
    eps_tau: Option<f64>,
    #[serde(default)]
    eh: EhSection,
    #[serde(default)]
    sweep: SweepSection,
}

/// Default sum-rate grid in bits/s/Hz.
pub const DEFAULT_R_SUM: [f64; 8] = [2.0, 6.0, 10.0, 14.0, 18.0, 22.0, 26.0, 30.0];
pub const DEFAULT_N_ANTENNAS: [usize; 2] = [4, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub eps_sca: f64,
    pub eps_tau: f64,
    pub plan: SweepPlan,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig::default(),
            eps_sca: 1e-4,
            eps_tau: 0.1,
            plan: SweepPlan {
                n_antennas: DEFAULT_N_ANTENNAS.to_vec(),
                r_sum: DEFAULT_R_SUM.to_vec(),
                schemes: Scheme::ALL.to_vec(),
                realizations: 100,
                master_seed: 1,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut c = ExperimentConfig::default();
        let s = &mut c.system;
        if let Some(v) = raw.n_antennas {
            s.n_antennas = v;
        }
        if let Some(v) = raw.carrier_hz {
            s.carrier_hz = v;
        }
        if let Some(v) = raw.distance_m {
            s.distances_m = v.pair();
        }
        if let Some(v) = raw.noise_dbm {
            s.noise_w = dbm_to_watts(v);
        }
        if let Some(v) = raw.ricean_k {
            s.ricean_k = v;
        }
        if let Some(v) = raw.t_frame_s {
            s.t_frame_s = v;
        }
        if let Some(v) = raw.q_init_j {
            s.q_init_j = v.pair();
        }
        if let Some(v) = raw.r_req_bits {
            s.r_req = v.pair();
        }
        let d = EhCircuitParams::default();
        s.eh = EhCircuitParams {
            mu: raw.eh.mu.unwrap_or(d.mu),
            nu: raw.eh.nu.unwrap_or(d.nu),
            lambda: raw.eh.lambda.unwrap_or(d.lambda),
            a_s_sq: raw.eh.a_s_sq.unwrap_or(d.a_s_sq),
        };
        if let Some(v) = raw.eps_sca {
            c.eps_sca = v;
        }
        if let Some(v) = raw.eps_tau {
            c.eps_tau = v;
        }
        if let Some(v) = raw.seed {
            c.plan.master_seed = v;
        }
        if let Some(v) = raw.n_realizations {
            c.plan.realizations = v;
        }
        if let Some(v) = raw.sweep.n_antennas {
            c.plan.n_antennas = v;
        }
        if let Some(v) = raw.sweep.r_sum {
            c.plan.r_sum = v;
        }
        if let Some(v) = raw.sweep.schemes {
            c.plan.schemes = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if !(self.eps_sca > 0.0 && self.eps_tau > 0.0) {
            return Err(Error::InvalidConfig(format!("tolerances must be positive: eps_sca={}, eps_tau={}", self.eps_sca, self.eps_tau)));
        }
        self.plan.validate()
    }
}

/// Channel pair stored as JSON, entries as `[re, im]`:
/// `{"h1": [[re, im], ...], "h2": [[re, im], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelFile {
    pub h1: Vec<[f64; 2]>,
    pub h2: Vec<[f64; 2]>,
}

impl ChannelFile {
    pub fn from_channel(ch: &ChannelRealization) -> Self {
        let pack = |h: &CVec| h.iter().map(|z| [z.re, z.im]).collect();
        ChannelFile { h1: pack(&ch.h[0]), h2: pack(&ch.h[1]) }
    }

    pub fn realize(&self, noise_w: f64) -> Result<ChannelRealization> {
        let unpack = |v: &[[f64; 2]]| CVec::from_iterator(v.len(), v.iter().map(|p| Complex64::new(p[0], p[1])));
        ChannelRealization::new(unpack(&self.h1), unpack(&self.h2), noise_w)
    }

    pub fn load(path: &Path, noise_w: f64) -> Result<ChannelRealization> {
        let file: ChannelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.realize(noise_w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_file_round_trip() {
        let cfg = SystemConfig::default();
        let ch = crate::system::sample_channel(&cfg, 4).unwrap();
        let text = serde_json::to_string(&ChannelFile::from_channel(&ch)).unwrap();
        let back: ChannelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.realize(cfg.noise_w).unwrap(), ch);
        let bad = ChannelFile { h1: vec![[1.0, 0.0]; 3], h2: vec![[1.0, 0.0]; 2] };
        assert!(bad.realize(cfg.noise_w).is_err());
    }

    #[test]
    fn empty_file_gives_reference_setup() {
        let c = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.system.noise_w, dbm_to_watts(-110.0));
        assert_eq!(c.system.distances_m, [10.0, 10.0]);
    }

    #[test]
    fn scalar_or_pair_per_user() {
        let c = ExperimentConfig::from_toml_str("distance_m = [8.0, 12.0]\nr_req_bits = 3.0\nq_init_j = [0.0, 1e-6]").unwrap();
        assert_eq!(c.system.distances_m, [8.0, 12.0]);
        assert_eq!(c.system.r_req, [3.0, 3.0]);
        assert_eq!(c.system.q_init_j, [0.0, 1e-6]);
    }

    #[test]
    fn sections_and_rejections() {
        let c = ExperimentConfig::from_toml_str("seed = 9\n[eh]\nmu = 2.0\n[sweep]\nn_antennas = [2]\nschemes = [\"linear\"]").unwrap();
        assert_eq!(c.plan.master_seed, 9);
        assert_eq!(c.system.eh.mu, 2.0);
        assert_eq!(c.plan.n_antennas, vec![2]);
        assert_eq!(c.plan.schemes, vec![Scheme::Linear]);
        assert!(ExperimentConfig::from_toml_str("antennas = 4").is_err());
        assert!(ExperimentConfig::from_toml_str("n_antennas = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("eps_tau = 0.0").is_err());
        assert!(ExperimentConfig::from_toml_str("[sweep]\nr_sum = []").is_err());
    }
}
