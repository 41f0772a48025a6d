//! Monte-Carlo sweeps over antenna count, sum rate and scheme, with
//! aggregation and CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocator::{allocate, AllocationOutcome, AllocatorOptions};
use crate::baselines::{baseline_allocate, default_fit, SurrogateModel};
use crate::eh_model::SurrogateFit;
use crate::error::{Error, Result};
use crate::system::{sample_channel, ChannelRealization, SystemConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Proposed,
    Sigmoid,
    Linear,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Proposed, Scheme::Sigmoid, Scheme::Linear];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Sigmoid => "sigmoid",
            Scheme::Linear => "linear",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scheme '{s}' (expected proposed, sigmoid or linear)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub n_antennas: Vec<usize>,
    /// Sum rates, split equally between the users.
    pub r_sum: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub realizations: usize,
    pub master_seed: u64,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_antennas.is_empty() || self.r_sum.is_empty() || self.schemes.is_empty() {
            return Err(Error::InvalidConfig("sweep lists must be non-empty".into()));
        }
        if self.realizations == 0 {
            return Err(Error::InvalidConfig("at least one realization is required".into()));
        }
        if let Some(&n) = self.n_antennas.iter().find(|&&n| n < 2) {
            return Err(Error::InvalidConfig(format!("antenna count {n} below 2")));
        }
        if let Some(r) = self.r_sum.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
            return Err(Error::InvalidConfig(format!("invalid sum rate {r}")));
        }
        Ok(())
    }
}

/// Seed of realization `index`, independent of the antenna count so that
/// channels are nested across antenna counts.
pub fn child_seed(master: u64, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Infeasible,
    Trivial,
    SolverError,
}

/// One scheme run on one channel at one sum rate. Field order is the CSV
/// column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub seed: u64,
    pub realization_id: usize,
    pub n_antennas: usize,
    pub r_sum_bits: f64,
    pub scheme: Scheme,
    pub status: RecordStatus,
    pub tau_bar: Option<f64>,
    pub p_dl_w: Option<f64>,
    pub p_u1_w: Option<f64>,
    pub p_u2_w: Option<f64>,
    pub n_active_slots: Option<usize>,
    pub sca_iterations: Option<usize>,
    pub wall_ms: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub eps_tau: f64,
    pub eps_sca: f64,
    /// Worker threads; `0` uses the rayon default.
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { eps_tau: 0.1, eps_sca: 1e-4, jobs: 0 }
    }
}

/// Run one scheme and map the outcome onto record fields.
pub fn run_scheme(
    scheme: Scheme,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
    fit: Option<&SurrogateFit>,
    opts: &SweepOptions,
) -> Result<AllocationOutcome> {
    match scheme {
        Scheme::Proposed => {
            let a = AllocatorOptions { eps_tau: opts.eps_tau, eps_sca: opts.eps_sca, ..Default::default() };
            allocate(ch, cfg, &a)
        }
        Scheme::Sigmoid | Scheme::Linear => {
            let model = if scheme == Scheme::Sigmoid { SurrogateModel::Sigmoid } else { SurrogateModel::Linear };
            let fit = fit.ok_or_else(|| Error::InvalidConfig("baseline schemes need a surrogate fit".into()))?;
            baseline_allocate(ch, cfg, fit, model, opts.eps_tau)
        }
    }
}

fn record_for(
    seed: u64,
    realization_id: usize,
    n_antennas: usize,
    r_sum: f64,
    scheme: Scheme,
    outcome: Result<AllocationOutcome>,
    wall_ms: f64,
) -> ExperimentRecord {
    let mut rec = ExperimentRecord {
        seed,
        realization_id,
        n_antennas,
        r_sum_bits: r_sum,
        scheme,
        status: RecordStatus::SolverError,
        tau_bar: None,
        p_dl_w: None,
        p_u1_w: None,
        p_u2_w: None,
        n_active_slots: None,
        sca_iterations: None,
        wall_ms,
        detail: String::new(),
    };
    let fill = |rec: &mut ExperimentRecord, a: &crate::allocator::ResourceAllocation| {
        rec.tau_bar = Some(a.tau_bar);
        rec.p_dl_w = Some(a.p_dl);
        rec.p_u1_w = Some(a.p_u[0]);
        rec.p_u2_w = Some(a.p_u[1]);
        rec.n_active_slots = Some(a.active_slots());
        rec.sca_iterations = Some(a.diagnostics.sca_iterations);
    };
    match outcome {
        Ok(AllocationOutcome::Allocated { allocation, .. }) => {
            rec.status = RecordStatus::Ok;
            fill(&mut rec, &allocation);
        }
        Ok(AllocationOutcome::Trivial(allocation)) => {
            rec.status = RecordStatus::Trivial;
            fill(&mut rec, &allocation);
        }
        Ok(AllocationOutcome::Infeasible(_)) => rec.status = RecordStatus::Infeasible,
        // A baseline whose every grid point is infeasible under the circuit law.
        Err(Error::AllGridPointsFailed { failures }) if scheme != Scheme::Proposed => {
            rec.detail = failures.first().map(|f| f.1.clone()).unwrap_or_default();
            rec.status = if failures.iter().all(|f| f.1.contains("infeasible")) { RecordStatus::Infeasible } else { RecordStatus::SolverError };
        }
        Err(e) => rec.detail = e.to_string(),
    }
    rec
}

/// Run every (realization, antenna count, sum rate, scheme) combination.
///
/// Each realization draws one channel per antenna count and reuses it for
/// every sum rate and scheme. Records are sorted by realization, antenna
/// count, sum-rate index and scheme index, so the output does not depend on
/// the number of workers.
pub fn run_sweep(plan: &SweepPlan, base: &SystemConfig, opts: &SweepOptions) -> Result<Vec<ExperimentRecord>> {
    plan.validate()?;
    base.validate()?;
    let needs_fit = plan.schemes.iter().any(|&s| s != Scheme::Proposed);
    let fit = if needs_fit { Some(default_fit(base)?) } else { None };
    let tasks: Vec<(usize, usize)> = (0..plan.realizations).flat_map(|r| plan.n_antennas.iter().map(move |&n| (r, n))).collect();

    let run_task = |&(r, n_t): &(usize, usize)| -> Vec<(usize, usize, usize, usize, ExperimentRecord)> {
        let seed = child_seed(plan.master_seed, r);
        let cfg_nt = base.clone().with_antennas(n_t);
        let channel = sample_channel(&cfg_nt, seed);
        let mut out = Vec::new();
        for (ri, &r_sum) in plan.r_sum.iter().enumerate() {
            let cfg = cfg_nt.clone().with_rates(0.5 * r_sum, 0.5 * r_sum);
            for (si, &scheme) in plan.schemes.iter().enumerate() {
                let start = Instant::now();
                let outcome = match &channel {
                    Ok(ch) => run_scheme(scheme, ch, &cfg, fit.as_ref(), opts),
                    Err(e) => Err(Error::InvalidConfig(format!("channel sampling failed: {e}"))),
                };
                let ms = start.elapsed().as_secs_f64() * 1e3;
                out.push((r, n_t, ri, si, record_for(seed, r, n_t, r_sum, scheme, outcome, ms)));
            }
        }
        out
    };

    let mut keyed: Vec<_> = if opts.jobs == 1 {
        tasks.iter().flat_map(run_task).collect()
    } else {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if opts.jobs > 0 {
            builder = builder.num_threads(opts.jobs);
        }
        let pool = builder.build().map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| tasks.par_iter().flat_map_iter(run_task).collect())
    };
    keyed.sort_by_key(|(r, n, ri, si, _)| (*r, *n, *ri, *si));
    Ok(keyed.into_iter().map(|k| k.4).collect())
}

/// Per-cell statistics over `(n_antennas, r_sum, scheme)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n_antennas: usize,
    pub r_sum_bits: f64,
    pub scheme: Scheme,
    pub n_records: usize,
    pub n_ok: usize,
    pub feasible_fraction: f64,
    /// Mean downlink power over records with an allocation; empty when none.
    pub mean_p_dl_w: Option<f64>,
    pub mean_sca_iterations: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn aggregate(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(usize, u64, Scheme), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.n_antennas, r.r_sum_bits.to_bits(), r.scheme)).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = cells
        .into_values()
        .map(|group| {
            let first = group[0];
            let p: Vec<f64> = group.iter().filter_map(|r| r.p_dl_w).collect();
            let it: Vec<f64> = group.iter().filter_map(|r| r.sca_iterations.map(|i| i as f64)).collect();
            SummaryRow {
                n_antennas: first.n_antennas,
                r_sum_bits: first.r_sum_bits,
                scheme: first.scheme,
                n_records: group.len(),
                n_ok: p.len(),
                feasible_fraction: p.len() as f64 / group.len() as f64,
                mean_p_dl_w: mean(&p),
                mean_sca_iterations: mean(&it),
            }
        })
        .collect();
    rows.sort_by(|a, b| (a.n_antennas, a.r_sum_bits, a.scheme).partial_cmp(&(b.n_antennas, b.r_sum_bits, b.scheme)).expect("finite rates"));
    rows
}

/// Downlink powers of two schemes on the same channel and sum rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedDelta {
    pub realization_id: usize,
    pub n_antennas: usize,
    pub r_sum_bits: f64,
    pub p_a: f64,
    pub p_b: f64,
}

/// Cells where both schemes produced an allocation.
pub fn paired_deltas(records: &[ExperimentRecord], a: Scheme, b: Scheme) -> Vec<PairedDelta> {
    let mut index: BTreeMap<(usize, usize, u64), f64> = BTreeMap::new();
    for r in records.iter().filter(|r| r.scheme == b) {
        if let Some(p) = r.p_dl_w {
            index.insert((r.realization_id, r.n_antennas, r.r_sum_bits.to_bits()), p);
        }
    }
    records
        .iter()
        .filter(|r| r.scheme == a)
        .filter_map(|r| {
            let p_a = r.p_dl_w?;
            let p_b = *index.get(&(r.realization_id, r.n_antennas, r.r_sum_bits.to_bits()))?;
            Some(PairedDelta { realization_id: r.realization_id, n_antennas: r.n_antennas, r_sum_bits: r.r_sum_bits, p_a, p_b })
        })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    write_csv(path, records)
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(path, rows)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
