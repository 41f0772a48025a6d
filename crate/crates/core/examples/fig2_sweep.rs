//! Mean downlink power against the sum-rate target for all schemes,
//! written to `sweep_out/`.
//!
//! `cargo run --release --example fig2_sweep -- [realizations]`

use std::path::Path;

use wpcn::config::{DEFAULT_N_ANTENNAS, DEFAULT_R_SUM};
use wpcn::experiments::{aggregate, run_sweep, write_records_csv, write_summary_csv, Scheme, SweepOptions, SweepPlan};
use wpcn::system::SystemConfig;

fn main() -> wpcn::Result<()> {
    let realizations = std::env::args().nth(1).map_or(20, |s| s.parse().expect("realization count"));
    let plan = SweepPlan {
        n_antennas: DEFAULT_N_ANTENNAS.to_vec(),
        r_sum: DEFAULT_R_SUM.to_vec(),
        schemes: Scheme::ALL.to_vec(),
        realizations,
        master_seed: 1,
    };
    let records = run_sweep(&plan, &SystemConfig::default(), &SweepOptions::default())?;
    let summary = aggregate(&records);
    let out = Path::new("sweep_out");
    std::fs::create_dir_all(out)?;
    write_records_csv(&out.join("records.csv"), &records)?;
    write_summary_csv(&out.join("summary.csv"), &summary)?;

    println!("{:>4} {:>6} {:>9} {:>14} {:>9}", "N_t", "R_sum", "scheme", "mean P_DL", "feasible");
    for row in &summary {
        let p = row.mean_p_dl_w.map_or("-".to_string(), |p| format!("{p:.5e}"));
        println!("{:>4} {:>6.1} {:>9} {:>14} {:>8.0}%", row.n_antennas, row.r_sum_bits, row.scheme.as_str(), p, 100.0 * row.feasible_fraction);
    }
    println!("\n{} records in {}", records.len(), out.display());
    Ok(())
}
