//! Proposed allocation against the sigmoid and linear surrogate designs.
//!
//! `cargo run --release --example baselines_compare`

use wpcn::experiments::{run_scheme, Scheme, SweepOptions};
use wpcn::baselines::default_fit;
use wpcn::system::{sample_channel, SystemConfig};

fn main() -> wpcn::Result<()> {
    let opts = SweepOptions::default();
    let base = SystemConfig::default();
    let fit = default_fit(&base)?;
    println!("{:>5} {:>6} {:>14} {:>14} {:>14}", "seed", "R_sum", "proposed", "sigmoid", "linear");
    for seed in 1..=3 {
        let ch = sample_channel(&base, seed)?;
        for r in [4.0, 12.0, 20.0] {
            let cfg = base.clone().with_rates(0.5 * r, 0.5 * r);
            let cells: Vec<String> = Scheme::ALL
                .iter()
                .map(|&s| match run_scheme(s, &ch, &cfg, Some(&fit), &opts) {
                    Ok(o) => o.allocation().map_or("infeasible".to_string(), |a| format!("{:.5e}", a.p_dl)),
                    Err(e) => format!("error: {e}"),
                })
                .collect();
            println!("{seed:>5} {r:>6.1} {:>14} {:>14} {:>14}", cells[0], cells[1], cells[2]);
        }
    }
    Ok(())
}
