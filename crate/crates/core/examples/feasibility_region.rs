//! Where the sum-rate target stops being reachable for one channel.
//!
//! `cargo run --example feasibility_region -- [seed]`

use wpcn::feasibility::{check_feasibility, FeasibilityStatus};
use wpcn::system::{sample_channel, SystemConfig};

fn main() -> wpcn::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(7), |s| s.parse()).expect("seed must be an integer");
    let base = SystemConfig::default();
    let ch = sample_channel(&base, seed)?;
    println!("seed {seed}: effective noise {:.3e} / {:.3e} W, condition {:.2}", ch.eff_noise_w[0], ch.eff_noise_w[1], ch.condition);
    println!("{:>6} {:>12} {:>10} {:>10}", "R_sum", "status", "tau_min", "tau_max");
    for i in 1..=20 {
        let r = 2.0 * i as f64;
        let cfg = base.clone().with_rates(0.5 * r, 0.5 * r);
        let v = check_feasibility(&cfg, &ch);
        match (v.status, v.interval) {
            (FeasibilityStatus::NonTrivial, Some(iv)) => println!("{r:>6.1} {:>12} {:>10.5} {:>10.5}", "non-trivial", iv.tau_min, iv.tau_max),
            (status, _) => println!("{r:>6.1} {:>12?}", status),
        }
    }
    Ok(())
}
