//! Eigenvalue ratios of the converged covariance blocks over random draws.
//!
//! `cargo run --release --example rank_property -- [draws]`

use wpcn::allocator::{allocate, AllocationOutcome, AllocatorOptions};
use wpcn::system::{sample_channel, SystemConfig};

fn main() -> wpcn::Result<()> {
    let draws: u64 = std::env::args().nth(1).map_or(40, |s| s.parse().expect("draw count"));
    let mut ratios = Vec::new();
    for seed in 0..draws {
        let n_t = [2, 4, 8][(seed % 3) as usize];
        let r = 2.0 + (seed % 7) as f64;
        let cfg = SystemConfig::default().with_antennas(n_t).with_rates(r, r);
        let ch = sample_channel(&cfg, seed)?;
        if let AllocationOutcome::Allocated { allocation, .. } = allocate(&ch, &cfg, &AllocatorOptions::default())? {
            ratios.extend(allocation.diagnostics.rank_ratios);
        }
    }
    ratios.sort_by(f64::total_cmp);
    let below = ratios.iter().filter(|&&r| r <= 1e-6).count();
    println!("{} blocks, {below} with lambda2/lambda1 <= 1e-6", ratios.len());
    if let (Some(median), Some(worst)) = (ratios.get(ratios.len() / 2), ratios.last()) {
        println!("median {median:.2e}, worst {worst:.2e}");
    }
    Ok(())
}
