//! Minimum downlink power allocation for one channel draw.
//!
//! `cargo run --release --example allocate_single -- [seed] [R1] [R2]`

use wpcn::allocator::{allocate, AllocationOutcome, AllocatorOptions};
use wpcn::system::{sample_channel, SystemConfig};

fn main() -> wpcn::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let seed = args.first().copied().unwrap_or(1.0) as u64;
    let cfg = SystemConfig::default().with_rates(args.get(1).copied().unwrap_or(4.0), args.get(2).copied().unwrap_or(4.0));
    let ch = sample_channel(&cfg, seed)?;
    match allocate(&ch, &cfg, &AllocatorOptions::default())? {
        AllocationOutcome::Trivial(a) => println!("stored energy suffices, p_u = {:?}", a.p_u),
        AllocationOutcome::Infeasible(v) => println!("infeasible: {v:?}"),
        AllocationOutcome::Allocated { allocation: a, curve } => {
            println!("{:>10} {:>14} {:>6}", "tau", "P_DL [W]", "iters");
            for p in &curve {
                match p.p_dl {
                    Some(v) => println!("{:>10.5} {v:>14.6e} {:>6}", p.tau_bar, p.sca_iterations),
                    None => println!("{:>10.5} {:>14} {}", p.tau_bar, "-", p.error.as_deref().unwrap_or("")),
                }
            }
            println!("\nbest tau = {:.5}, P_DL = {:.6e} W", a.tau_bar, a.p_dl);
            println!("uplink powers {:?} W, rates {:?}", a.p_u, a.achieved_rates);
            for (n, s) in a.slots.iter().enumerate() {
                println!("slot {n}: beta {:.4e}, |w|^2 {:.4e} W, received {:?}", s.beta, s.w.norm_squared(), s.received);
            }
            println!("rank ratios {:?}", a.diagnostics.rank_ratios);
        }
    }
    Ok(())
}
