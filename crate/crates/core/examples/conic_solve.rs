//! The built-in complex SDP solver on a small beamforming problem:
//! minimum transmit power with per-user received-power floors.
//!
//! `cargo run --example conic_solve`

use num_complex::Complex64;
use wpcn::conic::{solve, verify_kkt, AffineRow, SdpSubproblem, Sense};
use wpcn::system::CVec;

fn main() -> wpcn::Result<()> {
    let h1 = CVec::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.3, -0.2), Complex64::new(0.0, 0.5)]);
    let h2 = CVec::from_vec(vec![Complex64::new(0.2, 0.1), Complex64::new(1.0, 0.0), Complex64::new(-0.4, 0.0)]);
    let mut sp = SdpSubproblem::new(vec![3], 0);
    sp.set_trace_cost(0, 1.0);
    sp.add_row(AffineRow::new(1, 0, Sense::Ge, 1.0).with_block(0, &h1 * h1.adjoint()));
    sp.add_row(AffineRow::new(1, 0, Sense::Ge, 2.0).with_block(0, &h2 * h2.adjoint()));

    let sol = solve(&sp)?;
    let kkt = verify_kkt(&sp, &sol);
    let eig = sol.v_blocks[0].clone().symmetric_eigenvalues();
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    println!("primal {:.10} dual {:.10}", sol.objective, sol.dual_objective);
    println!("multipliers {:?}", sol.multipliers);
    println!("eigenvalues of V: {:?}", eig.as_slice());
    println!("largest KKT residual {:.2e}", kkt.max_residual());
    Ok(())
}
