//! Circuit EH law next to its sigmoid and linear fits.
//!
//! `cargo run --example eh_curve`

use wpcn::eh_model::{fit_surrogates, phi, phi_inverse, EhCircuitParams, DEFAULT_FIT_GRID};

fn main() -> wpcn::Result<()> {
    let p = EhCircuitParams::default();
    let fit = fit_surrogates(&p, DEFAULT_FIT_GRID)?;
    println!("saturation: A_s^2 = {:e} W, phi(A_s^2) = {:e} W", p.a_s_sq, p.saturation_power());
    println!("sigmoid fit: M = {:e}, a = {:e}, b = {:e} (rms {:e})", fit.sigmoid.m_sat, fit.sigmoid.a, fit.sigmoid.b, fit.sigmoid_rms);
    println!("linear fit: eta = {:.4} (rms {:e})", fit.linear.eta, fit.linear_rms);
    println!("\n{:>12} {:>12} {:>12} {:>12} {:>8}", "x [W]", "phi", "sigmoid", "linear", "phi/x");
    for i in 0..=10 {
        let x = p.a_s_sq * i as f64 / 10.0;
        let y = phi(x, &p)?;
        let eff = if x > 0.0 { y / x } else { 0.0 };
        println!("{x:>12.4e} {y:>12.4e} {:>12.4e} {:>12.4e} {eff:>8.4}", fit.sigmoid.eval(x), fit.linear.eval(x));
    }
    let half = 0.5 * p.saturation_power();
    println!("\nhalf of the ceiling needs x = {:e} W", phi_inverse(half, &p)?);
    Ok(())
}
