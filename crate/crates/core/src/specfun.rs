//! Scalar special functions for the energy-harvesting transfer law.
//!
//! The harvesting law composes the principal Lambert-W branch with the
//! modified Bessel function `I0`. At realistic circuit parameters the
//! intermediate `mu * exp(mu) * I0(t)` is around `e^44`, so everything here
//! has a log-domain counterpart and the composed quantities never form the
//! large intermediates explicitly.

use std::f64::consts::{E, PI};

use crate::error::{Error, Result};

/// Crossover between the power series and the large-argument expansion of `I0`/`I1`.
const BESSEL_SERIES_LIMIT: f64 = 20.0;

/// A strictly positive real stored as its natural logarithm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogDomainValue(f64);

impl LogDomainValue {
    pub fn from_ln(log_magnitude: f64) -> Self {
        LogDomainValue(log_magnitude)
    }

    /// Panics on non-positive input.
    pub fn from_value(value: f64) -> Self {
        assert!(value > 0.0, "log-domain values must be strictly positive");
        LogDomainValue(value.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    /// Leaves the log domain. May overflow to infinity.
    pub fn exp(self) -> f64 {
        self.0.exp()
    }

    pub fn mul(self, other: LogDomainValue) -> LogDomainValue {
        LogDomainValue(self.0 + other.0)
    }
}

/// Principal branch `W0` of the Lambert-W function.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch - 1e-12 {
        return Err(Error::domain("lambert_w0", x));
    }
    if x <= branch {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = if x < -0.25 {
        // Expansion around the branch point.
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 1e3 {
        // Winitzki's approximation.
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };

    for _ in 0..64 {
        if w + 1.0 < 1e-9 {
            break;
        }
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w.abs().max(1e-300) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

/// `W0(exp(l))` without forming `exp(l)`.
///
/// For `l > 1` this solves `w + ln w = l` directly; smaller arguments go
/// through [`lambert_w0`].
pub fn lambert_w0_of_exp(l: LogDomainValue) -> f64 {
    let l = l.ln();
    if l <= 1.0 {
        return lambert_w0(l.exp()).expect("exp(l) is positive");
    }
    let ll = l.ln();
    let mut w = l - ll + ll / l;
    for _ in 0..64 {
        let g = w + w.ln() - l;
        let gp = 1.0 + 1.0 / w;
        let gpp = -1.0 / (w * w);
        // Halley step.
        let step = g / (gp - 0.5 * g * gpp / gp);
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * w {
            break;
        }
    }
    w
}

/// Sum of `I0` power-series terms for `m >= 1`, i.e. `I0(t) - 1`.
fn i0_series_tail(t: f64) -> f64 {
    let q = 0.25 * t * t;
    let mut term = 1.0;
    let mut sum = 0.0;
    for m in 1..500 {
        let m = m as f64;
        term *= q / (m * m);
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    sum
}

/// `I1(t) / t` by its power series.
fn i1_series_over_t(t: f64) -> f64 {
    let q = 0.25 * t * t;
    let mut term = 0.5;
    let mut sum = term;
    for m in 1..500 {
        let m = m as f64;
        term *= q / (m * (m + 1.0));
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Large-argument expansion `sum_k c_k / t^k` of `I_order(t) * sqrt(2 pi t) * e^-t`.
fn bessel_asymptotic_sum(order: u32, t: f64) -> f64 {
    let four_nu_sq = 4.0 * f64::from(order * order);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        term *= (odd * odd - four_nu_sq) / (8.0 * k as f64 * t);
        if term.abs() > last {
            break;
        }
        sum += term;
        last = term.abs();
        if last <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn check_nonnegative(function: &'static str, t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        Err(Error::domain(function, t))
    } else {
        Ok(())
    }
}

/// Modified Bessel function of the first kind, order zero.
pub fn bessel_i0(t: f64) -> Result<f64> {
    check_nonnegative("bessel_i0", t)?;
    if t <= BESSEL_SERIES_LIMIT {
        Ok(1.0 + i0_series_tail(t))
    } else {
        Ok(t.exp() / (2.0 * PI * t).sqrt() * bessel_asymptotic_sum(0, t))
    }
}

/// Natural logarithm of `I0(t)`, valid for arguments where `I0` overflows.
pub fn log_bessel_i0(t: f64) -> Result<LogDomainValue> {
    check_nonnegative("log_bessel_i0", t)?;
    let ln = if t <= BESSEL_SERIES_LIMIT {
        i0_series_tail(t).ln_1p()
    } else {
        t - 0.5 * (2.0 * PI * t).ln() + bessel_asymptotic_sum(0, t).ln()
    };
    Ok(LogDomainValue(ln))
}

/// `I1(t) / I0(t)`, which is also the derivative of `ln I0(t)`.
pub fn bessel_i1_over_i0(t: f64) -> Result<f64> {
    check_nonnegative("bessel_i1_over_i0", t)?;
    if t <= BESSEL_SERIES_LIMIT {
        Ok(t * i1_series_over_t(t) / (1.0 + i0_series_tail(t)))
    } else {
        Ok(bessel_asymptotic_sum(1, t) / bessel_asymptotic_sum(0, t))
    }
}

/// `I1(t) / (t * I0(t))`, finite at `t = 0` where it equals one half.
pub(crate) fn bessel_i1_over_t_i0(t: f64) -> f64 {
    if t <= BESSEL_SERIES_LIMIT {
        i1_series_over_t(t) / (1.0 + i0_series_tail(t))
    } else {
        bessel_asymptotic_sum(1, t) / (t * bessel_asymptotic_sum(0, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Reference values computed with 60-digit mpmath.
    const I0_AT_1: f64 = 1.266_065_877_752_008_3;
    const I0_AT_20: f64 = 43_558_282.559_553_533;
    const LOG_I0_AT_44: f64 = 41.191_840_634_709_27;
    const LOG_I0_AT_500: f64 = 495.974_007_668_106_7;
    const RATIO_AT_2: f64 = 0.697_774_657_964_007_98;
    const RATIO_AT_20: f64 = 0.974_670_507_889_807_1;
    const RATIO_AT_100: f64 = 0.994_987_373_005_168_8;
    const W_LOG_43: f64 = 39.328_061_697_816_336;

    #[test]
    fn lambert_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_relative_eq!(lambert_w0(E).unwrap(), 1.0, max_relative = 1e-14);
        let mu: f64 = 1.85;
        assert_relative_eq!(lambert_w0(mu * mu.exp()).unwrap(), mu, max_relative = 1e-13);
        assert_relative_eq!(lambert_w0(1e6).unwrap(), 11.383_358_086_140_053, max_relative = 1e-13);
        assert_relative_eq!(lambert_w0(-0.3).unwrap(), -0.489_402_227_180_214_97, max_relative = 1e-12);
        assert_eq!(lambert_w0(-1.0 / E).unwrap(), -1.0);
    }

    #[test]
    fn lambert_rejects_below_branch_point() {
        assert!(lambert_w0(-1.0 / E - 1e-9).is_err());
        assert!(lambert_w0(-1.0 / E - 1e-13).is_ok());
    }

    #[test]
    fn lambert_of_exp_matches_direct() {
        assert_relative_eq!(lambert_w0_of_exp(LogDomainValue::from_ln(1.0)), 1.0, max_relative = 1e-14);
        let mu: f64 = 1.85;
        let l = LogDomainValue::from_ln(mu.ln() + mu);
        assert_relative_eq!(lambert_w0_of_exp(l), mu, max_relative = 1e-13);
        assert_relative_eq!(lambert_w0_of_exp(LogDomainValue::from_ln(43.0)), W_LOG_43, max_relative = 1e-14);
        for l in [1.5, 3.0, 10.0, 50.0, 300.0] {
            let direct = lambert_w0(f64::exp(l)).unwrap();
            assert_relative_eq!(lambert_w0_of_exp(LogDomainValue::from_ln(l)), direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn bessel_reference_values() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        assert_relative_eq!(bessel_i0(1.0).unwrap(), I0_AT_1, max_relative = 1e-14);
        assert_relative_eq!(bessel_i0(20.0).unwrap(), I0_AT_20, max_relative = 1e-13);
        assert_relative_eq!(log_bessel_i0(44.0).unwrap().ln(), LOG_I0_AT_44, max_relative = 1e-14);
        assert_relative_eq!(log_bessel_i0(500.0).unwrap().ln(), LOG_I0_AT_500, max_relative = 1e-14);
        assert!(bessel_i0(-1.0).is_err());
        assert!(log_bessel_i0(-1e-3).is_err());
    }

    #[test]
    fn bessel_expansions_agree_at_crossover() {
        let below = 1.0 + i0_series_tail(BESSEL_SERIES_LIMIT);
        let above = BESSEL_SERIES_LIMIT.exp() / (2.0 * PI * BESSEL_SERIES_LIMIT).sqrt()
            * bessel_asymptotic_sum(0, BESSEL_SERIES_LIMIT);
        assert_relative_eq!(below, above, max_relative = 1e-12);
    }

    #[test]
    fn ratio_reference_values() {
        assert_eq!(bessel_i1_over_i0(0.0).unwrap(), 0.0);
        assert_relative_eq!(bessel_i1_over_i0(2.0).unwrap(), RATIO_AT_2, max_relative = 1e-13);
        assert_relative_eq!(bessel_i1_over_i0(20.0).unwrap(), RATIO_AT_20, max_relative = 1e-12);
        assert_relative_eq!(bessel_i1_over_i0(100.0).unwrap(), RATIO_AT_100, max_relative = 1e-13);
        assert_relative_eq!(bessel_i1_over_i0(1e-6).unwrap(), 5e-7, max_relative = 1e-10);
        assert!(bessel_i1_over_i0(-0.5).is_err());
    }

    #[test]
    fn log_i0_monotone_and_convex() {
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 * 0.1).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| log_bessel_i0(t).unwrap().ln()).collect();
        for w in vals.windows(3) {
            assert!(w[1] >= w[0]);
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
        }
    }

    #[test]
    fn ratio_is_derivative_of_log_i0() {
        let mut t: f64 = 0.1;
        while t <= 200.0 {
            let h = 1e-4 * t.max(1.0);
            let fd = (log_bessel_i0(t + h).unwrap().ln() - log_bessel_i0(t - h).unwrap().ln()) / (2.0 * h);
            let r = bessel_i1_over_i0(t).unwrap();
            assert_relative_eq!(r, fd, max_relative = 1e-6);
            t *= 1.07;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn lambert_inverts_w_exp_w(x in -1.0 / E..1e6) {
            let w = lambert_w0(x).unwrap();
            prop_assert!(w >= -1.0);
            prop_assert!((w * w.exp() - x).abs() <= 1e-10 * x.abs().max(1.0));
        }

        #[test]
        fn lambert_of_exp_solves_log_form(l in 2.0f64..500.0) {
            let w = lambert_w0_of_exp(LogDomainValue::from_ln(l));
            prop_assert!((w + w.ln() - l).abs() <= 1e-10 * l);
        }
    }
}
