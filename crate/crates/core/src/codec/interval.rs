//! Logarithmic discretization of time intervals.
//!
//! A gap of `dt` minutes falls in bin `tau = floor(log_1.5(dt)) + 1`, so bin
//! `tau` covers `[1.5^(tau-1), 1.5^tau)` minutes.

use super::CodecError;

pub const INTERVAL_BASE: f64 = 1.5;

/// Shortest gap present in the source data, in minutes.
pub const DEFAULT_MIN_MINUTES: u32 = 10;

/// `dt >= 1.5^j`, decided exactly as `dt * 2^j >= 3^j`; both sides are exact
/// in f64 for every bin that fits a day.
fn reaches_edge(dt: f64, j: u32) -> bool {
    dt * 2f64.powi(j as i32) >= 3f64.powi(j as i32)
}

/// Interval bin for a gap of `dt` minutes.
pub fn discretize_interval(dt: f64) -> Result<u32, CodecError> {
    if !dt.is_finite() || dt < 1.0 {
        return Err(CodecError::NonPositiveInterval(dt));
    }
    // The logarithm can land on the wrong side of an edge; settle it exactly.
    let mut tau = (dt.ln() / INTERVAL_BASE.ln()).floor().max(0.0) as u32 + 1;
    while tau > 1 && !reaches_edge(dt, tau - 1) {
        tau -= 1;
    }
    while reaches_edge(dt, tau) {
        tau += 1;
    }
    Ok(tau)
}

/// Minutes standing in for a whole bin: the geometric midpoint
/// `1.5^(tau - 0.5)` rounded to a minute and clamped below by `floor`.
pub fn representative_minutes(tau: u32, floor: u32) -> u32 {
    let mid = INTERVAL_BASE.powf(tau.max(1) as f64 - 0.5).round() as u32;
    mid.max(floor)
}

/// Whether `representative_minutes(tau, floor)` is the unclamped midpoint.
pub fn representative_is_unclamped(tau: u32, floor: u32) -> bool {
    (INTERVAL_BASE.powf(tau.max(1) as f64 - 0.5).round() as u32) >= floor
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bin index computed by repeated multiplication instead of logarithms.
    fn bin_by_powers(dt: f64) -> u32 {
        let mut edge = 1.0f64;
        let mut tau = 1;
        while dt >= edge * 1.5 {
            edge *= 1.5;
            tau += 1;
        }
        tau
    }

    #[test]
    fn known_bins() {
        assert_eq!(discretize_interval(30.0).unwrap(), 9);
        assert_eq!(discretize_interval(10.0).unwrap(), 6);
        assert_eq!(discretize_interval(43.0).unwrap(), 10);
        assert_eq!(discretize_interval(1.0).unwrap(), 1);
        for dt in [30.0, 10.0, 43.0, 1.0] {
            assert_eq!(discretize_interval(dt).unwrap(), bin_by_powers(dt));
        }
    }

    #[test]
    fn rejects_short_gaps() {
        assert!(discretize_interval(0.0).is_err());
        assert!(discretize_interval(0.5).is_err());
        assert!(discretize_interval(-3.0).is_err());
        assert!(discretize_interval(f64::NAN).is_err());
    }

    #[test]
    fn bin_edges() {
        for k in 1..=17 {
            let edge = 1.5f64.powi(k);
            assert_eq!(discretize_interval(edge - 1e-6).unwrap(), k as u32, "below edge {k}");
            assert_eq!(discretize_interval(edge + 1e-6).unwrap(), k as u32 + 1, "above edge {k}");
            assert_eq!(discretize_interval(edge).unwrap(), k as u32 + 1, "on edge {k}");
            let below = f64::from_bits(edge.to_bits() - 1);
            assert_eq!(discretize_interval(below).unwrap(), k as u32, "one ulp below edge {k}");
        }
    }

    #[test]
    fn representatives() {
        assert_eq!(representative_minutes(9, DEFAULT_MIN_MINUTES), 31);
        assert_eq!(representative_minutes(6, DEFAULT_MIN_MINUTES), 10);
        assert!(!representative_is_unclamped(6, DEFAULT_MIN_MINUTES));
        for tau in 1..=20 {
            if representative_is_unclamped(tau, DEFAULT_MIN_MINUTES) {
                let m = representative_minutes(tau, DEFAULT_MIN_MINUTES);
                assert_eq!(discretize_interval(m as f64).unwrap(), tau);
            }
            let m = representative_minutes(tau, 1);
            assert_eq!(discretize_interval(m as f64).unwrap(), tau);
        }
    }

    #[test]
    fn matches_power_oracle_on_integers() {
        for dt in 1..=1440 {
            assert_eq!(discretize_interval(dt as f64).unwrap(), bin_by_powers(dt as f64), "dt={dt}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone(a in 1.0f64..5000.0, b in 1.0f64..5000.0) {
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(discretize_interval(lo).unwrap() <= discretize_interval(hi).unwrap());
            }
        }
    }
}
