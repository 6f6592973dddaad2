//! Output photon-number statistics of the internal beam splitter.
//!
//! A pulse entering with `m` photons leaves with `n` photons with probability
//! `C(m,n) λⁿ (1-λ)^(m-n)`. For untagged pulses (`m` in the window) this pmf
//! is sandwiched between its values at the two window edges.

use crate::error::{Condition, QkdError, Result};
use crate::numerics::{log1m, log_binomial_coeff, LogValue};
use crate::source_model::UntaggedRange;

/// Stored bounds stop once the upper bound drops below this.
pub const NEGLIGIBLE_PROBABILITY: f64 = 1e-30;

/// `ln P_n(m)` as a [`LogValue`]; zero outside the binomial support.
pub fn pn_exact_log(m: u64, n: u64, lambda: f64) -> LogValue {
    if n > m {
        return LogValue::ZERO;
    }
    if lambda <= 0.0 {
        return if n == 0 {
            LogValue::from_ln(0.0)
        } else {
            LogValue::ZERO
        };
    }
    if lambda >= 1.0 {
        return if n == m {
            LogValue::from_ln(0.0)
        } else {
            LogValue::ZERO
        };
    }
    let ln_c = log_binomial_coeff(m, n).expect("n <= m checked above");
    let ln_keep = log1m(lambda).expect("0 < lambda < 1 checked above");
    LogValue::from_ln(ln_c + n as f64 * lambda.ln() + (m - n) as f64 * ln_keep)
}

/// `P_n(m) = C(m,n) λⁿ (1-λ)^(m-n)`; zero for `n > m`.
pub fn pn_exact(m: u64, n: u64, lambda: f64) -> f64 {
    pn_exact_log(m, n, lambda).to_f64()
}

/// `(1+δ)Nλ < 1`.
pub fn condition1_check(mean_photons: f64, delta: f64, lambda: f64) -> bool {
    (1.0 + delta) * mean_photons * lambda < 1.0
}

/// Upper and lower bounds of `P_n(m)` over the untagged window.
#[derive(Debug, Clone, PartialEq)]
pub struct PnBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
    lambda: f64,
    mean_photons: f64,
    delta: f64,
    range: UntaggedRange,
}

impl PnBounds {
    pub fn lower(&self, n: u64) -> f64 {
        self.lower.get(n as usize).copied().unwrap_or(0.0)
    }

    pub fn upper(&self, n: u64) -> f64 {
        self.upper.get(n as usize).copied().unwrap_or(0.0)
    }

    /// Largest `n` with a stored entry.
    pub fn n_max(&self) -> u64 {
        (self.upper.len() - 1) as u64
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn range(&self) -> UntaggedRange {
        self.range
    }

    /// Log-space upper bound, valid for any `n` (not just stored ones).
    pub fn upper_log(&self, n: u64) -> LogValue {
        upper_log(self.range, self.lambda, n)
    }

    /// Log-space lower bound, valid for any `n`.
    pub fn lower_log(&self, n: u64) -> LogValue {
        lower_log(self.range, self.lambda, n)
    }
}

fn upper_log(range: UntaggedRange, lambda: f64, n: u64) -> LogValue {
    if n == 0 {
        pn_exact_log(range.lo, 0, lambda)
    } else {
        pn_exact_log(range.hi, n, lambda)
    }
}

fn lower_log(range: UntaggedRange, lambda: f64, n: u64) -> LogValue {
    if n == 0 {
        pn_exact_log(range.hi, 0, lambda)
    } else {
        pn_exact_log(range.lo, n, lambda)
    }
}

/// Window bounds on `P_n(m)` for `n` in `0..=n_max`.
///
/// With `n_max = None` the table extends to the first `n` whose upper bound
/// is below [`NEGLIGIBLE_PROBABILITY`] (and at least to `n = 2`).
pub fn pn_bounds(
    mean_photons: f64,
    delta: f64,
    lambda: f64,
    n_max: Option<u64>,
) -> Result<PnBounds> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(QkdError::domain(format!(
            "transmittance must lie in [0, 1], got {lambda}"
        )));
    }
    if !condition1_check(mean_photons, delta, lambda) {
        return Err(QkdError::condition(
            Condition::One,
            format!(
                "(1+delta)*N*lambda = {} is not below 1",
                (1.0 + delta) * mean_photons * lambda
            ),
        ));
    }
    let range = UntaggedRange::new(mean_photons, delta);
    if range.is_empty() {
        return Err(QkdError::domain(format!(
            "untagged window for N={mean_photons}, delta={delta} contains no integer photon number"
        )));
    }
    let limit = match n_max {
        Some(k) => k,
        None => {
            let mut n = 2;
            while n < range.hi && upper_log(range, lambda, n).to_f64() >= NEGLIGIBLE_PROBABILITY {
                n += 1;
            }
            n
        }
    };
    let (lower, upper) = (0..=limit)
        .map(|n| {
            (
                lower_log(range, lambda, n).to_f64(),
                upper_log(range, lambda, n).to_f64(),
            )
        })
        .unzip();
    Ok(PnBounds {
        lower,
        upper,
        lambda,
        mean_photons,
        delta,
        range,
    })
}

/// Upper bound on the multiphoton probability, `1 - P̲₀ - P̄₁`, clamped to
/// `[0, 1]`.
pub fn multiphoton_upper(bounds: &PnBounds) -> f64 {
    (1.0 - bounds.lower(0) - bounds.upper(1)).clamp(0.0, 1.0)
}
