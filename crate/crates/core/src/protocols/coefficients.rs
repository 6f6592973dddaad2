//! Linear-combination coefficients that cancel the two-photon contribution
//! between signal and decoy gains, and the ratio thresholds that fix their
//! signs.

use std::ops::RangeInclusive;

use crate::error::{QkdError, Result};
use crate::numerics::{log1m, log_binomial_coeff, log_factorial, LogValue};
use crate::photon_bounds::{pn_bounds, PnBounds};
use crate::source_model::UntaggedRange;

/// Ratio thresholds on `λ_S/λ_D`, from weakest to strongest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionThresholds {
    /// Makes `a1` and `a0` negative.
    pub cond2a: f64,
    /// Binomial form of the two-photon cancellation condition.
    pub cond2b: f64,
    /// Closed form implying `cond2b`; makes every `a2(n)` positive.
    pub cond2: f64,
}

/// Thresholds evaluated on the integer window edges `lo = ⌈(1-δ)N⌉`,
/// `hi = ⌊(1+δ)N⌋`.
pub fn condition_thresholds(mean_photons: f64, delta: f64) -> Result<ConditionThresholds> {
    let range = UntaggedRange::new(mean_photons, delta);
    thresholds_for_range(range)
}

pub(crate) fn thresholds_for_range(range: UntaggedRange) -> Result<ConditionThresholds> {
    let UntaggedRange { lo, hi } = range;
    if lo <= 2 {
        return Err(QkdError::domain(format!(
            "thresholds need a lower window edge above 2, got {lo}"
        )));
    }
    if hi <= lo {
        return Err(QkdError::domain(format!(
            "thresholds need a window wider than one photon number, got [{lo}, {hi}]"
        )));
    }
    let a = (hi - 2) as f64;
    let b = (lo - 2) as f64;
    let c = (hi - lo) as f64;

    let cond2a = (hi - 1) as f64 / (lo - 1) as f64;
    let cond2b = (log_binomial_coeff(hi - 2, hi - lo)? / b).exp();
    let ln_cond2 =
        (a / b).ln() + (c / b) * (a / c).ln() + ((a / b).ln() + 2.0 - c.ln()) / (2.0 * b);
    Ok(ConditionThresholds {
        cond2a,
        cond2b,
        cond2: ln_cond2.exp(),
    })
}

/// `a0`, `a1`, the lazily evaluated `a2(n)`, and a lower bound on `a3`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub a0: f64,
    pub a1: f64,
    /// Lower bound on `a3`, dropped to 0 when negligible against `a1`.
    pub a3_lower: f64,
    /// The same bound before the cutoff.
    pub a3_bound: LogValue,
    pub thresholds: ConditionThresholds,
    signal: PnBounds,
    decoy: PnBounds,
}

impl CoefficientSet {
    pub fn signal_bounds(&self) -> &PnBounds {
        &self.signal
    }

    pub fn decoy_bounds(&self) -> &PnBounds {
        &self.decoy
    }

    /// `n` values for which `a2(n)` enters the estimate: `3..=lo`.
    pub fn a2_range(&self) -> RangeInclusive<u64> {
        3..=self.signal.range().lo
    }

    /// `a2(n) = P̲ₙ^S P̄₂^D - P̄ₙ^D P̲₂^S`.
    pub fn a2(&self, n: u64) -> LogValue {
        let s2 = self.signal.lower_log(2);
        let d2 = self.decoy.upper_log(2);
        self.signal
            .lower_log(n)
            .mul(d2)
            .sub(self.decoy.upper_log(n).mul(s2))
    }

    /// Exact `a3` when the adversary sets every yield beyond `lo` to 1,
    /// the smallest value `a3` can take.
    pub fn a3_worst_case(&self) -> LogValue {
        let range = self.signal.range();
        let s2 = self.signal.lower_log(2);
        ((range.lo + 1)..=range.hi).fold(LogValue::ZERO, |acc, n| {
            acc.sub(self.decoy.upper_log(n).mul(s2))
        })
    }

    pub fn ratio(&self) -> f64 {
        self.signal.lambda() / self.decoy.lambda()
    }
}

/// Below this fraction of `|a1|` the `a3` bound is dropped.
const A3_RELATIVE_CUTOFF: f64 = 1e-30;

/// Coefficient set for transmittances `λ_S`, `λ_D`.
pub fn coefficients(
    mean_photons: f64,
    delta: f64,
    lambda_signal: f64,
    lambda_decoy: f64,
) -> Result<CoefficientSet> {
    let signal = pn_bounds(mean_photons, delta, lambda_signal, Some(2))?;
    let decoy = pn_bounds(mean_photons, delta, lambda_decoy, Some(2))?;
    let range = signal.range();
    let thresholds = thresholds_for_range(range)?;

    let s2 = signal.lower(2);
    let d2 = decoy.upper(2);
    let a0 = signal.lower(0) * d2 - decoy.upper(0) * s2;
    let a1 = signal.lower(1) * d2 - decoy.upper(1) * s2;

    let width = range.width();
    let a3_bound = if width == 0 || signal.lower_log(2).is_zero() {
        LogValue::ZERO
    } else {
        let ln_abs = (width as f64).ln()
            + (width - 1) as f64 * log1m(lambda_decoy)?
            + signal.lower_log(2).ln_abs()
            - log_factorial(range.lo + 1);
        LogValue::from_ln(ln_abs).neg()
    };
    let negligible = a1 != 0.0
        && !a3_bound.is_zero()
        && a3_bound.ln_abs() < A3_RELATIVE_CUTOFF.ln() + a1.abs().ln();
    let a3_lower = if negligible { 0.0 } else { a3_bound.to_f64() };

    Ok(CoefficientSet {
        a0,
        a1,
        a3_lower,
        a3_bound,
        thresholds,
        signal,
        decoy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn thresholds_at_simulation_point() {
        let t = condition_thresholds(1e6, 0.01).unwrap();
        assert!((t.cond2 - 1.104).abs() < 1e-3);
        assert!(close(t.cond2, 1.104_318_750_846_869_4, 1e-10));
        assert!(close(t.cond2a, 1.020_202_040_608_121_8, 1e-12));
        assert!(t.cond2 >= t.cond2b && t.cond2b >= t.cond2a);
    }

    #[test]
    fn thresholds_at_oracle_scale() {
        let t = condition_thresholds(20.0, 0.2).unwrap();
        assert!(close(t.cond2, 2.838_704_867_221_651_3, 1e-12));
        assert!(close(t.cond2b, 2.472_878_018_185_632_5, 1e-12));
        assert!(close(t.cond2a, 23.0 / 15.0, 1e-14));
    }

    #[test]
    fn thresholds_need_room_below_window() {
        assert!(condition_thresholds(2.0, 0.1).is_err());
        assert!(condition_thresholds(20.0, 0.01).is_err());
    }

    #[test]
    fn coefficient_signs_at_small_scale() {
        let c = coefficients(20.0, 0.2, 0.04, 0.01).unwrap();
        assert!(c.a1 < 0.0);
        assert!(c.a0 < 0.0);
        for n in c.a2_range() {
            assert!(c.a2(n).is_positive(), "a2({n})");
        }
        assert_eq!(c.a2_range(), 3..=16);
        assert!(c.a3_worst_case().to_f64() >= c.a3_lower);
        assert!(c.a3_worst_case().sub(c.a3_bound).is_positive());
        assert!(c.a3_lower < 0.0);
    }

    #[test]
    fn equal_lambdas_make_a1_nonnegative() {
        let c = coefficients(20.0, 0.2, 0.03, 0.03).unwrap();
        assert!(c.a1 >= 0.0);
        assert!(c.ratio() < c.thresholds.cond2a);
    }

    #[test]
    fn a3_is_dropped_at_simulation_scale() {
        let c = coefficients(1e6, 0.01, 5e-7, 1e-7).unwrap();
        assert_eq!(c.a3_lower, 0.0);
        assert!(c.a3_bound.is_negative());
        assert!(c.a1 < 0.0 && c.a0 < 0.0);
    }
}
