//! Log-space special functions.
//!
//! Every binomial or factorial magnitude in the bound formulas is handled as a
//! natural logarithm and only exponentiated after cancellation, so the same
//! code path serves `N ≈ 20` oracle instances and `N = 10⁶` simulations.

use std::f64::consts::{LN_2, PI};
use std::sync::OnceLock;

use crate::error::{QkdError, Result};

/// Exact-summation threshold for [`log_factorial`].
const EXACT_LOG_FACTORIAL_MAX: u64 = 256;

/// Largest `m` for which [`binomial_exact`] is guaranteed not to overflow.
pub const EXACT_BINOMIAL_MAX: u64 = 120;

/// Sign of a [`LogValue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

/// A real number stored as sign and natural log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    sign: Sign,
    ln_abs: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: Sign::Zero,
        ln_abs: f64::NEG_INFINITY,
    };

    /// Positive value `exp(ln_abs)`.
    pub fn from_ln(ln_abs: f64) -> Self {
        if ln_abs == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            LogValue {
                sign: Sign::Positive,
                ln_abs,
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            LogValue {
                sign: if x > 0.0 {
                    Sign::Positive
                } else {
                    Sign::Negative
                },
                ln_abs: x.abs().ln(),
            }
        }
    }

    pub fn to_f64(self) -> f64 {
        match self.sign {
            Sign::Zero => 0.0,
            Sign::Positive => self.ln_abs.exp(),
            Sign::Negative => -self.ln_abs.exp(),
        }
    }

    pub fn sign(self) -> Sign {
        self.sign
    }

    /// Natural log of the magnitude; `-inf` for zero.
    pub fn ln_abs(self) -> f64 {
        match self.sign {
            Sign::Zero => f64::NEG_INFINITY,
            _ => self.ln_abs,
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == Sign::Zero
    }

    pub fn is_positive(self) -> bool {
        self.sign == Sign::Positive
    }

    pub fn is_negative(self) -> bool {
        self.sign == Sign::Negative
    }

    pub fn neg(self) -> Self {
        let sign = match self.sign {
            Sign::Positive => Sign::Negative,
            Sign::Negative => Sign::Positive,
            Sign::Zero => Sign::Zero,
        };
        LogValue { sign, ..self }
    }

    pub fn mul(self, other: LogValue) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::ZERO;
        }
        let sign = if self.sign == other.sign {
            Sign::Positive
        } else {
            Sign::Negative
        };
        LogValue {
            sign,
            ln_abs: self.ln_abs + other.ln_abs,
        }
    }

    pub fn add(self, other: LogValue) -> Self {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (big, small) = if self.ln_abs >= other.ln_abs {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = (small.ln_abs - big.ln_abs).exp();
        if big.sign == small.sign {
            LogValue {
                sign: big.sign,
                ln_abs: big.ln_abs + ratio.ln_1p(),
            }
        } else if ratio >= 1.0 {
            Self::ZERO
        } else {
            LogValue {
                sign: big.sign,
                ln_abs: big.ln_abs + (-ratio).ln_1p(),
            }
        }
    }

    pub fn sub(self, other: LogValue) -> Self {
        self.add(other.neg())
    }
}

fn exact_log_factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(EXACT_LOG_FACTORIAL_MAX as usize + 1);
        let mut acc = 0.0_f64;
        table.push(0.0);
        for k in 1..=EXACT_LOG_FACTORIAL_MAX {
            acc += (k as f64).ln();
            table.push(acc);
        }
        table
    })
}

/// `ln(n!)`.
///
/// Exact summation up to 256; above that the Stirling series with four
/// correction terms, whose truncation error is below `1/(1188 n⁹)`.
pub fn log_factorial(n: u64) -> f64 {
    if n <= EXACT_LOG_FACTORIAL_MAX {
        return exact_log_factorials()[n as usize];
    }
    let x = n as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)));
    (x + 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

/// `ln C(m, n)`.
pub fn log_binomial_coeff(m: u64, n: u64) -> Result<f64> {
    if n > m {
        return Err(QkdError::domain(format!(
            "binomial coefficient C({m}, {n}) needs n <= m"
        )));
    }
    let k = n.min(m - n);
    // Short products avoid cancelling two huge log-factorials.
    if k <= 64 {
        let mf = m as f64;
        let mut acc = 0.0;
        for i in 0..k {
            let i = i as f64;
            acc += ((mf - i) / (i + 1.0)).ln();
        }
        return Ok(acc);
    }
    Ok(log_factorial(m) - log_factorial(n) - log_factorial(m - n))
}

/// `C(m, n)` in exact integer arithmetic, `None` on overflow.
pub fn binomial_exact(m: u64, n: u64) -> Option<u128> {
    if n > m {
        return Some(0);
    }
    let k = n.min(m - n);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c.checked_mul((m - i) as u128)? / (i as u128 + 1);
    }
    Some(c)
}

/// `ln(1 - x)` with full relative precision near zero.
pub fn log1m(x: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&x) {
        return Err(QkdError::domain(format!("log1m needs 0 <= x < 1, got {x}")));
    }
    Ok((-x).ln_1p())
}

/// Tagged fraction under the Gaussian approximation, `erfc(√(N/2)·δ)`.
pub fn gaussian_tail_delta(mean_photons: f64, delta: f64) -> f64 {
    statrs::function::erf::erfc((mean_photons / 2.0).sqrt() * delta)
}

/// `ln` of the Poisson pmf at `k` with mean `mean`.
pub fn ln_poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -mean + k as f64 * mean.ln() - log_factorial(k)
}

fn poisson_support_cap(mean: f64) -> u64 {
    (mean + 40.0 * mean.sqrt() + 100.0).ceil() as u64
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Poisson CDF `Φ_p(x) = Γ(⌊x+1⌋, N)/⌊x⌋!`, by direct log-space summation.
pub fn poisson_cdf(x: f64, mean: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    let cap = poisson_support_cap(mean);
    let k_max = if x.is_finite() {
        (x.floor() as u64).min(cap)
    } else {
        cap
    };
    let ln_sum = log_sum_exp((0..=k_max).map(|k| ln_poisson_pmf(k, mean)));
    ln_sum.exp().min(1.0)
}

/// Poisson upper tail `P(M >= k)`, summed directly so tiny tails keep full
/// relative precision.
pub fn poisson_upper_tail(k: u64, mean: f64) -> f64 {
    let cap = poisson_support_cap(mean);
    if k > cap {
        return 0.0;
    }
    if k == 0 {
        return 1.0;
    }
    let ln_sum = log_sum_exp((k..=cap).map(|j| ln_poisson_pmf(j, mean)));
    ln_sum.exp().min(1.0)
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(QkdError::domain(format!(
            "binary entropy needs 0 <= x <= 1, got {x}"
        )));
    }
    Ok(entropy_bits(x))
}

/// Unchecked binary entropy for arguments already known to lie in `[0, 1]`.
pub(crate) fn entropy_bits(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -(x * x.ln() + (1.0 - x) * (-x).ln_1p()) / LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn log_factorial_small_values() {
        assert_eq!(log_factorial(0), 0.0);
        assert_eq!(log_factorial(1), 0.0);
        assert!(close(log_factorial(5), 4.787_491_742_782_046, 1e-14));
    }

    #[test]
    fn log_factorial_matches_high_precision_at_one_million() {
        // mpmath loggamma(10^6 + 1)
        let expected = 12_815_518.384_658_169_624;
        assert!(close(log_factorial(1_000_000), expected, 1e-13));
    }

    #[test]
    fn log_factorial_continuous_across_exact_threshold() {
        let direct: f64 = (1..=257u64).map(|k| (k as f64).ln()).sum();
        assert!(close(log_factorial(257), direct, 1e-13));
        let direct: f64 = (1..=1000u64).map(|k| (k as f64).ln()).sum();
        assert!(close(log_factorial(1000), direct, 1e-12));
    }

    #[test]
    fn stirling_sandwich_at_one_million() {
        let n = 1e6_f64;
        let v = log_factorial(1_000_000);
        let lo = (n + 0.5) * n.ln() - n;
        assert!(lo < v && v < lo + 1.0);
    }

    #[test]
    fn log_binomial_examples() {
        assert_eq!(log_binomial_coeff(5, 0).unwrap(), 0.0);
        assert!(close(
            log_binomial_coeff(10, 3).unwrap(),
            120f64.ln(),
            1e-14
        ));
        let expected = (1e6 * (1e6 - 1.0) / 2.0_f64).ln();
        assert!(close(
            log_binomial_coeff(1_000_000, 2).unwrap(),
            expected,
            1e-14
        ));
        assert!(log_binomial_coeff(3, 4).is_err());
    }

    #[test]
    fn log_binomial_agrees_with_integer_path() {
        for m in 0..=60u64 {
            for n in 0..=m {
                let exact = binomial_exact(m, n).unwrap() as f64;
                let got = log_binomial_coeff(m, n).unwrap().exp();
                assert!(close(got, exact, 1e-12), "C({m},{n}): {got} vs {exact}");
            }
        }
    }

    #[test]
    fn log1m_examples() {
        assert_eq!(log1m(0.0).unwrap(), 0.0);
        assert!(close(
            log1m(1e-7).unwrap(),
            -1.000_000_050_000_003_3e-7,
            1e-14
        ));
        assert!(close(log1m(0.5).unwrap(), -LN_2, 1e-15));
        assert!(log1m(1.0).is_err());
        assert!(log1m(-0.1).is_err());
    }

    #[test]
    fn gaussian_tail_examples() {
        assert_eq!(gaussian_tail_delta(1e6, 0.0), 1.0);
        // mpmath erfc(sqrt(5e5) * 0.01)
        let oracle = 1.523_970_604_832_105e-23;
        let got = gaussian_tail_delta(1e6, 0.01);
        assert!(close(got, oracle, 0.02), "{got}");
        assert_eq!(gaussian_tail_delta(100.0, 1.0), got);
    }

    #[test]
    fn poisson_cdf_examples() {
        assert!(close(poisson_cdf(0.0, 5.0), (-5.0f64).exp(), 1e-14));
        assert!(close(poisson_cdf(10.0, 5.0), 0.986_304_731_401_617, 1e-12));
        assert!(close(poisson_cdf(f64::INFINITY, 5.0), 1.0, 1e-14));
        assert!(close(
            poisson_cdf(4.0, 5.0) + poisson_upper_tail(5, 5.0),
            1.0,
            1e-14
        ));
    }

    #[test]
    fn binary_entropy_examples() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!(close(binary_entropy(0.5).unwrap(), 1.0, 1e-15));
        assert!(close(
            binary_entropy(0.033).unwrap(),
            0.209_220_477_869_152_6,
            1e-13
        ));
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(-0.1).is_err());
    }

    #[test]
    fn log_value_arithmetic() {
        let a = LogValue::from_f64(3.0);
        let b = LogValue::from_f64(-5.0);
        assert!(close(a.add(b).to_f64(), -2.0, 1e-15));
        assert!(close(a.mul(b).to_f64(), -15.0, 1e-15));
        assert!(a.sub(a).is_zero());
        assert_eq!(LogValue::from_f64(0.0).to_f64(), 0.0);
        assert!(close(LogValue::from_f64(0.25).to_f64(), 0.25, 1e-15));
        let tiny = LogValue::from_ln(-1e7);
        assert!(tiny.is_positive());
        assert_eq!(tiny.to_f64(), 0.0);
        assert!(tiny.neg().is_negative());
    }
}
