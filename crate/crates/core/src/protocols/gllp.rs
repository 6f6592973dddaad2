use crate::error::Result;
use crate::numerics::entropy_bits;
use crate::observed_bounds::{ObservedStats, UntaggedBounds};
use crate::photon_bounds::{condition1_check, multiphoton_upper, pn_bounds};
use crate::source_model::{SourceSpec, Window};

use super::{ConditionFlags, Intermediates, KeyRateReport, ProtocolParams};

/// Generalized GLLP rate for an untrusted source.
///
/// `QΩ ≥ Q̲ + P̲₀ + P̄₁ - 1` lower-bounds the gain of untagged bits that left
/// Alice's lab with at most one photon.
pub fn gllp_rate_untrusted(
    obs: &ObservedStats,
    window: &Window,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<KeyRateReport> {
    let n = source.mean_photons();
    let bounds = pn_bounds(n, window.delta(), params.lambda_signal(), Some(2))?;
    let observed = UntaggedBounds::new(obs, window)?;

    let q_omega = observed.q_lower + bounds.lower(0) + bounds.upper(1) - 1.0;
    let q = params.sift_factor();
    let ec = obs.gain() * params.ec_inefficiency() * entropy_bits(obs.qber());
    let pa = if q_omega > 0.0 {
        let x = (obs.error_gain() / q_omega).min(0.5);
        q_omega * (1.0 - entropy_bits(x))
    } else {
        0.0
    };

    let mut report = KeyRateReport::from_raw(params.kind(), q * (pa - ec));
    report.q_omega_lower = Some(q_omega);
    report.conditions = ConditionFlags {
        condition1: condition1_check(n, window.delta(), params.lambda_signal()),
        ..ConditionFlags::default()
    };
    report.intermediates = Intermediates {
        multiphoton_upper: Some(multiphoton_upper(&bounds)),
        signal_pn: Some(bounds),
        signal: Some(observed),
        ..Intermediates::default()
    };
    Ok(report)
}
