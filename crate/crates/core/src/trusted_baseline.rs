//! Key rates for a trusted Poissonian source, used as the reference the
//! untrusted-source rates are compared against.

use crate::channel_sim::{simulate_observables, DetectorParams};
use crate::error::{QkdError, Result};
use crate::numerics::entropy_bits;
use crate::observed_bounds::StateLabel;
use crate::protocols::{KeyRateReport, ProtocolKind, ProtocolParams};

/// GLLP rate with Poisson photon statistics of mean `mu`.
pub fn gllp_rate_trusted(
    mu: f64,
    distance_km: f64,
    detector: &DetectorParams,
    params: &ProtocolParams,
) -> Result<KeyRateReport> {
    if !(mu > 0.0) {
        return Err(QkdError::domain(format!("mu must be positive, got {mu}")));
    }
    let obs = simulate_observables(mu, distance_km, detector, StateLabel::Signal)?;
    let p_multi = -(-mu).exp_m1() - mu * (-mu).exp();
    let q_omega = obs.gain() - p_multi;
    let ec = obs.gain() * params.ec_inefficiency() * entropy_bits(obs.qber());
    let pa = if q_omega > 0.0 {
        q_omega * (1.0 - entropy_bits((obs.error_gain() / q_omega).min(0.5)))
    } else {
        0.0
    };
    let mut report = KeyRateReport::from_raw(ProtocolKind::Gllp, params.sift_factor() * (pa - ec));
    report.q_omega_lower = Some(q_omega);
    report.intermediates.multiphoton_upper = Some(p_multi);
    report.conditions.condition1 = true;
    Ok(report)
}

/// Asymptotic decoy-state rate with signal intensity `mu` and decoy `nu`.
///
/// Weak+vacuum uses the measured background yield. One-decoy replaces it by
/// the upper bound `E_μ Q_μ e^μ / e0` implied by the signal error-gain.
pub fn decoy_rate_trusted(
    protocol: ProtocolKind,
    mu: f64,
    nu: f64,
    distance_km: f64,
    detector: &DetectorParams,
    params: &ProtocolParams,
) -> Result<KeyRateReport> {
    if !(0.0 < nu && nu < mu) {
        return Err(QkdError::domain(format!(
            "need 0 < nu < mu, got mu={mu}, nu={nu}"
        )));
    }
    let s = simulate_observables(mu, distance_km, detector, StateLabel::Signal)?;
    let d = simulate_observables(nu, distance_km, detector, StateLabel::Decoy)?;
    let signal_error_gain = s.error_gain() * mu.exp();
    let y0 = match protocol {
        ProtocolKind::WeakVacuum => detector.y0,
        ProtocolKind::OneDecoy => {
            if detector.e0 > 0.0 {
                signal_error_gain / detector.e0
            } else {
                f64::INFINITY
            }
        }
        ProtocolKind::Gllp => {
            return Err(QkdError::domain(
                "decoy baseline called for GLLP".to_string(),
            ))
        }
    };
    let mu2 = mu * mu;
    let nu2 = nu * nu;
    let y1 = mu / (mu * nu - nu2)
        * (d.gain() * nu.exp() - s.gain() * mu.exp() * nu2 / mu2 - (mu2 - nu2) / mu2 * y0);
    let y1 = if y1.is_finite() { y1.max(0.0) } else { 0.0 };
    let q1 = y1 * mu * (-mu).exp();

    let e1 = (y1 > 0.0).then(|| match protocol {
        ProtocolKind::WeakVacuum => {
            (d.error_gain() * nu.exp() - detector.e0 * detector.y0) / (y1 * nu)
        }
        _ => signal_error_gain / (y1 * mu),
    });
    let ec = s.gain() * params.ec_inefficiency() * entropy_bits(s.qber());
    let pa = match e1 {
        Some(e) => q1 * (1.0 - entropy_bits(e.clamp(0.0, 0.5))),
        None => 0.0,
    };
    let mut report = KeyRateReport::from_raw(protocol, params.sift_factor() * (pa - ec));
    report.q1_lower = Some(q1);
    report.e1_upper_raw = e1;
    report.e1_upper = e1.map(|e| e.clamp(0.0, 0.5));
    report.conditions.condition1 = true;
    Ok(report)
}
