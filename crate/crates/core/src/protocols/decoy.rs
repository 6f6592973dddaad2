use crate::error::{Condition, QkdError, Result};
use crate::numerics::entropy_bits;
use crate::observed_bounds::{ObservedStats, UntaggedBounds};
use crate::photon_bounds::multiphoton_upper;
use crate::source_model::{SourceSpec, Window};

use super::coefficients::{coefficients, CoefficientSet};
use super::{
    ConditionFlags, Intermediates, KeyRateReport, ProtocolKind, ProtocolParams, StateWindows,
};

/// Upper bound on the single-photon error rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E1Bound {
    pub raw: f64,
    /// `raw` clamped to `[0, 1/2]`; at `1/2` privacy amplification yields
    /// nothing.
    pub clamped: f64,
}

impl E1Bound {
    fn new(raw: f64) -> Self {
        E1Bound {
            raw,
            clamped: raw.clamp(0.0, 0.5),
        }
    }
}

struct Prepared {
    coeffs: CoefficientSet,
    signal: UntaggedBounds,
    decoy: UntaggedBounds,
    flags: ConditionFlags,
}

fn prepare(
    obs_s: &ObservedStats,
    obs_d: &ObservedStats,
    windows: &StateWindows,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<Prepared> {
    if !params.kind().is_decoy() {
        return Err(QkdError::domain(
            "decoy estimators need a decoy protocol".to_string(),
        ));
    }
    let coeffs = coefficients(
        source.mean_photons(),
        windows.delta(),
        params.lambda_signal(),
        params.lambda_decoy(),
    )?;
    let ratio = coeffs.ratio();
    let t = coeffs.thresholds;
    let flags = ConditionFlags {
        condition1: true,
        condition2a: Some(ratio > t.cond2a),
        condition2b: Some(ratio > t.cond2b),
        condition2: Some(ratio > t.cond2),
    };
    if ratio <= t.cond2 {
        return Err(QkdError::condition(
            Condition::Two,
            format!(
                "lambda_S/lambda_D = {ratio} does not exceed the threshold {}",
                t.cond2
            ),
        ));
    }
    if coeffs.a1 >= 0.0 {
        return Err(QkdError::InternalInconsistency(format!(
            "a1 = {} is not negative although Condition 2 holds",
            coeffs.a1
        )));
    }
    Ok(Prepared {
        signal: UntaggedBounds::new(obs_s, &windows.signal)?,
        decoy: UntaggedBounds::new(obs_d, &windows.decoy)?,
        coeffs,
        flags,
    })
}

/// `P̲₁^S [Q̲^D P̲₂^S - Q̄^S P̄₂^D + a0 Q̄^V + a3] / (-a1)`, clamped to `[0, Q̄^S]`.
fn q1_from(p: &Prepared, q_vacuum_upper: f64) -> f64 {
    let c = &p.coeffs;
    let s = c.signal_bounds();
    let d = c.decoy_bounds();
    let numerator = p.decoy.q_lower * s.lower(2) - p.signal.q_upper * d.upper(2)
        + c.a0 * q_vacuum_upper
        + c.a3_lower;
    (s.lower(1) * numerator / (-c.a1)).clamp(0.0, p.signal.q_upper)
}

/// Lower bound on the untagged single-photon gain of the signal state,
/// weak+vacuum protocol.
pub fn wv_q1_lower(
    obs_s: &ObservedStats,
    obs_d: &ObservedStats,
    obs_v: &ObservedStats,
    windows: &StateWindows,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<f64> {
    let p = prepare(obs_s, obs_d, windows, params, source)?;
    let vacuum = UntaggedBounds::new(obs_v, &windows.vacuum)?;
    Ok(q1_from(&p, vacuum.q_upper))
}

/// Upper bound on the untagged single-photon error rate of the signal
/// state, weak+vacuum protocol.
pub fn wv_e1_upper(
    q1_lower: f64,
    obs_s: &ObservedStats,
    obs_v: &ObservedStats,
    windows: &StateWindows,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<E1Bound> {
    if q1_lower <= 0.0 {
        return Err(QkdError::UndefinedBound(
            "single-photon error rate needs a positive single-photon gain bound".to_string(),
        ));
    }
    let bounds = crate::photon_bounds::pn_bounds(
        source.mean_photons(),
        windows.delta(),
        params.lambda_signal(),
        Some(2),
    )?;
    let signal = UntaggedBounds::new(obs_s, &windows.signal)?;
    let vacuum = UntaggedBounds::new(obs_v, &windows.vacuum)?;
    Ok(e1_weak_vacuum(q1_lower, &signal, &vacuum, bounds.lower(0)))
}

fn e1_weak_vacuum(
    q1_lower: f64,
    signal: &UntaggedBounds,
    vacuum: &UntaggedBounds,
    p0_lower: f64,
) -> E1Bound {
    E1Bound::new((signal.eq_upper - p0_lower * vacuum.eq_lower) / q1_lower)
}

/// Vacuum error rate assumed when no vacuum state is sent.
const VACUUM_QBER: f64 = 0.5;

/// Single-photon gain and error-rate bounds without a vacuum state.
///
/// The vacuum yield is bounded through the signal error-gain, using that
/// vacuum detections are random. Only valid asymptotically. The error-rate
/// bound is `None` when the gain bound is zero.
pub fn one_decoy_q1_e1(
    obs_s: &ObservedStats,
    obs_d: &ObservedStats,
    windows: &StateWindows,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<(f64, Option<E1Bound>)> {
    let (q1, e1, _) = one_decoy_inner(obs_s, obs_d, windows, params, source)?;
    Ok((q1, e1))
}

fn one_decoy_inner(
    obs_s: &ObservedStats,
    obs_d: &ObservedStats,
    windows: &StateWindows,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<(f64, Option<E1Bound>, Prepared)> {
    if !source.is_asymptotic() {
        return Err(QkdError::UnsupportedMode(
            "the one-decoy bound is only established for asymptotic sequence lengths".to_string(),
        ));
    }
    let p = prepare(obs_s, obs_d, windows, params, source)?;
    let p0 = p.coeffs.signal_bounds().lower(0);
    let q_vacuum_upper = if p0 > 0.0 {
        (p.signal.eq_upper / (p0 * VACUUM_QBER)).min(1.0)
    } else {
        1.0
    };
    let q1 = q1_from(&p, q_vacuum_upper);
    let e1 = (q1 > 0.0).then(|| E1Bound::new(p.signal.eq_upper / q1));
    Ok((q1, e1, p))
}

/// Decoy-state rate from single-photon bounds. The privacy-amplification
/// term is dropped when `q1_lower` is zero or no error-rate bound exists.
pub fn decoy_rate(
    q1_lower: f64,
    e1_upper: Option<E1Bound>,
    obs_s: &ObservedStats,
    window: &Window,
    params: &ProtocolParams,
) -> KeyRateReport {
    let ec = obs_s.gain() * params.ec_inefficiency() * entropy_bits(obs_s.qber());
    let pa = match e1_upper {
        Some(e1) if q1_lower > 0.0 => {
            window.untagged_share() * q1_lower * (1.0 - entropy_bits(e1.clamped))
        }
        _ => 0.0,
    };
    let mut report = KeyRateReport::from_raw(params.kind(), params.sift_factor() * (pa - ec));
    report.q1_lower = Some(q1_lower);
    report.e1_upper_raw = e1_upper.map(|e| e.raw);
    report.e1_upper = e1_upper.map(|e| e.clamped);
    report
}

/// Full untrusted-source decoy pipeline. `obs_v` is required for
/// weak+vacuum and ignored for one-decoy.
pub fn untrusted_decoy_report(
    obs_s: &ObservedStats,
    obs_d: &ObservedStats,
    obs_v: Option<&ObservedStats>,
    windows: &StateWindows,
    params: &ProtocolParams,
    source: &SourceSpec,
) -> Result<KeyRateReport> {
    let (q1, e1, p, vacuum) = match params.kind() {
        ProtocolKind::WeakVacuum => {
            let obs_v = obs_v.ok_or_else(|| {
                QkdError::domain("weak+vacuum needs vacuum-state statistics".to_string())
            })?;
            let p = prepare(obs_s, obs_d, windows, params, source)?;
            let vacuum = UntaggedBounds::new(obs_v, &windows.vacuum)?;
            let q1 = q1_from(&p, vacuum.q_upper);
            let e1 = (q1 > 0.0)
                .then(|| e1_weak_vacuum(q1, &p.signal, &vacuum, p.coeffs.signal_bounds().lower(0)));
            (q1, e1, p, Some(vacuum))
        }
        ProtocolKind::OneDecoy => {
            let (q1, e1, p) = one_decoy_inner(obs_s, obs_d, windows, params, source)?;
            (q1, e1, p, None)
        }
        ProtocolKind::Gllp => {
            return Err(QkdError::domain(
                "decoy pipeline called for GLLP".to_string(),
            ))
        }
    };
    let mut report = decoy_rate(q1, e1, obs_s, &windows.signal, params);
    report.conditions = p.flags;
    report.intermediates = Intermediates {
        multiphoton_upper: Some(multiphoton_upper(p.coeffs.signal_bounds())),
        signal_pn: Some(p.coeffs.signal_bounds().clone()),
        decoy_pn: Some(p.coeffs.decoy_bounds().clone()),
        signal: Some(p.signal),
        decoy: Some(p.decoy),
        vacuum,
        a0: Some(p.coeffs.a0),
        a1: Some(p.coeffs.a1),
        a3_lower: Some(p.coeffs.a3_lower),
        thresholds: Some(p.coeffs.thresholds),
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observed_bounds::StateLabel;
    use crate::source_model::{PhotonDistribution, SequenceLength};

    fn stats(q: f64, e: f64, label: StateLabel) -> ObservedStats {
        ObservedStats::new(q, e, label).unwrap()
    }

    fn setup() -> (StateWindows, ProtocolParams, SourceSpec) {
        let w = Window::new(0.2, 0.0, 0.0).unwrap();
        let params = ProtocolParams::decoy(ProtocolKind::WeakVacuum, 0.04, 0.01).unwrap();
        (
            StateWindows::shared(w),
            params,
            SourceSpec::gaussian(20.0).unwrap(),
        )
    }

    #[test]
    fn zero_gains_give_zero_q1() {
        let (w, p, s) = setup();
        let z = |l| stats(0.0, 0.0, l);
        let q1 = wv_q1_lower(
            &z(StateLabel::Signal),
            &z(StateLabel::Decoy),
            &z(StateLabel::Vacuum),
            &w,
            &p,
            &s,
        )
        .unwrap();
        assert_eq!(q1, 0.0);
    }

    #[test]
    fn low_ratio_is_a_condition_error() {
        let (w, _, s) = setup();
        let p = ProtocolParams::decoy(ProtocolKind::WeakVacuum, 0.04, 0.02).unwrap();
        let o = stats(0.3, 0.05, StateLabel::Signal);
        let err = wv_q1_lower(&o, &o, &o, &w, &p, &s).unwrap_err();
        match err {
            QkdError::ConditionViolated { condition, detail } => {
                assert_eq!(condition, Condition::Two);
                assert!(detail.contains("2.83"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn e1_needs_positive_q1() {
        let (w, p, s) = setup();
        let o = stats(0.3, 0.05, StateLabel::Signal);
        assert!(matches!(
            wv_e1_upper(0.0, &o, &o, &w, &p, &s),
            Err(QkdError::UndefinedBound(_))
        ));
    }

    #[test]
    fn error_free_signal_gives_zero_e1() {
        let (w, p, s) = setup();
        let o = stats(0.3, 0.0, StateLabel::Signal);
        let v = stats(0.01, 0.5, StateLabel::Vacuum);
        let e1 = wv_e1_upper(0.05, &o, &v, &w, &p, &s).unwrap();
        assert!(e1.raw <= 0.0);
        assert_eq!(e1.clamped, 0.0);
        let od = ProtocolParams::decoy(ProtocolKind::OneDecoy, 0.04, 0.01).unwrap();
        let d = stats(0.1, 0.0, StateLabel::Decoy);
        if let (q1, Some(e1)) = one_decoy_q1_e1(&o, &d, &w, &od, &s).unwrap() {
            assert!(q1 > 0.0);
            assert_eq!(e1.raw, 0.0);
        }
    }

    #[test]
    fn large_e1_is_clamped() {
        let e = E1Bound::new(0.8);
        assert_eq!(e.clamped, 0.5);
        assert_eq!(e.raw, 0.8);
        let o = stats(0.01, 0.0, StateLabel::Signal);
        let w = Window::new(0.2, 0.0, 0.0).unwrap();
        let p = ProtocolParams::decoy(ProtocolKind::WeakVacuum, 0.04, 0.01).unwrap();
        let r = decoy_rate(0.1, Some(e), &o, &w, &p);
        assert_eq!(r.rate_raw, 0.0);
    }

    #[test]
    fn decoy_rate_examples() {
        let w = Window::new(0.2, 0.0, 0.0).unwrap();
        let p = ProtocolParams::decoy(ProtocolKind::WeakVacuum, 0.04, 0.01).unwrap();
        let o = stats(0.01, 0.05, StateLabel::Signal);
        let r = decoy_rate(0.0, None, &o, &w, &p);
        assert!(r.rate_raw < 0.0);
        assert_eq!(r.rate, 0.0);

        let o = stats(0.01, 0.0, StateLabel::Signal);
        let r = decoy_rate(0.004, Some(E1Bound::new(0.0)), &o, &w, &p);
        assert!((r.rate - 0.002).abs() < 1e-15);
    }

    #[test]
    fn one_decoy_rejects_finite_sequences() {
        let (w, _, _) = setup();
        let s = SourceSpec::new(
            20.0,
            PhotonDistribution::GaussianApprox,
            SequenceLength::Finite(1000),
        )
        .unwrap();
        let p = ProtocolParams::decoy(ProtocolKind::OneDecoy, 0.04, 0.01).unwrap();
        let o = stats(0.3, 0.05, StateLabel::Signal);
        assert!(matches!(
            one_decoy_q1_e1(&o, &o, &w, &p, &s),
            Err(QkdError::UnsupportedMode(_))
        ));
    }
}
