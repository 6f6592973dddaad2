//! Key-rate engines for an untrusted source: generalized GLLP, weak+vacuum
//! decoy and one-decoy.

mod coefficients;
mod decoy;
mod gllp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::observed_bounds::UntaggedBounds;
use crate::photon_bounds::PnBounds;
use crate::source_model::Window;

pub use coefficients::{coefficients, condition_thresholds, CoefficientSet, ConditionThresholds};
pub use decoy::{
    decoy_rate, one_decoy_q1_e1, untrusted_decoy_report, wv_e1_upper, wv_q1_lower, E1Bound,
};
pub use gllp::gllp_rate_untrusted;

/// Default basis-sift factor: Alice and Bob pick the same basis half the time.
pub const DEFAULT_SIFT_FACTOR: f64 = 0.5;
/// Default error-correction inefficiency.
pub const DEFAULT_EC_INEFFICIENCY: f64 = 1.18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Gllp,
    WeakVacuum,
    OneDecoy,
}

impl ProtocolKind {
    pub fn is_decoy(self) -> bool {
        !matches!(self, ProtocolKind::Gllp)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Gllp => "gllp",
            ProtocolKind::WeakVacuum => "weak_vacuum",
            ProtocolKind::OneDecoy => "one_decoy",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = QkdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "gllp" => Ok(ProtocolKind::Gllp),
            "wv" | "weak_vacuum" => Ok(ProtocolKind::WeakVacuum),
            "one_decoy" | "od" => Ok(ProtocolKind::OneDecoy),
            _ => Err(QkdError::Config(format!("unknown protocol '{s}'"))),
        }
    }
}

/// Protocol selector, internal transmittances, sift factor `q` and
/// error-correction inefficiency `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolParams {
    kind: ProtocolKind,
    lambda_signal: f64,
    lambda_decoy: f64,
    sift_factor: f64,
    ec_inefficiency: f64,
}

impl ProtocolParams {
    pub fn new(
        kind: ProtocolKind,
        lambda_signal: f64,
        lambda_decoy: f64,
        sift_factor: f64,
        ec_inefficiency: f64,
    ) -> Result<Self> {
        if !(sift_factor > 0.0 && sift_factor <= 1.0) {
            return Err(QkdError::domain(format!(
                "sift factor must lie in (0, 1], got {sift_factor}"
            )));
        }
        if !(ec_inefficiency >= 1.0 && ec_inefficiency.is_finite()) {
            return Err(QkdError::domain(format!(
                "error-correction inefficiency must be >= 1, got {ec_inefficiency}"
            )));
        }
        if kind.is_decoy() {
            if !(0.0 < lambda_decoy && lambda_decoy < lambda_signal && lambda_signal < 1.0) {
                return Err(QkdError::domain(format!(
                    "decoy protocols need 0 < lambda_decoy < lambda_signal < 1, got \
                     lambda_signal={lambda_signal}, lambda_decoy={lambda_decoy}"
                )));
            }
        } else if !(0.0..=1.0).contains(&lambda_signal) {
            return Err(QkdError::domain(format!(
                "lambda_signal must lie in [0, 1], got {lambda_signal}"
            )));
        }
        Ok(ProtocolParams {
            kind,
            lambda_signal,
            lambda_decoy,
            sift_factor,
            ec_inefficiency,
        })
    }

    pub fn gllp(lambda_signal: f64) -> Result<Self> {
        Self::new(
            ProtocolKind::Gllp,
            lambda_signal,
            0.0,
            DEFAULT_SIFT_FACTOR,
            DEFAULT_EC_INEFFICIENCY,
        )
    }

    pub fn decoy(kind: ProtocolKind, lambda_signal: f64, lambda_decoy: f64) -> Result<Self> {
        Self::new(
            kind,
            lambda_signal,
            lambda_decoy,
            DEFAULT_SIFT_FACTOR,
            DEFAULT_EC_INEFFICIENCY,
        )
    }

    /// Same protocol settings with different transmittances.
    pub fn with_lambdas(&self, lambda_signal: f64, lambda_decoy: f64) -> Result<Self> {
        Self::new(
            self.kind,
            lambda_signal,
            lambda_decoy,
            self.sift_factor,
            self.ec_inefficiency,
        )
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn lambda_signal(&self) -> f64 {
        self.lambda_signal
    }

    pub fn lambda_decoy(&self) -> f64 {
        self.lambda_decoy
    }

    pub fn sift_factor(&self) -> f64 {
        self.sift_factor
    }

    pub fn ec_inefficiency(&self) -> f64 {
        self.ec_inefficiency
    }
}

/// Windows for the signal, decoy and vacuum states. All share `δ`; the
/// tagged fraction and slack may differ per state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateWindows {
    pub signal: Window,
    pub decoy: Window,
    pub vacuum: Window,
}

impl StateWindows {
    pub fn shared(window: Window) -> Self {
        StateWindows {
            signal: window,
            decoy: window,
            vacuum: window,
        }
    }

    pub fn new(signal: Window, decoy: Window, vacuum: Window) -> Result<Self> {
        let d = signal.delta();
        if decoy.delta() != d || vacuum.delta() != d {
            return Err(QkdError::domain(
                "per-state windows must share the same delta".to_string(),
            ));
        }
        Ok(StateWindows {
            signal,
            decoy,
            vacuum,
        })
    }

    pub fn delta(&self) -> f64 {
        self.signal.delta()
    }
}

/// Validity conditions evaluated at the reported point. Decoy-only
/// conditions are `None` for GLLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConditionFlags {
    pub condition1: bool,
    pub condition2a: Option<bool>,
    pub condition2b: Option<bool>,
    pub condition2: Option<bool>,
}

/// Everything the rate was computed from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Intermediates {
    pub signal_pn: Option<PnBounds>,
    pub decoy_pn: Option<PnBounds>,
    pub signal: Option<UntaggedBounds>,
    pub decoy: Option<UntaggedBounds>,
    pub vacuum: Option<UntaggedBounds>,
    pub multiphoton_upper: Option<f64>,
    pub a0: Option<f64>,
    pub a1: Option<f64>,
    pub a3_lower: Option<f64>,
    pub thresholds: Option<ConditionThresholds>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateReport {
    pub protocol: ProtocolKind,
    /// May be negative.
    pub rate_raw: f64,
    /// `max(0, rate_raw)`.
    pub rate: f64,
    pub q1_lower: Option<f64>,
    /// Single-photon error rate bound before clamping.
    pub e1_upper_raw: Option<f64>,
    /// Value used in the rate, clamped to `[0, 1/2]`.
    pub e1_upper: Option<f64>,
    pub q_omega_lower: Option<f64>,
    pub conditions: ConditionFlags,
    pub intermediates: Intermediates,
}

impl KeyRateReport {
    pub(crate) fn from_raw(protocol: ProtocolKind, rate_raw: f64) -> Self {
        KeyRateReport {
            protocol,
            rate_raw,
            rate: rate_raw.max(0.0),
            q1_lower: None,
            e1_upper_raw: None,
            e1_upper: None,
            q_omega_lower: None,
            conditions: ConditionFlags::default(),
            intermediates: Intermediates::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn protocol_names_parse() {
        assert_eq!(
            "wv".parse::<ProtocolKind>().unwrap(),
            ProtocolKind::WeakVacuum
        );
        assert_eq!(
            "one-decoy".parse::<ProtocolKind>().unwrap(),
            ProtocolKind::OneDecoy
        );
        assert_eq!("GLLP".parse::<ProtocolKind>().unwrap(), ProtocolKind::Gllp);
        assert!("bb84".parse::<ProtocolKind>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::decoy(ProtocolKind::WeakVacuum, 1e-7, 2e-8).is_ok());
        assert!(ProtocolParams::decoy(ProtocolKind::WeakVacuum, 1e-7, 1e-7).is_err());
        assert!(ProtocolParams::decoy(ProtocolKind::OneDecoy, 1e-7, 0.0).is_err());
        assert!(ProtocolParams::new(ProtocolKind::Gllp, 1e-7, 0.0, 0.0, 1.2).is_err());
        assert!(ProtocolParams::new(ProtocolKind::Gllp, 1e-7, 0.0, 0.5, 0.9).is_err());
        let p = ProtocolParams::gllp(1e-7).unwrap();
        assert_eq!(p.sift_factor(), 0.5);
        assert_eq!(p.ec_inefficiency(), DEFAULT_EC_INEFFICIENCY);
    }

    #[test]
    fn report_rate_is_clamped() {
        let r = KeyRateReport::from_raw(ProtocolKind::Gllp, -0.3);
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.rate_raw, -0.3);
    }
}
