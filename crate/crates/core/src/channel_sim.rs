//! Forward model of the fiber channel and Bob's detector.

use serde::{Deserialize, Serialize};

use crate::error::{QkdError, Result};
use crate::observed_bounds::{ObservedStats, StateLabel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Bob's detection efficiency including his internal loss.
    pub eta_bob: f64,
    /// Fiber loss in dB/km.
    pub alpha_db_per_km: f64,
    /// Background (dark count) yield.
    pub y0: f64,
    /// Probability a photon hits the wrong detector.
    pub e_det: f64,
    /// Error rate of background counts.
    pub e0: f64,
}

impl Default for DetectorParams {
    /// Standard telecom fibre with a 4.5% efficient gated detector.
    fn default() -> Self {
        DetectorParams {
            eta_bob: 0.045,
            alpha_db_per_km: 0.21,
            y0: 1.7e-6,
            e_det: 0.033,
            e0: 0.5,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eta_bob", self.eta_bob),
            ("y0", self.y0),
            ("e_det", self.e_det),
            ("e0", self.e0),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(QkdError::domain(format!(
                    "{name} must lie in [0, 1], got {v}"
                )));
            }
        }
        if !(self.alpha_db_per_km >= 0.0 && self.alpha_db_per_km.is_finite()) {
            return Err(QkdError::domain(format!(
                "alpha must be a non-negative loss in dB/km, got {}",
                self.alpha_db_per_km
            )));
        }
        Ok(())
    }
}

/// Fiber transmittance `10^(-αl/10)`.
pub fn channel_transmittance(distance_km: f64, params: &DetectorParams) -> f64 {
    10f64.powf(-params.alpha_db_per_km * distance_km / 10.0)
}

/// Expected gain and QBER for mean photon number `mu` reaching the channel.
pub fn simulate_observables(
    mu: f64,
    distance_km: f64,
    params: &DetectorParams,
    label: StateLabel,
) -> Result<ObservedStats> {
    if !(mu >= 0.0) {
        return Err(QkdError::domain(format!(
            "mean photon number must be >= 0, got {mu}"
        )));
    }
    if !(distance_km >= 0.0) {
        return Err(QkdError::domain(format!(
            "distance must be >= 0, got {distance_km}"
        )));
    }
    let eta = channel_transmittance(distance_km, params) * params.eta_bob;
    let signal = -(-eta * mu).exp_m1();
    let gain = (params.y0 + signal).min(1.0);
    let qber = if gain > 0.0 {
        ((params.e0 * params.y0 + params.e_det * signal) / gain).min(1.0)
    } else {
        params.e0
    };
    ObservedStats::new(gain, qber, label)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn transmittance_examples() {
        let p = DetectorParams::default();
        assert_eq!(channel_transmittance(0.0, &p), 1.0);
        assert!(close(
            channel_transmittance(20.0, &p),
            0.380_189_396_320_561_2,
            1e-12
        ));
        assert!(close(
            channel_transmittance(100.0, &p),
            7.943_282_347_242_815e-3,
            1e-12
        ));
    }

    #[test]
    fn vacuum_state_sees_background_only() {
        let p = DetectorParams::default();
        let o = simulate_observables(0.0, 37.0, &p, StateLabel::Vacuum).unwrap();
        assert_eq!(o.gain(), 1.7e-6);
        assert_eq!(o.qber(), 0.5);
    }

    #[test]
    fn signal_at_zero_distance() {
        let p = DetectorParams::default();
        let o = simulate_observables(0.1, 0.0, &p, StateLabel::Signal).unwrap();
        assert!(close(o.gain(), 4.491_590_170_429_428e-3, 1e-12));
        assert!(close(o.qber(), 3.317_675_254_639_808e-2, 1e-12));
    }

    #[test]
    fn saturation_is_clamped() {
        let p = DetectorParams {
            eta_bob: 1.0,
            y0: 0.01,
            ..DetectorParams::default()
        };
        let o = simulate_observables(1e4, 0.0, &p, StateLabel::Signal).unwrap();
        assert_eq!(o.gain(), 1.0);
        assert!(o.qber() <= 1.0);
    }

    #[test]
    fn dark_free_vacuum_uses_limit_convention() {
        let p = DetectorParams {
            y0: 0.0,
            ..DetectorParams::default()
        };
        let o = simulate_observables(0.0, 0.0, &p, StateLabel::Vacuum).unwrap();
        assert_eq!((o.gain(), o.qber()), (0.0, 0.5));
    }

    #[test]
    fn rejects_bad_parameters() {
        let p = DetectorParams {
            e_det: 1.5,
            ..DetectorParams::default()
        };
        assert!(p.validate().is_err());
        assert!(DetectorParams::default().validate().is_ok());
        assert!(
            simulate_observables(-1.0, 0.0, &DetectorParams::default(), StateLabel::Signal)
                .is_err()
        );
    }
}
