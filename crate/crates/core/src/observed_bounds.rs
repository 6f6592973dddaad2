//! Bounds on untagged-bit gain and error-gain from the overall statistics.

use std::fmt;

use crate::error::{QkdError, Result};
use crate::source_model::Window;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateLabel {
    Signal,
    Decoy,
    Vacuum,
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateLabel::Signal => "signal",
            StateLabel::Decoy => "decoy",
            StateLabel::Vacuum => "vacuum",
        })
    }
}

/// Measured overall gain `Q_e` and QBER `E_e` of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservedStats {
    gain: f64,
    qber: f64,
    label: StateLabel,
}

impl ObservedStats {
    pub fn new(gain: f64, qber: f64, label: StateLabel) -> Result<Self> {
        if !(0.0..=1.0).contains(&gain) {
            return Err(QkdError::domain(format!(
                "gain must lie in [0, 1], got {gain}"
            )));
        }
        if !(0.0..=1.0).contains(&qber) {
            return Err(QkdError::domain(format!(
                "QBER must lie in [0, 1], got {qber}"
            )));
        }
        Ok(ObservedStats { gain, qber, label })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn qber(&self) -> f64 {
        self.qber
    }

    pub fn label(&self) -> StateLabel {
        self.label
    }

    /// `Q_e · E_e`.
    pub fn error_gain(&self) -> f64 {
        self.gain * self.qber
    }
}

/// Bounds on the untagged gain `Q` and error-gain `E·Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UntaggedBounds {
    pub q_lower: f64,
    pub q_upper: f64,
    pub eq_lower: f64,
    pub eq_upper: f64,
}

impl UntaggedBounds {
    pub fn new(obs: &ObservedStats, window: &Window) -> Result<Self> {
        let (q_lower, q_upper) = gain_bounds(obs, window)?;
        let (eq_lower, eq_upper) = error_gain_bounds(obs, window)?;
        Ok(UntaggedBounds {
            q_lower,
            q_upper,
            eq_lower,
            eq_upper,
        })
    }
}

fn bounds_from(value: f64, slack: f64) -> Result<(f64, f64)> {
    if slack >= 1.0 {
        return Err(QkdError::VacuousBounds(slack));
    }
    let keep = 1.0 - slack;
    let upper = (value / keep).min(1.0);
    let lower = ((value - slack) / keep).max(0.0);
    Ok((lower, upper))
}

/// `(Q̲, Q̄)` for the untagged bits of one state.
pub fn gain_bounds(obs: &ObservedStats, window: &Window) -> Result<(f64, f64)> {
    bounds_from(obs.gain(), window.slack())
}

/// `(E·Q lower, E·Q upper)` for the untagged bits of one state.
pub fn error_gain_bounds(obs: &ObservedStats, window: &Window) -> Result<(f64, f64)> {
    bounds_from(obs.error_gain(), window.slack())
}
