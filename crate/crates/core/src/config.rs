//! TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel_sim::DetectorParams;
use crate::error::{QkdError, Result};
use crate::optimizer::{LambdaGrid, Problem, SweepSpec, WindowPolicy};
use crate::protocols::{
    ProtocolKind, ProtocolParams, DEFAULT_EC_INEFFICIENCY, DEFAULT_SIFT_FACTOR,
};
use crate::source_model::{
    sampling_epsilon, Histogram, PhotonDistribution, SequenceLength, SourceSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    PoissonExact,
    GaussianApprox,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub mean_photons: f64,
    pub distribution: DistributionKind,
    /// Two-column CSV `photon_count,probability`; required for `empirical`.
    pub histogram: Option<PathBuf>,
    /// Number of pulses `2K`/2; absent means asymptotic.
    pub sequence_length: Option<u64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            mean_photons: 1e6,
            distribution: DistributionKind::GaussianApprox,
            histogram: None,
            sequence_length: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub delta: f64,
    /// Explicit sampling slack. Ignored for asymptotic sources.
    pub epsilon: f64,
    /// When set, `ε = √(failure_exponent / K)` replaces `epsilon`.
    pub failure_exponent: Option<f64>,
    pub signal_tagged: Option<f64>,
    pub decoy_tagged: Option<f64>,
    pub vacuum_tagged: Option<f64>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            delta: 0.01,
            epsilon: 0.0,
            failure_exponent: None,
            signal_tagged: None,
            decoy_tagged: None,
            vacuum_tagged: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    /// Fixed internal transmittances. When absent the grid optimum is used.
    pub lambda_signal: Option<f64>,
    pub lambda_decoy: Option<f64>,
    pub sift_factor: f64,
    pub ec_inefficiency: f64,
    pub distance_km: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            kind: ProtocolKind::Gllp,
            lambda_signal: None,
            lambda_decoy: None,
            sift_factor: DEFAULT_SIFT_FACTOR,
            ec_inefficiency: DEFAULT_EC_INEFFICIENCY,
            distance_km: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            path: PathBuf::from("out"),
        }
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            distances_km: (0..=15).map(|k| 10.0 * k as f64).collect(),
            lambda_grid: LambdaGrid::default(),
            delta_grid: default_delta_grid(1e6),
        }
    }
}

/// `δ` at 1, 2, 5, 10, 20, 50, 100 and 200 standard deviations `1/√N`.
pub fn default_delta_grid(mean_photons: f64) -> Vec<f64> {
    let sigma = 1.0 / mean_photons.sqrt();
    [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0]
        .iter()
        .map(|k| k * sigma)
        .filter(|d| *d < 1.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub source: SourceConfig,
    pub window: WindowConfig,
    pub detector: DetectorParams,
    pub protocol: ProtocolConfig,
    pub sweep: SweepSpec,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| QkdError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| QkdError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| QkdError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let as_config = |e: QkdError| QkdError::Config(e.to_string());
        self.detector.validate().map_err(as_config)?;
        self.sweep.lambda_grid.validate().map_err(as_config)?;
        if !(self.window.delta > 0.0 && self.window.delta < 1.0) {
            return Err(QkdError::Config(format!(
                "window.delta must lie in (0, 1), got {}",
                self.window.delta
            )));
        }
        if self
            .sweep
            .delta_grid
            .iter()
            .any(|d| !(*d > 0.0 && *d < 1.0))
        {
            return Err(QkdError::Config(
                "sweep.delta_grid entries must lie in (0, 1)".into(),
            ));
        }
        if self.sweep.distances_km.iter().any(|d| !(*d >= 0.0)) {
            return Err(QkdError::Config(
                "sweep.distances_km entries must be >= 0".into(),
            ));
        }
        if !(self.protocol.distance_km >= 0.0) {
            return Err(QkdError::Config("protocol.distance_km must be >= 0".into()));
        }
        match (self.source.distribution, &self.source.histogram) {
            (DistributionKind::Empirical, None) => {
                return Err(QkdError::Config(
                    "source.histogram is required for an empirical distribution".into(),
                ))
            }
            (DistributionKind::Empirical, Some(_)) => {}
            (_, Some(_)) => {
                return Err(QkdError::Config(
                    "source.histogram only applies to an empirical distribution".into(),
                ))
            }
            _ => {}
        }
        if self.protocol.lambda_decoy.is_some() && self.protocol.lambda_signal.is_none() {
            return Err(QkdError::Config(
                "protocol.lambda_decoy needs protocol.lambda_signal".into(),
            ));
        }
        if self.window_policy().has_overrides() && self.source.sequence_length.is_none() {
            return Err(QkdError::Config(
                "per-state tagged fractions only apply to finite sequence lengths".into(),
            ));
        }
        Ok(())
    }

    pub fn source_spec(&self) -> Result<SourceSpec> {
        let distribution = match self.source.distribution {
            DistributionKind::PoissonExact => PhotonDistribution::PoissonExact,
            DistributionKind::GaussianApprox => PhotonDistribution::GaussianApprox,
            DistributionKind::Empirical => {
                let path = self.source.histogram.as_ref().expect("validated");
                let file = fs::File::open(path).map_err(|e| {
                    QkdError::Config(format!("cannot open histogram {}: {e}", path.display()))
                })?;
                PhotonDistribution::Empirical(Histogram::from_csv_reader(file)?)
            }
        };
        SourceSpec::new(
            self.source.mean_photons,
            distribution,
            self.sequence_length(),
        )
    }

    pub fn sequence_length(&self) -> SequenceLength {
        match self.source.sequence_length {
            Some(k) => SequenceLength::Finite(k),
            None => SequenceLength::Asymptotic,
        }
    }

    pub fn window_policy(&self) -> WindowPolicy {
        let epsilon = match self.window.failure_exponent {
            Some(x) => sampling_epsilon(self.sequence_length(), x),
            None => self.window.epsilon,
        };
        WindowPolicy {
            epsilon,
            signal_tagged: self.window.signal_tagged,
            decoy_tagged: self.window.decoy_tagged,
            vacuum_tagged: self.window.vacuum_tagged,
        }
    }

    /// Optimization problem; the protocol template only fixes kind, `q`
    /// and `f`.
    pub fn problem(&self, kind: ProtocolKind) -> Result<Problem> {
        let p = &self.protocol;
        let template = ProtocolParams::new(kind, 2e-7, 1e-7, p.sift_factor, p.ec_inefficiency)?;
        Ok(Problem {
            source: self.source_spec()?,
            detector: self.detector,
            protocol: template,
            grid: self.sweep.lambda_grid,
            policy: self.window_policy(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let c = RunConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml_str("[source]\nmean = 3\n").unwrap_err();
        assert!(matches!(err, QkdError::Config(_)));
        assert!(RunConfig::from_toml_str("[bogus]\n").is_err());
    }

    #[test]
    fn partial_config_uses_defaults() {
        let c = RunConfig::from_toml_str(
            "[protocol]\nkind = \"weak_vacuum\"\ndistance_km = 50\n[window]\ndelta = 0.02\n",
        )
        .unwrap();
        assert_eq!(c.protocol.kind, ProtocolKind::WeakVacuum);
        assert_eq!(c.window.delta, 0.02);
        assert_eq!(c.detector, DetectorParams::default());
    }

    #[test]
    fn default_delta_grid_in_standard_deviations() {
        let g = default_delta_grid(1e6);
        assert_eq!(g.len(), 8);
        assert!((g[3] - 0.01).abs() < 1e-15);
        assert!((g[7] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empirical_needs_histogram() {
        let err = RunConfig::from_toml_str("[source]\ndistribution = \"empirical\"\n").unwrap_err();
        assert!(err.to_string().contains("histogram"));
    }

    #[test]
    fn overrides_need_finite_length() {
        assert!(RunConfig::from_toml_str("[window]\ndecoy_tagged = 0.1\n").is_err());
        let c = RunConfig::from_toml_str(
            "[source]\nsequence_length = 1000000\n[window]\ndecoy_tagged = 0.1\nfailure_exponent = 25\n",
        )
        .unwrap();
        let p = c.window_policy();
        assert!((p.epsilon - 5e-3).abs() < 1e-15);
        assert_eq!(p.decoy_tagged, Some(0.1));
    }
}
