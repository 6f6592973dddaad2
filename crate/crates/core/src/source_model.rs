//! Input photon-number model, the untagged window and the tagged fraction.

use std::io::Read;

use crate::error::{QkdError, Result};
use crate::numerics::{gaussian_tail_delta, poisson_cdf, poisson_upper_tail};

/// Photon-number histogram indexed by photon count.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    probabilities: Vec<f64>,
}

impl Histogram {
    pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(QkdError::domain(
                "histogram probabilities must lie in [0, 1]",
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > Self::NORMALIZATION_TOLERANCE {
            return Err(QkdError::domain(format!(
                "histogram probabilities sum to {total}, expected 1"
            )));
        }
        Ok(Histogram { probabilities })
    }

    /// Reads a two-column CSV (`photon_count,probability`) with a header row.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != 2 {
                return Err(QkdError::Config(format!(
                    "histogram rows need 2 columns, found {}",
                    record.len()
                )));
            }
            let count: usize = record[0]
                .parse()
                .map_err(|e| QkdError::Config(format!("bad photon_count {:?}: {e}", &record[0])))?;
            let p: f64 = record[1]
                .parse()
                .map_err(|e| QkdError::Config(format!("bad probability {:?}: {e}", &record[1])))?;
            entries.push((count, p));
        }
        let len = entries.iter().map(|(c, _)| c + 1).max().unwrap_or(0);
        let mut probabilities = vec![0.0; len];
        for (count, p) in entries {
            probabilities[count] += p;
        }
        Histogram::new(probabilities)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn probability(&self, count: u64) -> f64 {
        self.probabilities
            .get(count as usize)
            .copied()
            .unwrap_or(0.0)
    }

    /// Largest photon count with a stored entry.
    pub fn max_count(&self) -> u64 {
        self.probabilities.len().saturating_sub(1) as u64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhotonDistribution {
    PoissonExact,
    GaussianApprox,
    Empirical(Histogram),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceLength {
    Finite(u64),
    Asymptotic,
}

/// Input photon-number model seen at the entrance of Alice's lab.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    mean_photons: f64,
    distribution: PhotonDistribution,
    sequence_length: SequenceLength,
}

impl SourceSpec {
    pub fn new(
        mean_photons: f64,
        distribution: PhotonDistribution,
        sequence_length: SequenceLength,
    ) -> Result<Self> {
        if !(mean_photons > 0.0 && mean_photons.is_finite()) {
            return Err(QkdError::domain(format!(
                "mean photon number must be positive, got {mean_photons}"
            )));
        }
        if sequence_length == SequenceLength::Finite(0) {
            return Err(QkdError::domain("sequence length must be at least 1"));
        }
        Ok(SourceSpec {
            mean_photons,
            distribution,
            sequence_length,
        })
    }

    /// Asymptotic Gaussian-approximated source, the simulation default.
    pub fn gaussian(mean_photons: f64) -> Result<Self> {
        Self::new(
            mean_photons,
            PhotonDistribution::GaussianApprox,
            SequenceLength::Asymptotic,
        )
    }

    pub fn mean_photons(&self) -> f64 {
        self.mean_photons
    }

    pub fn distribution(&self) -> &PhotonDistribution {
        &self.distribution
    }

    pub fn sequence_length(&self) -> SequenceLength {
        self.sequence_length
    }

    pub fn is_asymptotic(&self) -> bool {
        self.sequence_length == SequenceLength::Asymptotic
    }
}

/// Integer photon numbers `[lo, hi]` counted as untagged.
///
/// The lower edge `(1-δ)N` is rounded up and the upper edge `(1+δ)N` down,
/// so the integer window never leaves the real-valued one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UntaggedRange {
    pub lo: u64,
    pub hi: u64,
}

impl UntaggedRange {
    pub fn new(mean_photons: f64, delta: f64) -> Self {
        UntaggedRange {
            lo: snapped_ceil((1.0 - delta) * mean_photons),
            hi: snapped_floor((1.0 + delta) * mean_photons),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, m: u64) -> bool {
        self.lo <= m && m <= self.hi
    }

    /// `hi - lo`, the integer counterpart of `2δN`.
    pub fn width(&self) -> u64 {
        self.hi.saturating_sub(self.lo)
    }
}

// (1 - 0.01) * 1e6 evaluates to 990000.0000000001; snap such values first.
fn snap(x: f64) -> Option<f64> {
    let r = x.round();
    ((x - r).abs() <= 1e-9 * x.abs().max(1.0)).then_some(r)
}

fn snapped_ceil(x: f64) -> u64 {
    snap(x).unwrap_or_else(|| x.ceil()).max(0.0) as u64
}

fn snapped_floor(x: f64) -> u64 {
    snap(x).unwrap_or_else(|| x.floor()).max(0.0) as u64
}

/// Untagged window: half-width `δ`, tagged fraction `Δ`, sampling slack `ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    delta: f64,
    tagged_fraction: f64,
    epsilon: f64,
}

impl Window {
    pub fn new(delta: f64, tagged_fraction: f64, epsilon: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(QkdError::domain(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        if !(0.0..=1.0).contains(&tagged_fraction) {
            return Err(QkdError::domain(format!(
                "tagged fraction must lie in [0, 1], got {tagged_fraction}"
            )));
        }
        if !(0.0..1.0).contains(&epsilon) {
            return Err(QkdError::domain(format!(
                "sampling slack must lie in [0, 1), got {epsilon}"
            )));
        }
        if tagged_fraction + epsilon >= 1.0 {
            return Err(QkdError::VacuousBounds(tagged_fraction + epsilon));
        }
        Ok(Window {
            delta,
            tagged_fraction,
            epsilon,
        })
    }

    /// Window whose `Δ` is computed from the source model and whose `ε` is 0
    /// for asymptotic sources.
    pub fn from_source(source: &SourceSpec, delta: f64, epsilon: f64) -> Result<Self> {
        let eps = if source.is_asymptotic() { 0.0 } else { epsilon };
        Window::new(delta, tagged_fraction(source, delta)?, eps)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn tagged_fraction(&self) -> f64 {
        self.tagged_fraction
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `Δ + ε`.
    pub fn slack(&self) -> f64 {
        self.tagged_fraction + self.epsilon
    }

    /// `1 - Δ - ε`, the guaranteed untagged share of coding bits.
    pub fn untagged_share(&self) -> f64 {
        1.0 - self.slack()
    }

    pub fn range(&self, mean_photons: f64) -> UntaggedRange {
        UntaggedRange::new(mean_photons, self.delta)
    }
}

/// Tagged fraction `Δ = 1 - P(untagged)` for the source's distribution.
pub fn tagged_fraction(source: &SourceSpec, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(QkdError::domain(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let n = source.mean_photons();
    let range = UntaggedRange::new(n, delta);
    if range.is_empty() {
        return Ok(1.0);
    }
    let value = match source.distribution() {
        PhotonDistribution::GaussianApprox => gaussian_tail_delta(n, delta),
        PhotonDistribution::PoissonExact => {
            // Tails summed separately; 1 - (window mass) would cancel.
            let below = if range.lo == 0 {
                0.0
            } else {
                poisson_cdf((range.lo - 1) as f64, n)
            };
            below + poisson_upper_tail(range.hi + 1, n)
        }
        PhotonDistribution::Empirical(hist) => hist
            .probabilities()
            .iter()
            .enumerate()
            .filter(|(m, _)| !range.contains(*m as u64))
            .map(|(_, p)| p)
            .sum(),
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Heuristic sampling slack `ε = √(failure_exponent / K)`, taking the
/// unspecified constant in the `exp(-O(ε²K))` failure bound as 1.
pub fn sampling_epsilon(length: SequenceLength, failure_exponent: f64) -> f64 {
    match length {
        SequenceLength::Asymptotic => 0.0,
        SequenceLength::Finite(k) => (failure_exponent / k as f64).sqrt(),
    }
}

/// Guaranteed number of untagged coding bits, `(1-Δ-ε)K`.
pub fn untagged_coding_bits(window: &Window, length: SequenceLength) -> Option<f64> {
    match length {
        SequenceLength::Asymptotic => None,
        SequenceLength::Finite(k) => Some(window.untagged_share() * k as f64),
    }
}
