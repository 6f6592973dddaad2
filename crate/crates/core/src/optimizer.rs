//! Exhaustive grid search over internal transmittances, distance sweeps and
//! maximum-distance search.

use std::sync::OnceLock;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::channel_sim::{simulate_observables, DetectorParams};
use crate::error::{QkdError, Result};
use crate::observed_bounds::StateLabel;
use crate::photon_bounds::condition1_check;
use crate::protocols::{
    condition_thresholds, gllp_rate_untrusted, untrusted_decoy_report, KeyRateReport, ProtocolKind,
    ProtocolParams, StateWindows,
};
use crate::source_model::{SourceSpec, Window};
use crate::trusted_baseline::{decoy_rate_trusted, gllp_rate_trusted};

/// Positive-rate threshold per pulse that defines the maximum distance.
pub const RATE_FLOOR: f64 = 1e-12;
/// Distances beyond this are not scanned.
pub const MAX_SCAN_KM: f64 = 1000.0;

/// Log-spaced grid `min · 10^(k/points_per_decade)` for `k = 0, 1, ...`
/// while the value stays below `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaGrid {
    pub min: f64,
    pub max: f64,
    pub points_per_decade: u32,
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid {
            min: 1e-10,
            max: 1e-6,
            points_per_decade: 25,
        }
    }
}

impl LambdaGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.min > 0.0 && self.max > self.min && self.max <= 1.0) {
            return Err(QkdError::domain(format!(
                "lambda grid needs 0 < min < max <= 1, got [{}, {}]",
                self.min, self.max
            )));
        }
        if self.points_per_decade == 0 {
            return Err(QkdError::domain(
                "lambda grid needs at least one point per decade",
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let start = self.min.log10();
        let step = 1.0 / self.points_per_decade as f64;
        (0..)
            .map(|k| 10f64.powf(start + k as f64 * step))
            .take_while(|&x| x < self.max)
            .collect()
    }

    /// Grid values satisfying Condition 1 for the given source and `δ`.
    pub fn feasible_values(&self, mean_photons: f64, delta: f64) -> Vec<f64> {
        self.values()
            .into_iter()
            .filter(|&l| condition1_check(mean_photons, delta, l))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub distances_km: Vec<f64>,
    pub lambda_grid: LambdaGrid,
    pub delta_grid: Vec<f64>,
}

/// How per-state windows are built from the source model and `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowPolicy {
    /// Sampling slack; forced to 0 for asymptotic sources.
    pub epsilon: f64,
    /// Tagged-fraction overrides for finite-length runs.
    pub signal_tagged: Option<f64>,
    pub decoy_tagged: Option<f64>,
    pub vacuum_tagged: Option<f64>,
}

impl WindowPolicy {
    pub fn has_overrides(&self) -> bool {
        self.signal_tagged.is_some() || self.decoy_tagged.is_some() || self.vacuum_tagged.is_some()
    }

    pub fn windows(&self, source: &SourceSpec, delta: f64) -> Result<StateWindows> {
        let base = Window::from_source(source, delta, self.epsilon)?;
        if source.is_asymptotic() || !self.has_overrides() {
            return Ok(StateWindows::shared(base));
        }
        let make = |o: Option<f64>| match o {
            Some(t) => Window::new(delta, t, base.epsilon()),
            None => Ok(base),
        };
        StateWindows::new(
            make(self.signal_tagged)?,
            make(self.decoy_tagged)?,
            make(self.vacuum_tagged)?,
        )
    }
}

/// A complete optimization problem: source, detector, protocol template,
/// grid and window policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub source: SourceSpec,
    pub detector: DetectorParams,
    pub protocol: ProtocolParams,
    pub grid: LambdaGrid,
    pub policy: WindowPolicy,
}

/// Winning grid point. For trusted runs the lambdas are the source
/// intensities divided by `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub lambda_signal: f64,
    pub lambda_decoy: f64,
    pub report: KeyRateReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trust {
    Untrusted,
    Trusted,
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub distance_km: f64,
    pub delta: f64,
    pub protocol: ProtocolKind,
    pub lambda_signal: Option<f64>,
    pub lambda_decoy: Option<f64>,
    pub rate_untrusted: f64,
    pub rate_trusted: f64,
    pub ratio: Option<f64>,
}

fn pool() -> &'static ThreadPool {
    static POOL: OnceLock<ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = std::env::var("QKD_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
        {
            builder = builder.num_threads(n);
        }
        builder.build().expect("thread pool")
    })
}

/// Index of the best candidate: largest raw rate, ties to the lower index.
fn best_index(
    candidates: usize,
    eval: impl Fn(usize) -> Option<f64> + Sync,
) -> Option<(usize, f64)> {
    pool().install(|| {
        (0..candidates)
            .into_par_iter()
            .filter_map(|i| eval(i).filter(|r| r.is_finite()).map(|r| (i, r)))
            .reduce_with(|a, b| {
                if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            })
    })
}

impl Problem {
    fn mean(&self) -> f64 {
        self.source.mean_photons()
    }

    /// Candidate `(λ_S, λ_D)` pairs in `(λ_S, λ_D)` ascending order.
    fn candidates(&self, delta: f64, trust: Trust) -> Result<Vec<(f64, f64)>> {
        let lambdas = self.grid.feasible_values(self.mean(), delta);
        let kind = self.protocol.kind();
        if !kind.is_decoy() {
            return Ok(lambdas.into_iter().map(|l| (l, 0.0)).collect());
        }
        let min_ratio = match trust {
            Trust::Trusted => 1.0,
            Trust::Untrusted => condition_thresholds(self.mean(), delta)?.cond2,
        };
        let mut pairs = Vec::new();
        for (i, &ls) in lambdas.iter().enumerate() {
            for &ld in &lambdas[..i] {
                if ls / ld > min_ratio {
                    pairs.push((ls, ld));
                }
            }
        }
        Ok(pairs)
    }

    /// Untrusted-source report at one grid point.
    pub fn evaluate_untrusted(
        &self,
        lambda_signal: f64,
        lambda_decoy: f64,
        distance_km: f64,
        windows: &StateWindows,
    ) -> Result<KeyRateReport> {
        let params = self.protocol.with_lambdas(lambda_signal, lambda_decoy)?;
        let n = self.mean();
        let s = simulate_observables(
            n * lambda_signal,
            distance_km,
            &self.detector,
            StateLabel::Signal,
        )?;
        if !params.kind().is_decoy() {
            return gllp_rate_untrusted(&s, &windows.signal, &params, &self.source);
        }
        let d = simulate_observables(
            n * lambda_decoy,
            distance_km,
            &self.detector,
            StateLabel::Decoy,
        )?;
        let v = simulate_observables(0.0, distance_km, &self.detector, StateLabel::Vacuum)?;
        untrusted_decoy_report(&s, &d, Some(&v), windows, &params, &self.source)
    }

    /// Trusted-source report with intensities `μ = Nλ_S`, `ν = Nλ_D`.
    pub fn evaluate_trusted(
        &self,
        lambda_signal: f64,
        lambda_decoy: f64,
        distance_km: f64,
    ) -> Result<KeyRateReport> {
        let n = self.mean();
        match self.protocol.kind() {
            ProtocolKind::Gllp => gllp_rate_trusted(
                n * lambda_signal,
                distance_km,
                &self.detector,
                &self.protocol,
            ),
            kind => decoy_rate_trusted(
                kind,
                n * lambda_signal,
                n * lambda_decoy,
                distance_km,
                &self.detector,
                &self.protocol,
            ),
        }
    }

    fn optimize(&self, trust: Trust, distance_km: f64, delta: f64) -> Result<Optimum> {
        let pairs = self.candidates(delta, trust)?;
        let windows = match trust {
            Trust::Untrusted => Some(self.policy.windows(&self.source, delta)?),
            Trust::Trusted => None,
        };
        let eval = |i: usize| {
            let (ls, ld) = pairs[i];
            let r = match &windows {
                Some(w) => self.evaluate_untrusted(ls, ld, distance_km, w),
                None => self.evaluate_trusted(ls, ld, distance_km),
            };
            r.ok().map(|r| r.rate_raw)
        };
        let (i, _) = best_index(pairs.len(), eval).ok_or_else(|| {
            QkdError::NoFeasiblePoint(format!(
                "no grid point of {} candidates yields a rate at {distance_km} km, delta={delta}",
                pairs.len()
            ))
        })?;
        let (ls, ld) = pairs[i];
        let report = match &windows {
            Some(w) => self.evaluate_untrusted(ls, ld, distance_km, w)?,
            None => self.evaluate_trusted(ls, ld, distance_km)?,
        };
        Ok(Optimum {
            lambda_signal: ls,
            lambda_decoy: ld,
            report,
        })
    }

    /// Best untrusted-source rate over the grid. Ties go to the smaller
    /// `λ_S`, then the smaller `λ_D`.
    pub fn optimize_lambdas(&self, distance_km: f64, delta: f64) -> Result<Optimum> {
        self.optimize(Trust::Untrusted, distance_km, delta)
    }

    /// Best trusted-source rate over the same grid, with `μ = Nλ`.
    pub fn optimize_trusted(&self, distance_km: f64, delta: f64) -> Result<Optimum> {
        self.optimize(Trust::Trusted, distance_km, delta)
    }

    /// Optimized rate, with an infeasible grid counted as zero.
    pub fn optimized_rate(&self, trust: Trust, distance_km: f64, delta: f64) -> Result<f64> {
        match self.optimize(trust, distance_km, delta) {
            Ok(o) => Ok(o.report.rate),
            Err(QkdError::NoFeasiblePoint(_)) => Ok(0.0),
            Err(e) => Err(e),
        }
    }

    /// Largest distance with optimized rate above [`RATE_FLOOR`], to 0.1 km.
    pub fn max_distance(&self, trust: Trust, delta: f64) -> Result<f64> {
        let positive =
            |l: f64| -> Result<bool> { Ok(self.optimized_rate(trust, l, delta)? > RATE_FLOOR) };
        if !positive(0.0)? {
            return Ok(0.0);
        }
        let mut good = 0.0;
        loop {
            let next = good + 1.0;
            if next > MAX_SCAN_KM {
                return Ok(good);
            }
            if !positive(next)? {
                break;
            }
            good = next;
        }
        let (mut a, mut b) = (good, good + 1.0);
        while b - a > 0.1 {
            let m = 0.5 * (a + b);
            if positive(m)? {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(a)
    }

    /// One row per `(δ, distance)`, `δ` outermost.
    pub fn sweep(&self, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
        let mut rows = Vec::with_capacity(spec.delta_grid.len() * spec.distances_km.len());
        for &delta in &spec.delta_grid {
            for &distance in &spec.distances_km {
                let (ls, ld, rate_u) = match self.optimize_lambdas(distance, delta) {
                    Ok(o) => (Some(o.lambda_signal), Some(o.lambda_decoy), o.report.rate),
                    Err(QkdError::NoFeasiblePoint(_)) => (None, None, 0.0),
                    Err(e) => return Err(e),
                };
                let rate_t = self.optimized_rate(Trust::Trusted, distance, delta)?;
                rows.push(SweepRow {
                    distance_km: distance,
                    delta,
                    protocol: self.protocol.kind(),
                    lambda_signal: ls,
                    lambda_decoy: ld.filter(|_| self.protocol.kind().is_decoy()),
                    rate_untrusted: rate_u,
                    rate_trusted: rate_t,
                    ratio: (rate_t > 0.0).then(|| rate_u / rate_t),
                });
            }
        }
        Ok(rows)
    }
}
