//! Brute-force adversary model at small `N`.
//!
//! Eve controls the source and fixes a yield `Y_{m,n}` and error rate
//! `e_{m,n}` for every input photon number `m` and output photon number `n`.
//! The same table applies to signal, decoy and vacuum pulses since she cannot
//! tell them apart. Every untagged quantity is summed exactly and compared
//! against the bounds produced by the main pipeline.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{QkdError, Result};
use crate::numerics::{entropy_bits, ln_poisson_pmf};
use crate::observed_bounds::{ObservedStats, StateLabel, UntaggedBounds};
use crate::photon_bounds::{pn_bounds, pn_exact, pn_exact_log};
use crate::protocols::{
    coefficients, condition_thresholds, gllp_rate_untrusted, untrusted_decoy_report, ProtocolKind,
    ProtocolParams, StateWindows,
};
use crate::source_model::{
    Histogram, PhotonDistribution, SequenceLength, SourceSpec, UntaggedRange, Window,
};

/// Largest mean photon number the exhaustive sums accept.
pub const MAX_ORACLE_MEAN: f64 = 200.0;

const ABS_TOL: f64 = 1e-12;
const REL_TOL: f64 = 1e-9;

fn le(a: f64, b: f64) -> bool {
    a <= b + ABS_TOL + REL_TOL * b.abs().max(a.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyFamily {
    Uniform,
    NOnly,
    MOnly,
    TwoPhotonSpike,
    Custom,
}

impl StrategyFamily {
    pub const RANDOM: [StrategyFamily; 4] = [
        StrategyFamily::Uniform,
        StrategyFamily::NOnly,
        StrategyFamily::MOnly,
        StrategyFamily::TwoPhotonSpike,
    ];
}

/// Eve's yield and error tables over `0 <= n <= m <= m_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryStrategy {
    yields: Vec<Vec<f64>>,
    errors: Vec<Vec<f64>>,
    family: StrategyFamily,
    seed: Option<u64>,
}

impl AdversaryStrategy {
    pub fn from_fn(m_max: u64, f: impl Fn(u64, u64) -> (f64, f64)) -> Result<Self> {
        let mut yields = Vec::with_capacity(m_max as usize + 1);
        let mut errors = Vec::with_capacity(m_max as usize + 1);
        for m in 0..=m_max {
            let (ys, es): (Vec<f64>, Vec<f64>) = (0..=m).map(|n| f(m, n)).unzip();
            if let Some(bad) = ys.iter().chain(&es).find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(QkdError::domain(format!(
                    "strategy values must lie in [0, 1], got {bad} at m={m}"
                )));
            }
            yields.push(ys);
            errors.push(es);
        }
        Ok(AdversaryStrategy {
            yields,
            errors,
            family: StrategyFamily::Custom,
            seed: None,
        })
    }

    pub fn constant(m_max: u64, yield_value: f64, error_value: f64) -> Result<Self> {
        Self::from_fn(m_max, |_, _| (yield_value, error_value))
    }

    /// Random strategy of the given family. Vacuum detections carry error
    /// rate 1/2 in every family.
    pub fn random(family: StrategyFamily, m_max: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let size = m_max as usize + 1;
        let per_n: Vec<(f64, f64)> = (0..size).map(|_| (rng.random(), rng.random())).collect();
        let per_m: Vec<f64> = (0..size).map(|_| rng.random()).collect();
        let mut yields = Vec::with_capacity(size);
        let mut errors = Vec::with_capacity(size);
        for m in 0..size {
            let mut ys = Vec::with_capacity(m + 1);
            let mut es = Vec::with_capacity(m + 1);
            for n in 0..=m {
                let (y, e) = match family {
                    StrategyFamily::NOnly => per_n[n],
                    StrategyFamily::MOnly => (per_m[m], rng.random()),
                    StrategyFamily::TwoPhotonSpike => {
                        let y = if n == 2 {
                            1.0
                        } else {
                            0.05 * rng.random::<f64>()
                        };
                        (y, rng.random())
                    }
                    StrategyFamily::Uniform | StrategyFamily::Custom => {
                        (rng.random(), rng.random())
                    }
                };
                ys.push(y);
                es.push(if n == 0 { 0.5 } else { e });
            }
            yields.push(ys);
            errors.push(es);
        }
        AdversaryStrategy {
            yields,
            errors,
            family,
            seed: Some(seed),
        }
    }

    pub fn m_max(&self) -> u64 {
        (self.yields.len() - 1) as u64
    }

    pub fn family(&self) -> StrategyFamily {
        self.family
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// `Y_{m,n}`; zero outside the table.
    pub fn yield_at(&self, m: u64, n: u64) -> f64 {
        self.yields
            .get(m as usize)
            .and_then(|r| r.get(n as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// `e_{m,n}`; zero outside the table.
    pub fn error_at(&self, m: u64, n: u64) -> f64 {
        self.errors
            .get(m as usize)
            .and_then(|r| r.get(n as usize))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Transmittances of the three states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateLambdas {
    pub signal: f64,
    pub decoy: f64,
    pub vacuum: f64,
}

/// Exact statistics of one state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTruth {
    pub label: StateLabel,
    pub lambda: f64,
    /// Gain and error-gain over all pulses, tagged included.
    pub q_overall: f64,
    pub eq_overall: f64,
    /// Gain and error-gain conditioned on untagged pulses.
    pub q_untagged: f64,
    pub eq_untagged: f64,
    /// `Σ_m P_in(m) P_n(m)` for each `n`.
    pub emission: Vec<f64>,
    /// `Y_n` as the ratio of detected to emitted `n`-photon pulses.
    pub y_n: Vec<f64>,
    /// `Y_n` rebuilt as `Σ_m P{m|n} Y_{m,n}`.
    pub y_n_decomposed: Vec<f64>,
    /// `P{m|n}` over the window, indexed `[n][m - lo]`.
    pub p_m_given_n: Vec<Vec<f64>>,
}

impl StateTruth {
    pub fn observed(&self) -> Result<ObservedStats> {
        let qber = if self.q_overall > 0.0 {
            (self.eq_overall / self.q_overall).min(1.0)
        } else {
            0.0
        };
        ObservedStats::new(self.q_overall.min(1.0), qber, self.label)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub range: UntaggedRange,
    pub tagged_fraction: f64,
    /// `P_in(m)` on the window, conditioned on untagged.
    pub p_in: Vec<f64>,
    pub signal: StateTruth,
    pub decoy: StateTruth,
    pub vacuum: StateTruth,
    pub q1_true: f64,
    /// `None` when `q1_true` is zero.
    pub e1_true: Option<f64>,
    /// Untagged signal gain from pulses that left with at most one photon.
    pub q_omega_true: f64,
}

impl GroundTruth {
    /// Whether signal and decoy single-photon yields differ.
    pub fn y1_differs(&self) -> bool {
        match (self.signal.y_n.get(1), self.decoy.y_n.get(1)) {
            (Some(a), Some(b)) => (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1e-300),
            _ => false,
        }
    }
}

/// Full input distribution as a probability vector over `m`.
pub fn input_distribution(source: &SourceSpec) -> Result<Vec<f64>> {
    let n = source.mean_photons();
    if n > MAX_ORACLE_MEAN {
        return Err(QkdError::Scale(format!(
            "mean photon number {n} exceeds the exhaustive limit {MAX_ORACLE_MEAN}"
        )));
    }
    match source.distribution() {
        PhotonDistribution::Empirical(h) => Ok(h.probabilities().to_vec()),
        PhotonDistribution::PoissonExact => Ok(poisson_vector(n)),
        PhotonDistribution::GaussianApprox => Err(QkdError::domain(
            "the oracle needs an explicit photon-number distribution".to_string(),
        )),
    }
}

fn poisson_vector(mean: f64) -> Vec<f64> {
    let cap = (mean + 12.0 * mean.sqrt() + 20.0).ceil() as u64;
    let mut p: Vec<f64> = (0..=cap).map(|k| ln_poisson_pmf(k, mean).exp()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

fn state_truth(
    label: StateLabel,
    lambda: f64,
    full: &[f64],
    range: UntaggedRange,
    p_in: &[f64],
    strategy: &AdversaryStrategy,
) -> StateTruth {
    let mut q_overall = 0.0;
    let mut eq_overall = 0.0;
    for (m, &pm) in full.iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let m = m as u64;
        for n in 0..=m {
            let w = pm * pn_exact(m, n, lambda) * strategy.yield_at(m, n);
            q_overall += w;
            eq_overall += w * strategy.error_at(m, n);
        }
    }

    let n_top = range.hi as usize;
    // ln(P_in(m) P_n(m)) per n, so P{m|n} keeps full precision even when the
    // emission probability itself underflows.
    let mut joint_ln = vec![vec![f64::NEG_INFINITY; p_in.len()]; n_top + 1];
    let mut q_untagged = 0.0;
    let mut eq_untagged = 0.0;
    for (i, &pm) in p_in.iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        let m = range.lo + i as u64;
        for n in 0..=m {
            let lv = pn_exact_log(m, n, lambda);
            if lv.is_zero() {
                continue;
            }
            let ln = pm.ln() + lv.ln_abs();
            joint_ln[n as usize][i] = ln;
            let w = ln.exp() * strategy.yield_at(m, n);
            q_untagged += w;
            eq_untagged += w * strategy.error_at(m, n);
        }
    }

    let mut emission = Vec::with_capacity(n_top + 1);
    let mut y_n = Vec::with_capacity(n_top + 1);
    let mut y_n_decomposed = Vec::with_capacity(n_top + 1);
    let mut p_m_given_n = Vec::with_capacity(n_top + 1);
    for (n, row) in joint_ln.iter().enumerate() {
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            emission.push(0.0);
            y_n.push(0.0);
            y_n_decomposed.push(0.0);
            p_m_given_n.push(vec![0.0; row.len()]);
            continue;
        }
        let scaled: Vec<f64> = row.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = scaled.iter().sum();
        let yield_of = |i: usize| strategy.yield_at(range.lo + i as u64, n as u64);
        let detected: f64 = scaled
            .iter()
            .enumerate()
            .map(|(i, p)| p * yield_of(i))
            .sum();
        let cond: Vec<f64> = scaled.iter().map(|p| p / total).collect();
        let decomposed = cond.iter().enumerate().map(|(i, p)| p * yield_of(i)).sum();
        emission.push(total * top.exp());
        y_n.push(detected / total);
        y_n_decomposed.push(decomposed);
        p_m_given_n.push(cond);
    }

    StateTruth {
        label,
        lambda,
        q_overall,
        eq_overall,
        q_untagged,
        eq_untagged,
        emission,
        y_n,
        y_n_decomposed,
        p_m_given_n,
    }
}

/// Exact untagged statistics for a strategy, by enumeration over the window.
pub fn ground_truth(
    source: &SourceSpec,
    delta: f64,
    lambdas: StateLambdas,
    strategy: &AdversaryStrategy,
) -> Result<GroundTruth> {
    let full = input_distribution(source)?;
    let range = UntaggedRange::new(source.mean_photons(), delta);
    if range.is_empty() {
        return Err(QkdError::domain("untagged window is empty".to_string()));
    }
    let window_mass: f64 = (range.lo..=range.hi)
        .map(|m| full.get(m as usize).copied().unwrap_or(0.0))
        .sum();
    if window_mass <= 0.0 {
        return Err(QkdError::VacuousBounds(1.0));
    }
    let p_in: Vec<f64> = (range.lo..=range.hi)
        .map(|m| full.get(m as usize).copied().unwrap_or(0.0) / window_mass)
        .collect();

    let signal = state_truth(
        StateLabel::Signal,
        lambdas.signal,
        &full,
        range,
        &p_in,
        strategy,
    );
    let decoy = state_truth(
        StateLabel::Decoy,
        lambdas.decoy,
        &full,
        range,
        &p_in,
        strategy,
    );
    let vacuum = state_truth(
        StateLabel::Vacuum,
        lambdas.vacuum,
        &full,
        range,
        &p_in,
        strategy,
    );

    let mut q1 = 0.0;
    let mut eq1 = 0.0;
    let mut q_omega = 0.0;
    for (i, &pm) in p_in.iter().enumerate() {
        let m = range.lo + i as u64;
        let p1 = pm * pn_exact(m, 1, lambdas.signal) * strategy.yield_at(m, 1);
        q1 += p1;
        eq1 += p1 * strategy.error_at(m, 1);
        q_omega += p1 + pm * pn_exact(m, 0, lambdas.signal) * strategy.yield_at(m, 0);
    }

    Ok(GroundTruth {
        range,
        tagged_fraction: (1.0 - window_mass).max(0.0),
        p_in,
        signal,
        decoy,
        vacuum,
        q1_true: q1,
        e1_true: (q1 > 0.0).then(|| eq1 / q1),
        q_omega_true: q_omega,
    })
}

/// `Y_n = Σ_m P{m|n} Y_{m,n}` within `1e-10` for every state and every `n`
/// that can be emitted, with each `P{m|n}` a proper distribution.
pub fn yn_decomposition_check(truth: &GroundTruth) -> bool {
    [&truth.signal, &truth.decoy, &truth.vacuum]
        .iter()
        .all(|s| {
            s.p_m_given_n.iter().enumerate().all(|(n, cond)| {
                if cond.iter().all(|&p| p == 0.0) {
                    return true;
                }
                let norm: f64 = cond.iter().sum();
                (norm - 1.0).abs() <= 1e-10 && (s.y_n[n] - s.y_n_decomposed[n]).abs() <= 1e-10
            })
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFamily {
    Poisson,
    UniformWindow,
    TaggedMix,
}

impl SourceFamily {
    pub const ALL: [SourceFamily; 3] = [
        SourceFamily::Poisson,
        SourceFamily::UniformWindow,
        SourceFamily::TaggedMix,
    ];
}

fn draw_source(
    family: SourceFamily,
    mean: f64,
    range: UntaggedRange,
    rng: &mut ChaCha8Rng,
) -> Result<SourceSpec> {
    let probabilities = match family {
        SourceFamily::Poisson => poisson_vector(mean),
        SourceFamily::UniformWindow => {
            let mut p = vec![0.0; range.hi as usize + 1];
            let w = 1.0 / (range.hi - range.lo + 1) as f64;
            for m in range.lo..=range.hi {
                p[m as usize] = w;
            }
            p
        }
        SourceFamily::TaggedMix => {
            let top = range.hi + range.width() + 5;
            let tagged: f64 = rng.random_range(0.0..0.3);
            let mut p = vec![0.0; top as usize + 1];
            let inside: Vec<f64> = (range.lo..=range.hi)
                .map(|_| rng.random::<f64>() + 1e-3)
                .collect();
            let outside: Vec<u64> = (0..=top).filter(|m| !range.contains(*m)).collect();
            let out_w: Vec<f64> = outside.iter().map(|_| rng.random::<f64>() + 1e-3).collect();
            let si: f64 = inside.iter().sum();
            let so: f64 = out_w.iter().sum();
            for (k, m) in (range.lo..=range.hi).enumerate() {
                p[m as usize] = (1.0 - tagged) * inside[k] / si;
            }
            for (k, &m) in outside.iter().enumerate() {
                p[m as usize] = tagged * out_w[k] / so;
            }
            p
        }
    };
    let total: f64 = probabilities.iter().sum();
    let normalized = probabilities.into_iter().map(|x| x / total).collect();
    SourceSpec::new(
        mean,
        PhotonDistribution::Empirical(Histogram::new(normalized)?),
        SequenceLength::Asymptotic,
    )
}

/// Outcome of one campaign trial. `None` marks a check that does not apply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub strategy: StrategyFamily,
    pub source: SourceFamily,
    pub mean_photons: f64,
    pub delta: f64,
    pub lo: u64,
    pub hi: u64,
    pub tagged_fraction: f64,
    pub lambda_signal: f64,
    pub lambda_decoy: f64,
    pub q1_true: f64,
    pub q1_wv: f64,
    pub q1_od: f64,
    pub e1_true: Option<f64>,
    pub e1_wv: Option<f64>,
    pub e1_od: Option<f64>,
    pub gain_ok: bool,
    pub error_gain_ok: bool,
    pub sandwich_ok: bool,
    pub q1_wv_ok: bool,
    pub e1_wv_ok: bool,
    pub q1_od_ok: bool,
    pub e1_od_ok: bool,
    pub ordering_ok: Option<bool>,
    pub gllp_ok: bool,
    pub yn_ok: bool,
    pub y1_differs: bool,
    pub error: String,
}

impl TrialRecord {
    pub fn violated(&self) -> bool {
        !self.error.is_empty()
            || !(self.gain_ok
                && self.error_gain_ok
                && self.sandwich_ok
                && self.q1_wv_ok
                && self.e1_wv_ok
                && self.q1_od_ok
                && self.e1_od_ok
                && self.ordering_ok.unwrap_or(true)
                && self.gllp_ok
                && self.yn_ok)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CampaignOptions {
    pub trials: u64,
    pub seed: u64,
    /// Test hook: inflate the weak+vacuum single-photon bound so every
    /// trial reports a violation.
    pub corrupt_bound: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignReport {
    pub records: Vec<TrialRecord>,
}

impl CampaignReport {
    pub fn violations(&self) -> usize {
        self.records.iter().filter(|r| r.violated()).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Draw {
    mean: f64,
    delta: f64,
    range: UntaggedRange,
    lambda_signal: f64,
    lambda_decoy: f64,
}

fn draw_parameters(rng: &mut ChaCha8Rng, mean_range: (f64, f64)) -> Result<Draw> {
    for _ in 0..10_000 {
        let mean = rng.random_range(mean_range.0..=mean_range.1);
        let delta = rng.random_range(0.02..0.6);
        let range = UntaggedRange::new(mean, delta);
        if range.lo <= 2 || range.hi <= range.lo {
            continue;
        }
        let cond2 = condition_thresholds(mean, delta)?.cond2;
        let cap = 1.0 / ((1.0 + delta) * mean);
        let lambda_signal = cap * rng.random_range(0.02..0.999);
        let lambda_decoy = lambda_signal / (cond2 * rng.random_range(1.0001..3.0));
        return Ok(Draw {
            mean,
            delta,
            range,
            lambda_signal,
            lambda_decoy,
        });
    }
    Err(QkdError::InternalInconsistency(
        "could not draw a valid oracle instance".to_string(),
    ))
}

fn run_trial(trial: u64, opts: &CampaignOptions) -> TrialRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(trial);
    let strategy_family = StrategyFamily::RANDOM[(trial % 4) as usize];
    let source_family = SourceFamily::ALL[((trial / 4) % 3) as usize];

    let mut record = TrialRecord {
        trial,
        strategy: strategy_family,
        source: source_family,
        mean_photons: 0.0,
        delta: 0.0,
        lo: 0,
        hi: 0,
        tagged_fraction: 0.0,
        lambda_signal: 0.0,
        lambda_decoy: 0.0,
        q1_true: 0.0,
        q1_wv: 0.0,
        q1_od: 0.0,
        e1_true: None,
        e1_wv: None,
        e1_od: None,
        gain_ok: false,
        error_gain_ok: false,
        sandwich_ok: false,
        q1_wv_ok: false,
        e1_wv_ok: false,
        q1_od_ok: false,
        e1_od_ok: false,
        ordering_ok: None,
        gllp_ok: false,
        yn_ok: false,
        y1_differs: false,
        error: String::new(),
    };
    if let Err(e) = fill_trial(&mut record, &mut rng, opts) {
        record.error = e.to_string();
    }
    record
}

fn fill_trial(r: &mut TrialRecord, rng: &mut ChaCha8Rng, opts: &CampaignOptions) -> Result<()> {
    let d = draw_parameters(rng, (10.0, 60.0))?;
    r.mean_photons = d.mean;
    r.delta = d.delta;
    r.lo = d.range.lo;
    r.hi = d.range.hi;
    r.lambda_signal = d.lambda_signal;
    r.lambda_decoy = d.lambda_decoy;

    let source = draw_source(r.source, d.mean, d.range, rng)?;
    let full = input_distribution(&source)?;
    let strategy = AdversaryStrategy::random(r.strategy, full.len() as u64 - 1, rng.random());
    let lambdas = StateLambdas {
        signal: d.lambda_signal,
        decoy: d.lambda_decoy,
        vacuum: 0.0,
    };
    let truth = ground_truth(&source, d.delta, lambdas, &strategy)?;
    let window = Window::from_source(&source, d.delta, 0.0)?;
    r.tagged_fraction = window.tagged_fraction();
    r.q1_true = truth.q1_true;
    r.e1_true = truth.e1_true;

    let states = [&truth.signal, &truth.decoy, &truth.vacuum];
    let obs: Vec<ObservedStats> = states.iter().map(|s| s.observed()).collect::<Result<_>>()?;
    let bounds: Vec<UntaggedBounds> = obs
        .iter()
        .map(|o| UntaggedBounds::new(o, &window))
        .collect::<Result<_>>()?;
    r.gain_ok = states
        .iter()
        .zip(&bounds)
        .all(|(s, b)| le(b.q_lower, s.q_untagged) && le(s.q_untagged, b.q_upper));
    r.error_gain_ok = states
        .iter()
        .zip(&bounds)
        .all(|(s, b)| le(b.eq_lower, s.eq_untagged) && le(s.eq_untagged, b.eq_upper));

    r.sandwich_ok = sandwich_holds(d.mean, d.delta, d.lambda_signal)?
        && sandwich_holds(d.mean, d.delta, d.lambda_decoy)?;

    let windows = StateWindows::shared(window);
    let wv = ProtocolParams::decoy(ProtocolKind::WeakVacuum, d.lambda_signal, d.lambda_decoy)?;
    let rep = untrusted_decoy_report(&obs[0], &obs[1], Some(&obs[2]), &windows, &wv, &source)?;
    let mut q1_wv = rep.q1_lower.unwrap_or(0.0);
    if opts.corrupt_bound {
        q1_wv += 1.0;
    }
    r.q1_wv = q1_wv;
    r.e1_wv = rep.e1_upper_raw;
    r.q1_wv_ok = le(q1_wv, truth.q1_true);
    r.e1_wv_ok = match (rep.e1_upper_raw, truth.e1_true) {
        (Some(bound), Some(t)) => le(t, bound),
        _ => true,
    };

    let od = ProtocolParams::decoy(ProtocolKind::OneDecoy, d.lambda_signal, d.lambda_decoy)?;
    let rep_od = untrusted_decoy_report(&obs[0], &obs[1], None, &windows, &od, &source)?;
    r.q1_od = rep_od.q1_lower.unwrap_or(0.0);
    r.e1_od = rep_od.e1_upper_raw;
    r.q1_od_ok = le(r.q1_od, truth.q1_true);
    r.e1_od_ok = match (rep_od.e1_upper_raw, truth.e1_true) {
        (Some(bound), Some(t)) => le(t, bound),
        _ => true,
    };
    // Only a theorem without tagged pulses: the weak+vacuum vacuum bound is
    // inflated by the tagged fraction, the one-decoy bound is not.
    if window.tagged_fraction() == 0.0 {
        let weaker_e1 = match (rep_od.e1_upper_raw, rep.e1_upper_raw) {
            (Some(o), Some(w)) => le(w, o),
            (None, Some(_)) | (None, None) => true,
            (Some(_), None) => false,
        };
        r.ordering_ok = Some(le(r.q1_od, q1_wv) && weaker_e1);
    }

    let gllp = ProtocolParams::gllp(d.lambda_signal)?;
    let g = gllp_rate_untrusted(&obs[0], &window, &gllp, &source)?;
    let q_omega = g.q_omega_lower.unwrap_or(0.0);
    let true_rate = {
        let ec = obs[0].gain() * gllp.ec_inefficiency() * entropy_bits(obs[0].qber());
        let t = truth.q_omega_true;
        let pa = if t > 0.0 {
            t * (1.0 - entropy_bits((obs[0].error_gain() / t).min(0.5)))
        } else {
            0.0
        };
        gllp.sift_factor() * (pa - ec)
    };
    r.gllp_ok = le(q_omega, truth.q_omega_true) && le(g.rate_raw, true_rate);

    r.yn_ok = yn_decomposition_check(&truth);
    r.y1_differs = truth.y1_differs();
    Ok(())
}

/// Randomized soundness campaign. Trials run in parallel; the report is in
/// trial order and depends only on `(trials, seed)`.
pub fn soundness_campaign_with(opts: CampaignOptions) -> CampaignReport {
    let records = (0..opts.trials)
        .into_par_iter()
        .map(|t| run_trial(t, &opts))
        .collect();
    CampaignReport { records }
}

pub fn soundness_campaign(trials: u64, seed: u64) -> CampaignReport {
    soundness_campaign_with(CampaignOptions {
        trials,
        seed,
        corrupt_bound: false,
    })
}

/// `P̲_n <= P_n(m) <= P̄_n` for every untagged `m` and every `n`.
pub fn sandwich_holds(mean: f64, delta: f64, lambda: f64) -> Result<bool> {
    let b = pn_bounds(mean, delta, lambda, None)?;
    let range = b.range();
    for m in range.lo..=range.hi {
        for n in 0..=range.hi {
            let p = pn_exact(m, n, lambda);
            let lower = b.lower_log(n).to_f64();
            let upper = b.upper_log(n).to_f64();
            let tol = 1e-12 * p;
            if p + tol < lower || p > upper + tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Summary of a randomized property sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyReport {
    pub instances: usize,
    pub violations: Vec<String>,
}

/// Sandwich property on random `(N ≤ 60, δ, λ)` satisfying Condition 1.
pub fn sandwich_campaign(instances: u64, seed: u64) -> PropertyReport {
    let violations: Vec<String> = (0..instances)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let (mean, delta) = loop {
                let mean = rng.random_range(1.0..=60.0);
                let delta = rng.random_range(0.01..0.99);
                if !UntaggedRange::new(mean, delta).is_empty() {
                    break (mean, delta);
                }
            };
            let lambda = rng.random_range(0.0..0.999) / ((1.0 + delta) * mean);
            match sandwich_holds(mean, delta, lambda) {
                Ok(true) => None,
                Ok(false) => Some(format!("N={mean} delta={delta} lambda={lambda}")),
                Err(e) => Some(format!("N={mean} delta={delta} lambda={lambda}: {e}")),
            }
        })
        .collect();
    PropertyReport {
        instances: instances as usize,
        violations,
    }
}

/// Sign structure of the coefficients and threshold ordering on random
/// Condition 2 instances with `N` in `[10, 1000]`.
pub fn lemma_campaign(instances: u64, seed: u64) -> PropertyReport {
    let violations: Vec<String> = (0..instances)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            let d = match draw_parameters(&mut rng, (10.0, 1000.0)) {
                Ok(d) => d,
                Err(e) => return Some(e.to_string()),
            };
            let tag = format!(
                "N={} delta={} lambda_S={} lambda_D={}",
                d.mean, d.delta, d.lambda_signal, d.lambda_decoy
            );
            let c = match coefficients(d.mean, d.delta, d.lambda_signal, d.lambda_decoy) {
                Ok(c) => c,
                Err(e) => return Some(format!("{tag}: {e}")),
            };
            let t = c.thresholds;
            let mut problems = Vec::new();
            if !(t.cond2 >= t.cond2b && t.cond2b >= t.cond2a) {
                problems.push(format!("threshold order {t:?}"));
            }
            if !(c.a0 < 0.0) {
                problems.push(format!("a0={}", c.a0));
            }
            if !(c.a1 < 0.0) {
                problems.push(format!("a1={}", c.a1));
            }
            if let Some(n) = c.a2_range().find(|&n| !c.a2(n).is_positive()) {
                problems.push(format!("a2({n}) not positive"));
            }
            if c.a3_worst_case().sub(c.a3_bound).is_negative() {
                problems.push("a3 below its bound".to_string());
            }
            (!problems.is_empty()).then(|| format!("{tag}: {}", problems.join(", ")))
        })
        .collect();
    PropertyReport {
        instances: instances as usize,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_source(mean: f64, delta: f64) -> SourceSpec {
        let r = UntaggedRange::new(mean, delta);
        let mut p = vec![0.0; r.hi as usize + 1];
        for m in r.lo..=r.hi {
            p[m as usize] = 1.0 / (r.hi - r.lo + 1) as f64;
        }
        SourceSpec::new(
            mean,
            PhotonDistribution::Empirical(Histogram::new(p).unwrap()),
            SequenceLength::Asymptotic,
        )
        .unwrap()
    }

    const LAMBDAS: StateLambdas = StateLambdas {
        signal: 0.04,
        decoy: 0.01,
        vacuum: 0.0,
    };

    #[test]
    fn perfect_detection_strategy() {
        let s = uniform_source(20.0, 0.2);
        let st = AdversaryStrategy::constant(24, 1.0, 0.0).unwrap();
        let t = ground_truth(&s, 0.2, LAMBDAS, &st).unwrap();
        assert!((t.signal.q_untagged - 1.0).abs() < 1e-12);
        assert_eq!(t.e1_true, Some(0.0));
    }

    #[test]
    fn blind_strategy() {
        let s = uniform_source(20.0, 0.2);
        let st = AdversaryStrategy::constant(24, 0.0, 0.0).unwrap();
        let t = ground_truth(&s, 0.2, LAMBDAS, &st).unwrap();
        assert_eq!(t.signal.q_untagged, 0.0);
        assert_eq!(t.decoy.q_overall, 0.0);
        assert_eq!(t.q1_true, 0.0);
        assert_eq!(t.e1_true, None);
    }

    #[test]
    fn q1_matches_exact_rational_summation() {
        let s = uniform_source(20.0, 0.2);
        let st = AdversaryStrategy::from_fn(24, |_, n| ((0.5 * n as f64).min(1.0), 0.0)).unwrap();
        let t = ground_truth(&s, 0.2, LAMBDAS, &st).unwrap();
        assert!((t.q1_true - 0.182_678_116_933_796_9).abs() < 1e-14);
        assert!((t.signal.q_untagged - 0.372_860_194_709_385_36).abs() < 1e-13);
    }

    #[test]
    fn oracle_instance_bounds_hold() {
        let s = uniform_source(20.0, 0.2);
        let st = AdversaryStrategy::from_fn(24, |_, n| {
            ((0.5 * n as f64).min(1.0), if n == 0 { 0.5 } else { 0.033 })
        })
        .unwrap();
        let t = ground_truth(&s, 0.2, LAMBDAS, &st).unwrap();
        let w = Window::from_source(&s, 0.2, 0.0).unwrap();
        assert_eq!(w.tagged_fraction(), 0.0);
        let windows = StateWindows::shared(w);
        let obs: Vec<_> = [&t.signal, &t.decoy, &t.vacuum]
            .iter()
            .map(|x| x.observed().unwrap())
            .collect();
        let wv = ProtocolParams::decoy(ProtocolKind::WeakVacuum, 0.04, 0.01).unwrap();
        let r = untrusted_decoy_report(&obs[0], &obs[1], Some(&obs[2]), &windows, &wv, &s).unwrap();
        let q1 = r.q1_lower.unwrap();
        assert!(q1 <= t.q1_true && q1 > 0.0);
        assert!(r.e1_upper_raw.unwrap() >= t.e1_true.unwrap());
        let od = ProtocolParams::decoy(ProtocolKind::OneDecoy, 0.04, 0.01).unwrap();
        let r2 = untrusted_decoy_report(&obs[0], &obs[1], None, &windows, &od, &s).unwrap();
        assert!(r2.q1_lower.unwrap() <= q1);
    }

    #[test]
    fn decomposition_constant_strategy() {
        let s = uniform_source(20.0, 0.2);
        let st = AdversaryStrategy::constant(24, 0.3, 0.1).unwrap();
        let t = ground_truth(&s, 0.2, LAMBDAS, &st).unwrap();
        assert!(yn_decomposition_check(&t));
        assert!(!t.y1_differs());
        assert!(t
            .signal
            .y_n
            .iter()
            .zip(&t.signal.emission)
            .all(|(y, e)| *e == 0.0 || (y - 0.3).abs() < 1e-12));
    }

    #[test]
    fn decomposition_m_dependent_strategy() {
        let s = uniform_source(20.0, 0.2);
        let st = AdversaryStrategy::from_fn(24, |m, n| (m as f64 / 24.0 * n.min(1) as f64, 0.0))
            .unwrap();
        let t = ground_truth(&s, 0.2, LAMBDAS, &st).unwrap();
        assert!(yn_decomposition_check(&t));
        assert!(t.y1_differs());
    }

    #[test]
    fn oracle_rejects_large_mean() {
        let s = SourceSpec::new(
            500.0,
            PhotonDistribution::PoissonExact,
            SequenceLength::Asymptotic,
        )
        .unwrap();
        let st = AdversaryStrategy::constant(10, 0.1, 0.1).unwrap();
        assert!(matches!(
            ground_truth(&s, 0.1, LAMBDAS, &st),
            Err(QkdError::Scale(_))
        ));
    }

    #[test]
    fn single_trial_is_clean() {
        let report = soundness_campaign(1, 0);
        assert_eq!(report.violations(), 0, "{:?}", report.records);
    }

    #[test]
    fn corrupted_bound_is_caught() {
        let report = soundness_campaign_with(CampaignOptions {
            trials: 4,
            seed: 1,
            corrupt_bound: true,
        });
        assert_eq!(report.violations(), 4);
    }

    #[test]
    fn spike_strategy_trials_are_clean() {
        let report = soundness_campaign(64, 7);
        let spikes: Vec<_> = report
            .records
            .iter()
            .filter(|r| r.strategy == StrategyFamily::TwoPhotonSpike)
            .collect();
        assert_eq!(spikes.len(), 16);
        assert!(spikes.iter().all(|r| !r.violated()), "{spikes:?}");
    }

    #[test]
    fn campaign_is_deterministic() {
        assert_eq!(soundness_campaign(12, 3), soundness_campaign(12, 3));
    }

    #[test]
    fn random_strategy_vacuum_errors_are_random() {
        let st = AdversaryStrategy::random(StrategyFamily::Uniform, 30, 9);
        assert!((0..=30).all(|m| st.error_at(m, 0) == 0.5));
    }
}
