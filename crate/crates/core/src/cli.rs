//! Command implementations behind the `qkd` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::channel_sim::simulate_observables;
use crate::config::RunConfig;
use crate::error::{Condition, QkdError, Result};
use crate::figures::{self, write_csv_file};
use crate::observed_bounds::{ObservedStats, StateLabel};
use crate::optimizer::{SweepRow, SweepSpec, Trust};
use crate::oracle::{soundness_campaign_with, CampaignOptions, CampaignReport};
use crate::protocols::{condition_thresholds, KeyRateReport, ProtocolKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_CONDITION: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

/// Process exit status for a failed command.
pub fn exit_code(err: &QkdError) -> i32 {
    match err {
        QkdError::ConditionViolated { .. } => EXIT_CONDITION,
        _ => EXIT_CONFIG,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RateOptions {
    pub protocol: Option<ProtocolKind>,
    pub distance_km: Option<f64>,
    /// Optimize the transmittances even when the config fixes them.
    pub optimize: bool,
}

#[derive(Debug, Clone)]
pub struct RateOutcome {
    pub distance_km: f64,
    pub delta: f64,
    pub lambda_signal: f64,
    pub lambda_decoy: Option<f64>,
    pub observed: Vec<ObservedStats>,
    pub report: KeyRateReport,
    pub trusted: Option<KeyRateReport>,
    pub ratio: Option<f64>,
}

/// Flat CSV view of a [`RateOutcome`].
#[derive(Debug, Clone, Serialize)]
pub struct RateRow {
    pub protocol: ProtocolKind,
    pub distance_km: f64,
    pub delta: f64,
    pub lambda_signal: f64,
    pub lambda_decoy: Option<f64>,
    pub gain_signal: f64,
    pub qber_signal: f64,
    pub rate_raw: f64,
    pub rate: f64,
    pub rate_trusted: Option<f64>,
    pub ratio: Option<f64>,
    pub q1_lower: Option<f64>,
    pub e1_upper: Option<f64>,
    pub q_omega_lower: Option<f64>,
    pub condition1: bool,
    pub condition2a: Option<bool>,
    pub condition2b: Option<bool>,
    pub condition2: Option<bool>,
}

impl RateOutcome {
    pub fn row(&self) -> RateRow {
        let c = self.report.conditions;
        RateRow {
            protocol: self.report.protocol,
            distance_km: self.distance_km,
            delta: self.delta,
            lambda_signal: self.lambda_signal,
            lambda_decoy: self.lambda_decoy,
            gain_signal: self.observed[0].gain(),
            qber_signal: self.observed[0].qber(),
            rate_raw: self.report.rate_raw,
            rate: self.report.rate,
            rate_trusted: self.trusted.as_ref().map(|t| t.rate),
            ratio: self.ratio,
            q1_lower: self.report.q1_lower,
            e1_upper: self.report.e1_upper,
            q_omega_lower: self.report.q_omega_lower,
            condition1: c.condition1,
            condition2a: c.condition2a,
            condition2b: c.condition2b,
            condition2: c.condition2,
        }
    }

    pub fn print<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| v.to_string());
        let flag = |x: Option<bool>| x.map_or_else(|| "-".to_string(), |v| v.to_string());
        let r = &self.report;
        writeln!(w, "protocol = {}", r.protocol.name())?;
        writeln!(w, "distance_km = {}", self.distance_km)?;
        writeln!(w, "delta = {}", self.delta)?;
        writeln!(w, "lambda_signal = {}", self.lambda_signal)?;
        writeln!(w, "lambda_decoy = {}", opt(self.lambda_decoy))?;
        for obs in &self.observed {
            writeln!(w, "Q_e[{}] = {}", obs.label(), obs.gain())?;
            writeln!(w, "E_e[{}] = {}", obs.label(), obs.qber())?;
        }
        let i = &r.intermediates;
        for (name, b) in [
            ("signal", &i.signal),
            ("decoy", &i.decoy),
            ("vacuum", &i.vacuum),
        ] {
            if let Some(b) = b {
                writeln!(w, "Q_untagged[{name}] in [{}, {}]", b.q_lower, b.q_upper)?;
                writeln!(w, "EQ_untagged[{name}] in [{}, {}]", b.eq_lower, b.eq_upper)?;
            }
        }
        if let Some(p) = &i.signal_pn {
            writeln!(w, "P0_signal in [{}, {}]", p.lower(0), p.upper(0))?;
            writeln!(w, "P1_signal in [{}, {}]", p.lower(1), p.upper(1))?;
        }
        writeln!(w, "multiphoton_upper = {}", opt(i.multiphoton_upper))?;
        writeln!(w, "a0 = {}", opt(i.a0))?;
        writeln!(w, "a1 = {}", opt(i.a1))?;
        writeln!(w, "a3_lower = {}", opt(i.a3_lower))?;
        if let Some(t) = &i.thresholds {
            writeln!(w, "cond2a = {}", t.cond2a)?;
            writeln!(w, "cond2b = {}", t.cond2b)?;
            writeln!(w, "cond2 = {}", t.cond2)?;
        }
        writeln!(w, "q1_lower = {}", opt(r.q1_lower))?;
        writeln!(w, "e1_upper_raw = {}", opt(r.e1_upper_raw))?;
        writeln!(w, "e1_upper = {}", opt(r.e1_upper))?;
        writeln!(w, "q_omega_lower = {}", opt(r.q_omega_lower))?;
        writeln!(w, "condition1 = {}", r.conditions.condition1)?;
        writeln!(w, "condition2a = {}", flag(r.conditions.condition2a))?;
        writeln!(w, "condition2b = {}", flag(r.conditions.condition2b))?;
        writeln!(w, "condition2 = {}", flag(r.conditions.condition2))?;
        writeln!(w, "rate_raw = {}", r.rate_raw)?;
        writeln!(w, "rate = {}", r.rate)?;
        writeln!(
            w,
            "rate_trusted = {}",
            opt(self.trusted.as_ref().map(|t| t.rate))
        )?;
        writeln!(w, "ratio = {}", opt(self.ratio))?;
        Ok(())
    }
}

fn ratio(untrusted: &KeyRateReport, trusted: Option<&KeyRateReport>) -> Option<f64> {
    trusted
        .filter(|t| t.rate > 0.0)
        .map(|t| untrusted.rate / t.rate)
}

/// Single-point evaluation. Fixed transmittances from the config are used
/// unless `optimize` is set or none are given.
pub fn cmd_rate(config: &RunConfig, opts: &RateOptions) -> Result<RateOutcome> {
    let kind = opts.protocol.unwrap_or(config.protocol.kind);
    let distance_km = opts.distance_km.unwrap_or(config.protocol.distance_km);
    if !(distance_km >= 0.0) {
        return Err(QkdError::Config(format!(
            "distance must be >= 0, got {distance_km}"
        )));
    }
    let delta = config.window.delta;
    let problem = config.problem(kind)?;
    let mean = problem.source.mean_photons();

    let fixed = match config.protocol.lambda_signal {
        Some(ls) if !opts.optimize => Some((ls, config.protocol.lambda_decoy)),
        _ => None,
    };
    let (ls, ld, report, trusted) = match fixed {
        None => {
            let u = problem.optimize_lambdas(distance_km, delta)?;
            let t = problem
                .optimize_trusted(distance_km, delta)
                .ok()
                .map(|o| o.report);
            (u.lambda_signal, u.lambda_decoy, u.report, t)
        }
        Some((ls, ld)) => {
            let ld = if kind.is_decoy() {
                let ld = ld.ok_or_else(|| {
                    QkdError::Config(format!("{} needs protocol.lambda_decoy", kind.name()))
                })?;
                if !(ld > 0.0) {
                    return Err(QkdError::Config(format!(
                        "protocol.lambda_decoy must be positive, got {ld}"
                    )));
                }
                let cond2 = condition_thresholds(mean, delta)?.cond2;
                if ls / ld <= cond2 {
                    return Err(QkdError::condition(
                        Condition::Two,
                        format!("lambda_S/lambda_D = {} must exceed {cond2}", ls / ld),
                    ));
                }
                ld
            } else {
                0.0
            };
            let windows = problem.policy.windows(&problem.source, delta)?;
            let report = problem.evaluate_untrusted(ls, ld, distance_km, &windows)?;
            let trusted = problem.evaluate_trusted(ls, ld, distance_km).ok();
            (ls, ld, report, trusted)
        }
    };

    let mut observed = vec![simulate_observables(
        mean * ls,
        distance_km,
        &config.detector,
        StateLabel::Signal,
    )?];
    if kind.is_decoy() {
        observed.push(simulate_observables(
            mean * ld,
            distance_km,
            &config.detector,
            StateLabel::Decoy,
        )?);
        observed.push(simulate_observables(
            0.0,
            distance_km,
            &config.detector,
            StateLabel::Vacuum,
        )?);
    }
    let ratio = ratio(&report, trusted.as_ref());
    Ok(RateOutcome {
        distance_km,
        delta,
        lambda_signal: ls,
        lambda_decoy: kind.is_decoy().then_some(ld),
        observed,
        report,
        trusted,
        ratio,
    })
}

pub fn write_rate_csv(outcome: &RateOutcome, path: &Path) -> Result<()> {
    write_csv_file(&[outcome.row()], path)
}

/// Writes `fig2.csv` to `fig5.csv`.
pub fn cmd_figures(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    figures::write_figures(config, out_dir)
}

/// Runs the soundness campaign and writes one CSV row per trial.
pub fn cmd_verify(
    trials: u64,
    seed: u64,
    corrupt_bound: bool,
    csv_path: Option<&Path>,
) -> Result<CampaignReport> {
    if trials == 0 {
        return Err(QkdError::Config("trials must be at least 1".into()));
    }
    let report = soundness_campaign_with(CampaignOptions {
        trials,
        seed,
        corrupt_bound,
    });
    if let Some(path) = csv_path {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        report.write_csv(fs::File::create(path)?)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxDistance {
    pub protocol: ProtocolKind,
    pub delta: f64,
    pub untrusted_km: f64,
    pub trusted_km: f64,
}

pub fn cmd_max_distance(config: &RunConfig, protocol: Option<ProtocolKind>) -> Result<MaxDistance> {
    let kind = protocol.unwrap_or(config.protocol.kind);
    let problem = config.problem(kind)?;
    let delta = config.window.delta;
    Ok(MaxDistance {
        protocol: kind,
        delta,
        untrusted_km: problem.max_distance(Trust::Untrusted, delta)?,
        trusted_km: problem.max_distance(Trust::Trusted, delta)?,
    })
}

/// Optimized rates over the sweep's `δ` grid and distances.
pub fn cmd_sweep_delta(
    config: &RunConfig,
    protocol: Option<ProtocolKind>,
    distance_km: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let kind = protocol.unwrap_or(config.protocol.kind);
    let problem = config.problem(kind)?;
    let spec = SweepSpec {
        distances_km: match distance_km {
            Some(d) => vec![d],
            None => config.sweep.distances_km.clone(),
        },
        ..config.sweep.clone()
    };
    problem.sweep(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        let c = QkdError::condition(Condition::Two, "x");
        assert_eq!(exit_code(&c), EXIT_CONDITION);
        assert_eq!(exit_code(&QkdError::Config("x".into())), EXIT_CONFIG);
    }

    #[test]
    fn equal_lambdas_violate_condition_two() {
        let config = RunConfig::from_toml_str(
            "[protocol]\nkind = \"weak_vacuum\"\nlambda_signal = 1e-7\nlambda_decoy = 1e-7\n",
        )
        .unwrap();
        let err = cmd_rate(&config, &RateOptions::default()).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_CONDITION);
        assert!(err.to_string().contains("Condition 2"));
    }

    #[test]
    fn vacuum_signal_echoes_background() {
        let config =
            RunConfig::from_toml_str("[protocol]\nkind = \"gllp\"\nlambda_signal = 0.0\n").unwrap();
        let out = cmd_rate(&config, &RateOptions::default()).unwrap();
        assert_eq!(out.observed[0].gain(), config.detector.y0);
        assert!(out.trusted.is_none());
        assert_eq!(out.report.rate, 0.0);
    }

    #[test]
    fn verify_needs_trials() {
        assert!(cmd_verify(0, 0, false, None).is_err());
        let r = cmd_verify(1, 0, false, None).unwrap();
        assert_eq!(r.violations(), 0);
    }
}
