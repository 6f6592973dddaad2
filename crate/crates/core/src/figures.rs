//! Rate-versus-distance and maximum-distance tables.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::optimizer::{SweepRow, SweepSpec, Trust};
use crate::protocols::ProtocolKind;

/// Row of a rate-versus-distance figure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub distance_km: f64,
    pub delta: f64,
    pub protocol: ProtocolKind,
    pub rate_untrusted: f64,
    pub rate_trusted: f64,
    pub ratio: Option<f64>,
}

impl From<&SweepRow> for FigureRow {
    fn from(r: &SweepRow) -> Self {
        FigureRow {
            distance_km: r.distance_km,
            delta: r.delta,
            protocol: r.protocol,
            rate_untrusted: r.rate_untrusted,
            rate_trusted: r.rate_trusted,
            ratio: r.ratio,
        }
    }
}

/// Row of the maximum-distance table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxDistanceRow {
    pub delta: f64,
    /// `δ` in units of `1/√N`.
    pub delta_sigmas: f64,
    pub protocol: ProtocolKind,
    pub max_distance_untrusted_km: f64,
    pub max_distance_trusted_km: f64,
    pub gap_km: f64,
}

pub struct DistanceFigure {
    pub file_name: &'static str,
    pub protocol: ProtocolKind,
    pub distances_km: Vec<f64>,
}

fn steps(end: u32, step: u32) -> Vec<f64> {
    (0..=end / step).map(|k| (k * step) as f64).collect()
}

/// The three rate-versus-distance figures with their default distances.
pub fn distance_figures() -> Vec<DistanceFigure> {
    vec![
        DistanceFigure {
            file_name: "fig2.csv",
            protocol: ProtocolKind::Gllp,
            distances_km: steps(50, 1),
        },
        DistanceFigure {
            file_name: "fig3.csv",
            protocol: ProtocolKind::WeakVacuum,
            distances_km: steps(150, 5),
        },
        DistanceFigure {
            file_name: "fig4.csv",
            protocol: ProtocolKind::OneDecoy,
            distances_km: steps(120, 5),
        },
    ]
}

pub const MAX_DISTANCE_FILE: &str = "fig5.csv";

pub fn distance_table(config: &RunConfig, figure: &DistanceFigure) -> Result<Vec<FigureRow>> {
    let problem = config.problem(figure.protocol)?;
    let spec = SweepSpec {
        distances_km: figure.distances_km.clone(),
        lambda_grid: config.sweep.lambda_grid,
        delta_grid: vec![config.window.delta],
    };
    Ok(problem.sweep(&spec)?.iter().map(FigureRow::from).collect())
}

/// One maximum-distance row per `δ` of the sweep grid.
pub fn max_distance_table(
    config: &RunConfig,
    protocol: ProtocolKind,
) -> Result<Vec<MaxDistanceRow>> {
    let problem = config.problem(protocol)?;
    let sigma = 1.0 / config.source.mean_photons.sqrt();
    config
        .sweep
        .delta_grid
        .iter()
        .map(|&delta| {
            let untrusted = problem.max_distance(Trust::Untrusted, delta)?;
            let trusted = problem.max_distance(Trust::Trusted, delta)?;
            Ok(MaxDistanceRow {
                delta,
                delta_sigmas: delta / sigma,
                protocol,
                max_distance_untrusted_km: untrusted,
                max_distance_trusted_km: trusted,
                gap_km: trusted - untrusted,
            })
        })
        .collect()
}

pub fn write_rows<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    write_rows(rows, File::create(path)?)
}

/// Writes `fig2.csv` to `fig5.csv` into `dir` and returns their paths.
pub fn write_figures(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for figure in distance_figures() {
        let rows = distance_table(config, &figure)?;
        let path = dir.join(figure.file_name);
        write_csv_file(&rows, &path)?;
        written.push(path);
    }
    let rows = max_distance_table(config, ProtocolKind::WeakVacuum)?;
    let path = dir.join(MAX_DISTANCE_FILE);
    write_csv_file(&rows, &path)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_empty_ratio() {
        let rows = vec![FigureRow {
            distance_km: 10.0,
            delta: 0.01,
            protocol: ProtocolKind::WeakVacuum,
            rate_untrusted: 0.1 + 0.2,
            rate_trusted: 0.0,
            ratio: None,
        }];
        let mut buf = Vec::new();
        write_rows(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "distance_km,delta,protocol,rate_untrusted,rate_trusted,ratio"
        );
        let row = lines.next().unwrap();
        assert_eq!(row, "10.0,0.01,weak_vacuum,0.30000000000000004,0.0,");
    }

    #[test]
    fn default_figure_distances() {
        let figs = distance_figures();
        assert_eq!(figs[0].distances_km.len(), 51);
        assert_eq!(*figs[1].distances_km.last().unwrap(), 150.0);
        assert_eq!(figs[2].distances_km[1], 5.0);
    }
}
