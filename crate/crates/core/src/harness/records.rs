use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
const SCHEMA_LINE: &str = "#schema_version=";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub solver: String,
    pub n: usize,
    pub seed: u64,
    pub excess_risk: f64,
    pub optimum: f64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub sigma: f64,
    pub laplace_scale: f64,
    pub wall_ms: f64,
}

impl RiskRecord {
    /// Equality on everything but the timing.
    pub fn same_result(&self, other: &RiskRecord) -> bool {
        RiskRecord {
            wall_ms: 0.0,
            ..self.clone()
        } == RiskRecord {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

/// Writes the schema line followed by a headed CSV table.
pub fn write_records(mut out: impl Write, records: &[RiskRecord]) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}{SCHEMA_VERSION}")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(["solver", "n", "seed", "excess_risk", "optimum", "T", "sigma", "laplace_scale", "wall_ms"])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(input: impl Read) -> Result<Vec<RiskRecord>> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let version: u32 = first
        .trim()
        .strip_prefix(SCHEMA_LINE)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::InvalidParameter("records file lacks a schema line".into()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Unsupported(format!("records schema version {version}")));
    }
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_records_file(path: impl AsRef<Path>, records: &[RiskRecord]) -> Result<()> {
    write_records(File::create(path)?, records)
}

pub fn read_records_file(path: impl AsRef<Path>) -> Result<Vec<RiskRecord>> {
    read_records(File::open(path)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub solver: String,
    pub n: usize,
    pub trials: usize,
    pub mean_excess_risk: f64,
    /// Standard error of the mean; 0 with a single trial.
    pub std_error: f64,
    pub mean_steps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub solver: String,
    /// Least-squares slope of `ln(mean risk)` against `ln n`.
    pub slope: f64,
    pub std_error: f64,
    pub intercept: f64,
    pub points: usize,
    /// Sample sizes left out because their mean risk was not positive.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub cells: Vec<CellSummary>,
    pub slopes: Vec<SlopeFit>,
}

pub fn summarize(records: &[RiskRecord]) -> Summary {
    let mut groups: BTreeMap<(String, usize), Vec<&RiskRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.solver.clone(), r.n)).or_default().push(r);
    }
    let cells: Vec<CellSummary> = groups
        .into_iter()
        .map(|((solver, n), rs)| {
            let k = rs.len() as f64;
            let mean = rs.iter().map(|r| r.excess_risk).sum::<f64>() / k;
            let var = if rs.len() > 1 {
                rs.iter().map(|r| (r.excess_risk - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            CellSummary {
                solver,
                n,
                trials: rs.len(),
                mean_excess_risk: mean,
                std_error: (var / k).sqrt(),
                mean_steps: rs.iter().map(|r| r.steps as f64).sum::<f64>() / k,
            }
        })
        .collect();
    let mut slopes = Vec::new();
    let mut solvers: Vec<&str> = cells.iter().map(|c| c.solver.as_str()).collect();
    solvers.dedup();
    for solver in solvers {
        let mut skipped = Vec::new();
        let mut pts = Vec::new();
        for c in cells.iter().filter(|c| c.solver == solver) {
            if c.mean_excess_risk > 0.0 {
                pts.push(((c.n as f64).ln(), c.mean_excess_risk.ln()));
            } else {
                skipped.push(c.n);
            }
        }
        if let Some((slope, std_error, intercept)) = fit_line(&pts) {
            slopes.push(SlopeFit {
                solver: solver.to_string(),
                slope,
                std_error,
                intercept,
                points: pts.len(),
                skipped,
            });
        }
    }
    Summary {
        schema_version: SCHEMA_VERSION,
        cells,
        slopes,
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, se(b), a)`, or `None`
/// with fewer than two distinct `x`.
pub fn fit_line(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    let m = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let se = if pts.len() > 2 {
        let ssr: f64 = pts.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
        (ssr / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Some((b, se, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(solver: &str, n: usize, seed: u64, risk: f64) -> RiskRecord {
        RiskRecord {
            solver: solver.into(),
            n,
            seed,
            excess_risk: risk,
            optimum: 0.123456789012345,
            steps: 17,
            sigma: 1.0 / 3.0,
            laplace_scale: 0.0,
            wall_ms: 2.5,
        }
    }

    #[test]
    fn csv_round_trip() {
        let rs = vec![record("fw", 1024, 1, 1e-3 / 7.0), record("md", 2048, 2, 5.0e-300)];
        let mut buf = Vec::new();
        write_records(&mut buf, &rs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#schema_version=1\nsolver,n,seed,excess_risk,optimum,T,sigma,laplace_scale,wall_ms\n"));
        assert_eq!(read_records(&buf[..]).unwrap(), rs);
    }

    #[test]
    fn exact_power_law_slope() {
        let rs: Vec<RiskRecord> = (10..=16)
            .flat_map(|k| {
                let n = 1usize << k;
                (0..3).map(move |s| record("fw", n, s, 3.0 * (n as f64).powf(-2.0 / 3.0)))
            })
            .collect();
        let s = summarize(&rs);
        assert_eq!(s.cells.len(), 7);
        assert!((s.slopes[0].slope + 2.0 / 3.0).abs() < 1e-6);
        assert!(s.slopes[0].std_error < 1e-9);
    }

    #[test]
    fn nonpositive_means_are_skipped() {
        let rs = vec![
            record("a", 10, 0, 0.5),
            record("a", 20, 0, 0.25),
            record("a", 40, 0, -1e-12),
        ];
        let s = summarize(&rs);
        assert_eq!(s.slopes[0].points, 2);
        assert_eq!(s.slopes[0].skipped, vec![40]);
        assert!((s.slopes[0].slope + 1.0).abs() < 1e-12);
    }
}
