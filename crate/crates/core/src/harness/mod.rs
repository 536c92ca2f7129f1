//! Synthetic data, experiment sweeps and their CSV/JSON output.

mod data;
mod records;

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{DataProfile, Dataset, Loss};
use crate::oracle::{attach_excess_risk, solve_cached};
use crate::rng::split_seed;
use crate::solvers::{solve, SolverConfig};

pub use data::{
    generate_lasso, generate_lasso_design, lasso_truth, FeatureDesign, LassoGenerator, MAX_RESAMPLES,
};
pub use records::{
    fit_line, read_records, read_records_file, summarize, write_records, write_records_file,
    CellSummary, RiskRecord, SlopeFit, Summary, SCHEMA_VERSION,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    pub id: String,
    pub config: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Lasso(LassoGenerator),
    Csv {
        path: PathBuf,
        #[serde(default = "default_profile")]
        profile: DataProfile,
    },
}

fn default_profile() -> DataProfile {
    DataProfile::Lasso
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub solvers: Vec<SolverEntry>,
    pub n_sweep: Vec<usize>,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub parallelism: usize,
    /// Draw a fresh generated dataset for every seed. When false every seed
    /// shares the generator's dataset and only the solver noise varies.
    #[serde(default = "yes")]
    pub vary_data: bool,
    #[serde(default)]
    pub non_private: bool,
}

fn yes() -> bool {
    true
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() || self.n_sweep.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidParameter(
                "an experiment needs solvers, an n sweep and seeds".into(),
            ));
        }
        let mut ids = HashSet::new();
        for s in &self.solvers {
            if !ids.insert(&s.id) {
                return Err(Error::InvalidParameter(format!("duplicate solver id `{}`", s.id)));
            }
            s.config.validate()?;
        }
        if self.n_sweep.contains(&0) {
            return Err(Error::InvalidParameter("n must be positive".into()));
        }
        if let DatasetSource::Csv { path, .. } = &self.dataset {
            if !path.is_file() {
                return Err(Error::InvalidParameter(format!("dataset {} not found", path.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub solver: String,
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub records: Vec<RiskRecord>,
    pub failures: Vec<CellFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    #[serde(flatten)]
    pub summary: Summary,
    pub failures: Vec<CellFailure>,
}

enum Source {
    Generated(LassoGenerator, bool),
    Loaded(Dataset),
}

impl Source {
    fn dataset(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            Source::Generated(g, vary) => {
                let data_seed = if *vary { split_seed(g.seed, seed) } else { g.seed };
                g.with_seed(data_seed).generate(n)
            }
            Source::Loaded(d) => d.prefix(n),
        }
    }
}

fn run_cell(entry: &SolverEntry, data: &Dataset, seed: u64, non_private: bool) -> Result<RiskRecord> {
    let mut cfg = entry.config.clone();
    cfg.seed = seed;
    cfg.record_trace = false;
    if non_private {
        cfg.budget = cfg.budget.without_noise();
    }
    let mut report = solve(&cfg, data)?;
    let oracle = solve_cached(&cfg.body, &cfg.loss, data)?;
    let loss = Loss::new(cfg.loss.clone())?;
    let risk = attach_excess_risk(&mut report, &oracle, &loss, data, &cfg.body)?;
    if !risk.is_finite() {
        return Err(Error::NonFinite("excess risk"));
    }
    Ok(RiskRecord {
        solver: entry.id.clone(),
        n: data.n(),
        seed,
        excess_risk: risk,
        optimum: oracle.optimum_value,
        steps: report.iterations,
        sigma: report.noise_plan.mechanism.sigma(),
        laplace_scale: report.noise_plan.mechanism.laplace_scale(),
        wall_ms: report.wall_ms,
    })
}

/// Runs every (solver, n, seed) cell. Records come back in sweep order
/// whatever the worker count; a failing cell is recorded and skipped.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    spec.validate()?;
    let source = match &spec.dataset {
        DatasetSource::Lasso(g) => Source::Generated(*g, spec.vary_data),
        DatasetSource::Csv { path, profile } => Source::Loaded(Dataset::from_csv(path, *profile)?),
    };
    let cells: Vec<(usize, u64)> = spec
        .n_sweep
        .iter()
        .flat_map(|&n| spec.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let work = || {
        cells
            .par_iter()
            .map(|&(n, seed)| {
                let data = source.dataset(n, seed);
                spec.solvers
                    .iter()
                    .map(|entry| {
                        let fail = |e: Error| CellFailure {
                            solver: entry.id.clone(),
                            n,
                            seed,
                            error: e.to_string(),
                        };
                        match &data {
                            Ok(d) => run_cell(entry, d, seed, spec.non_private).map_err(fail),
                            Err(e) => Err(fail(Error::InvalidParameter(e.to_string()))),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let results = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
        .install(work);
    let mut out = SweepOutcome::default();
    for r in results.into_iter().flatten() {
        match r {
            Ok(rec) => out.records.push(rec),
            Err(f) => {
                log::warn!("cell {} n={} seed={} failed: {}", f.solver, f.n, f.seed, f.error);
                out.failures.push(f);
            }
        }
    }
    Ok(out)
}

/// Writes `records.csv` and `summary.json` under `dir`.
pub fn emit(outcome: &SweepOutcome, dir: impl AsRef<Path>) -> Result<SweepReport> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_records_file(dir.join("records.csv"), &outcome.records)?;
    let report = SweepReport {
        summary: summarize(&outcome.records),
        failures: outcome.failures.clone(),
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexBody;
    use crate::losses::LossSpec;
    use crate::privacy::PrivacyBudget;
    use crate::solvers::Algorithm;

    fn spec(parallelism: usize) -> ExperimentSpec {
        let budget = PrivacyBudget::new(1.0, 1e-6).unwrap();
        let body = ConvexBody::l1_ball(8, 1.0).unwrap();
        ExperimentSpec {
            solvers: vec![
                SolverEntry {
                    id: "fw".into(),
                    config: SolverConfig::new(Algorithm::FwPolytope, body.clone(), LossSpec::squared(), budget),
                },
                SolverEntry {
                    id: "objpert".into(),
                    config: SolverConfig::new(Algorithm::ObjPert, body, LossSpec::squared(), budget),
                },
            ],
            n_sweep: vec![256, 512],
            seeds: vec![1, 2, 3],
            dataset: DatasetSource::Lasso(LassoGenerator {
                p: 8,
                sparsity: 2,
                noise: 0.1,
                seed: 5,
                design: FeatureDesign::Uniform,
            }),
            output: None,
            parallelism,
            vary_data: true,
            non_private: false,
        }
    }

    #[test]
    fn sweep_is_independent_of_worker_count() {
        let a = run_sweep(&spec(1)).unwrap();
        let b = run_sweep(&spec(4)).unwrap();
        assert!(a.failures.is_empty());
        assert_eq!(a.records.len(), 12);
        assert!(a.records.iter().zip(&b.records).all(|(x, y)| x.same_result(y)));
        assert!(a.records.iter().all(|r| r.excess_risk.is_finite() && r.excess_risk >= -1e-8));
    }

    #[test]
    fn noiseless_non_private_cell_is_accurate() {
        let mut s = spec(0);
        s.solvers.truncate(1);
        s.solvers[0].config.steps = 2000;
        s.n_sweep = vec![1000];
        s.seeds = vec![7];
        s.non_private = true;
        s.dataset = DatasetSource::Lasso(LassoGenerator {
            p: 8,
            sparsity: 2,
            noise: 0.0,
            seed: 1,
            design: FeatureDesign::Uniform,
        });
        let out = run_sweep(&s).unwrap();
        assert!(out.records[0].excess_risk <= 1e-3);
        assert_eq!(out.records[0].laplace_scale, 0.0);
    }

    #[test]
    fn failures_are_recorded_per_cell() {
        let mut s = spec(2);
        s.dataset = DatasetSource::Lasso(LassoGenerator {
            p: 8,
            sparsity: 2,
            noise: 1e6,
            seed: 1,
            design: FeatureDesign::Uniform,
        });
        let out = run_sweep(&s).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.failures.len(), 12);
    }

    #[test]
    fn emits_csv_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_sweep(&spec(2)).unwrap();
        let report = emit(&out, dir.path()).unwrap();
        assert_eq!(read_records_file(dir.path().join("records.csv")).unwrap(), out.records);
        assert_eq!(report.summary.cells.len(), 4);
        let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
        assert!(text.contains("\"slopes\""));
    }

    #[test]
    fn spec_json_validation() {
        let text = serde_json::to_string(&spec(1)).unwrap();
        assert_eq!(ExperimentSpec::from_json(&text).unwrap(), spec(1));
        let mut bad = spec(1);
        bad.seeds.clear();
        assert!(bad.validate().is_err());
        bad = spec(1);
        bad.dataset = DatasetSource::Csv {
            path: "/nonexistent/data.csv".into(),
            profile: DataProfile::Lasso,
        };
        assert!(bad.validate().is_err());
    }
}
