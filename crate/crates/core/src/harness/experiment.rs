//! Seeded runs driven by a TOML file, with JSON, CSV and table output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fixtures::{self, Fixture};
use super::socp::generate_socp;
use crate::error::{Error, Result};
use crate::estimate::{estimate_constants, EstimateOptions};
use crate::model::{NoiseModel, ProblemDef, ProblemSpec};
use crate::phase1::{phase1_solve, PhaseOneOptions};
use crate::solver::{
    schedule_for_policy, solve, Exploration, HPolicy, LipschitzEstimates, Mode, Schedule,
    SolveOptions, SolveReport, DEFAULT_BUDGET,
};

/// Where the problems of an experiment come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ProblemSource {
    Fixture {
        name: String,
    },
    /// Every problem of [`fixtures::batch`].
    Batch,
    File {
        path: PathBuf,
    },
    Socp {
        n: usize,
        l: usize,
        seed: u64,
    },
}

/// Values that replace the defaults derived from the starting point.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    pub theta0: Option<f64>,
    pub mu1: Option<f64>,
    /// Positive decay rate; the exponent is its negative.
    pub decay: Option<f64>,
    pub t_alpha: Option<f64>,
    pub gamma_buff: Option<f64>,
    pub lambda_lower: Option<f64>,
    pub lambda_upper: Option<f64>,
    pub mu1_reset_cap: Option<f64>,
    pub exploration: Option<Exploration>,
}

impl ScheduleOverrides {
    pub fn apply(&self, mut s: Schedule) -> Schedule {
        if let Some(theta0) = self.theta0 {
            s = s.with_theta0(theta0);
            if self.mu1.is_none() {
                s = s.with_mu1((2.0 * theta0).max(0.1));
            }
        }
        if let Some(mu1) = self.mu1 {
            s = s.with_mu1(mu1);
        }
        if let Some(rate) = self.decay {
            s.t = -rate;
        }
        if let Some(v) = self.t_alpha {
            s.t_alpha = v;
        }
        if let Some(v) = self.gamma_buff {
            s.gamma_buff = v;
        }
        if let Some(v) = self.lambda_lower {
            s.lambda_lower = v;
        }
        if let Some(v) = self.lambda_upper {
            s.lambda_upper = v;
        }
        if let Some(v) = self.mu1_reset_cap {
            s.mu1_reset_cap = v;
        }
        if let Some(v) = self.exploration {
            s.exploration = v;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSettings {
    pub samples: Option<usize>,
    pub variance: f64,
    /// Seed of the sampling, shared by every run of a problem.
    pub seed: u64,
}

impl Default for EstimateSettings {
    fn default() -> Self {
        Self {
            samples: None,
            variance: 0.01,
            seed: 0,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

fn default_true() -> bool {
    true
}

fn default_trace_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// In stochastic mode, also run the deterministic method once.
    #[serde(default = "default_true")]
    pub deterministic_baseline: bool,
    #[serde(default)]
    pub h_policy: HPolicy,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    pub problem: ProblemSource,
    #[serde(default)]
    pub schedule: ScheduleOverrides,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub estimate: EstimateSettings,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        // problem files are relative to the config
        if let ProblemSource::File { path: file } = &mut cfg.problem {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("budget must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if self.trace_every == 0 {
            return Err(Error::Config("trace_every must be at least 1".into()));
        }
        self.noise.validate()
    }
}

/// Final numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub problem: String,
    /// `deterministic` or the seed.
    pub run: String,
    pub mode: Mode,
    pub seed: u64,
    pub f_initial: Option<f64>,
    pub f_final: Option<f64>,
    pub relative_stationarity: Option<f64>,
    pub feasible: bool,
    pub mu_resets: u32,
    pub report_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemTable {
    pub problem: String,
    pub start_from_phase1: bool,
    pub rows: Vec<RunSummary>,
    pub relative_spread: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub budget: usize,
    pub problems: Vec<ProblemTable>,
}

impl ExperimentSummary {
    pub fn runs(&self) -> impl Iterator<Item = &RunSummary> {
        self.problems.iter().flat_map(|t| t.rows.iter())
    }
}

/// `(max f − min f) / max(1, max |f|)` over the given values.
pub fn relative_spread(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = values.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    Some((hi - lo) / scale)
}

/// Schedule and constants for a run from `x1`.
///
/// The constants are sampled with `settings.seed`, so all seeds of a problem
/// share them.
pub fn plan_run(
    p: &ProblemSpec,
    x1: &DVector<f64>,
    mode: Mode,
    overrides: &ScheduleOverrides,
    h_policy: HPolicy,
    noise: &NoiseModel,
    settings: &EstimateSettings,
) -> Result<(Schedule, LipschitzEstimates)> {
    let base = Schedule::from_start(&p.constraints(x1)?, mode)?;
    let schedule = schedule_for_policy(overrides.apply(base), h_policy);
    let sigma = match mode {
        Mode::Deterministic => 0.0,
        Mode::Stochastic => noise.nominal_bound(p.n() - p.l()),
    };
    let opts = EstimateOptions {
        samples: settings.samples,
        variance: settings.variance,
        sigma,
        ..EstimateOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let est = estimate_constants(p, x1, &opts, &mut rng)?;
    Ok((schedule, est))
}

struct Prepared {
    def: ProblemDef,
    start: Option<DVector<f64>>,
}

fn prepare(source: &ProblemSource) -> Result<Vec<Prepared>> {
    let from_fixture = |f: Fixture| Prepared {
        start: Some(f.start),
        def: f.def,
    };
    Ok(match source {
        ProblemSource::Fixture { name } => {
            let f = fixtures::by_name(name)
                .ok_or_else(|| Error::Config(format!("unknown fixture {name}")))?;
            vec![from_fixture(f)]
        }
        ProblemSource::Batch => fixtures::batch().into_iter().map(from_fixture).collect(),
        ProblemSource::File { path } => {
            let def = ProblemDef::load(path)?;
            vec![Prepared {
                start: def.start_vector(),
                def,
            }]
        }
        ProblemSource::Socp { n, l, seed } => {
            let g = generate_socp(*n, *l, *seed)?;
            vec![Prepared {
                start: Some(g.interior),
                def: g.def,
            }]
        }
    })
}

/// The runs of one problem as `(label, mode, seed)`.
fn run_matrix(cfg: &ExperimentConfig) -> Vec<(String, Mode, u64)> {
    let mut runs = Vec::new();
    match cfg.mode {
        Mode::Deterministic => {
            for &seed in &cfg.seeds {
                runs.push((format!("{seed}"), Mode::Deterministic, seed));
            }
        }
        Mode::Stochastic => {
            if cfg.deterministic_baseline {
                runs.push(("deterministic".to_string(), Mode::Deterministic, 0));
            }
            for &seed in &cfg.seeds {
                runs.push((format!("{seed}"), Mode::Stochastic, seed));
            }
        }
    }
    runs
}

fn format_value(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.5e}"))
}

fn write_table(path: &Path, table: &ProblemTable) -> Result<()> {
    let width = table
        .rows
        .iter()
        .map(|r| r.run.len())
        .max()
        .unwrap_or(3)
        .max(3);
    let mut out = String::new();
    writeln!(out, "{:<width$}  f(x_K)", "run").unwrap();
    for r in &table.rows {
        writeln!(out, "{:<width$}  {}", r.run, format_value(r.f_final)).unwrap();
    }
    writeln!(
        out,
        "relative spread  {}",
        format_value(table.relative_spread)
    )
    .unwrap();
    fs::write(path, out)?;
    Ok(())
}

fn final_feasible(p: &ProblemSpec, report: &SolveReport) -> Result<bool> {
    let x = DVector::from_column_slice(&report.final_x);
    let c = p.constraints(&x)?;
    let eq = p.equality_residual(&x) <= 1e-8 * (1.0 + p.b().norm());
    Ok(eq && c.iter().all(|v| *v < 0.0))
}

/// Runs every problem and seed of `cfg`, writing reports under
/// `cfg.output_dir`. Seeds run in parallel; files are written afterwards in
/// a fixed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let out_dir = &cfg.output_dir;
    fs::create_dir_all(out_dir)?;
    let runs = run_matrix(cfg);
    let mut tables = Vec::new();

    for prepared in prepare(&cfg.problem)? {
        let p = prepared.def.build()?;
        let name = p.name().to_string();
        let (x1, from_phase1) = match prepared.start {
            Some(x) => (x, false),
            None => {
                let report = phase1_solve(&p, &DVector::zeros(p.n()), &PhaseOneOptions::default())?;
                (report.into_point()?, true)
            }
        };
        let h_policy = cfg.h_policy;
        // A deterministic baseline next to stochastic runs shares their step
        // decay and exploration so that only the gradient noise differs.
        let plans: Vec<(Schedule, LipschitzEstimates)> = match cfg.mode {
            Mode::Deterministic => {
                let plan = plan_run(
                    &p,
                    &x1,
                    Mode::Deterministic,
                    &cfg.schedule,
                    h_policy,
                    &cfg.noise,
                    &cfg.estimate,
                )?;
                vec![plan.clone(), plan]
            }
            Mode::Stochastic => {
                let (s, est) = plan_run(
                    &p,
                    &x1,
                    Mode::Stochastic,
                    &cfg.schedule,
                    h_policy,
                    &cfg.noise,
                    &cfg.estimate,
                )?;
                let mut baseline = s.clone();
                baseline.mode = Mode::Deterministic;
                vec![(baseline, est.clone()), (s, est)]
            }
        };

        let results: Vec<Result<SolveReport>> = runs
            .par_iter()
            .map(|(_, mode, seed)| {
                let (schedule, est) = &plans[*mode as usize];
                let mut schedule = schedule.clone();
                schedule.budget = cfg.budget;
                let opts = SolveOptions {
                    h_policy,
                    noise: if *mode == Mode::Stochastic {
                        cfg.noise
                    } else {
                        NoiseModel::None
                    },
                    seed: *seed,
                    trace_every: cfg.trace_every,
                };
                solve(&p, &schedule, est, &x1, &opts)
            })
            .collect();

        let problem_dir = out_dir.join(&name);
        fs::create_dir_all(&problem_dir)?;
        let mut rows = Vec::new();
        for ((label, mode, seed), result) in runs.iter().zip(results) {
            let report = result?;
            let stem = match mode {
                Mode::Deterministic if label == "deterministic" => "deterministic".to_string(),
                Mode::Deterministic => format!("deterministic_seed{seed}"),
                Mode::Stochastic => format!("stochastic_seed{seed}"),
            };
            report.write_json(problem_dir.join(format!("{stem}.json")))?;
            report.write_trace(problem_dir.join(format!("{stem}.csv")))?;
            rows.push(RunSummary {
                problem: name.clone(),
                run: label.clone(),
                mode: *mode,
                seed: *seed,
                f_initial: report.f_initial,
                f_final: report.f_final,
                relative_stationarity: report.relative_stationarity,
                feasible: final_feasible(&p, &report)?,
                mu_resets: report.mu_resets,
                report_file: format!("{name}/{stem}.json"),
            });
        }
        let finals: Vec<f64> = rows.iter().filter_map(|r| r.f_final).collect();
        let table = ProblemTable {
            problem: name.clone(),
            start_from_phase1: from_phase1,
            relative_spread: relative_spread(&finals),
            rows,
        };
        write_table(&out_dir.join(format!("{name}_table.txt")), &table)?;
        tables.push(table);
    }

    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        budget: cfg.budget,
        problems: tables,
    };
    if summary.problems.len() > 1 {
        let mut w = csv::Writer::from_path(out_dir.join("histogram.csv"))?;
        w.write_record(["problem", "run", "relative_stationarity"])?;
        for r in summary.runs() {
            let value = r
                .relative_stationarity
                .map_or_else(String::new, |v| format!("{v:e}"));
            w.write_record([r.problem.as_str(), r.run.as_str(), value.as_str()])?;
        }
        w.flush()?;
    }
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    Ok(summary)
}
