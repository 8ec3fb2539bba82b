//! Test problems, the cone-program generator and the experiment runner.

pub mod experiment;
pub mod fixtures;
pub mod socp;

pub use experiment::{
    plan_run, relative_spread, run_experiment, EstimateSettings, ExperimentConfig,
    ExperimentSummary, ProblemSource, RunSummary, ScheduleOverrides,
};
pub use fixtures::Fixture;
pub use socp::{generate_socp, GeneratedSocp};
