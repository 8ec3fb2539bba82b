use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::direction::HPolicy;
use super::schedule::{LipschitzEstimates, Mode, Schedule};
use crate::error::Result;
use crate::model::{KktResidual, NoiseModel};

/// One row of the per-iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    /// `‖P∇ₓφ(x_k, μ_k)‖₂`, absent without an exact gradient.
    pub stationarity: Option<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub active_count: usize,
    pub mu: f64,
    pub theta: f64,
}

/// A logged failure of the direction conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub k: usize,
    pub failed: Vec<String>,
    pub mu1: f64,
    /// `"mu_reset"` when `μ₁` was doubled, `"accepted"` otherwise.
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub problem: String,
    pub mode: Mode,
    pub seed: u64,
    pub noise: NoiseModel,
    pub h_policy: HPolicy,
    pub iterations_run: usize,
    pub schedule: Schedule,
    pub estimates: LipschitzEstimates,
    pub final_x: Vec<f64>,
    pub mu_final: f64,
    pub theta_final: f64,
    pub f_initial: Option<f64>,
    pub f_final: Option<f64>,
    /// `‖P∇ₓφ(x₁, μ₁)‖₂`
    pub stationarity_initial: Option<f64>,
    /// `‖P∇ₓφ(x₁, μ_final)‖₂`
    pub stationarity_initial_at_final_mu: Option<f64>,
    pub stationarity_final: Option<f64>,
    pub stationarity_min: Option<f64>,
    pub relative_stationarity: Option<f64>,
    /// Set when the initial stationarity was zero and the ratio was reported as 0.
    pub relative_stationarity_degenerate: bool,
    pub multipliers: Multipliers,
    pub kkt: Option<KktResidual>,
    pub mu_resets: u32,
    pub null_steps: usize,
    pub neighborhood_failures: usize,
    pub condition_violations: usize,
    pub violation_log: Vec<ViolationRecord>,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json()?.as_bytes())?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_trace(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_trace_csv(std::fs::File::create(path)?)
    }
}
