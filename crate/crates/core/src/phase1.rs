//! Infeasible interior-point search for a strictly feasible starting point.
//!
//! Works on `min −Σ log sᵢ` subject to `Ax = b`, `c(x) + s = 0` with a fixed
//! barrier weight and stops at the first point whose constraint values clear
//! the margins.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares_feasible, solve_phase1_kkt};
use crate::model::{BoundKind, ProblemSpec};

/// Slack required of a point before it counts as strictly feasible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityMargins {
    pub one_sided: f64,
    /// Two-sided bounds need `two_sided·min{range, 1}` on each side.
    pub two_sided: f64,
}

impl Default for FeasibilityMargins {
    fn default() -> Self {
        Self {
            one_sided: 1e-4,
            two_sided: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneOptions {
    pub margins: FeasibilityMargins,
    pub max_iter: usize,
    pub residual_threshold: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: u32,
    pub hessian_floor: f64,
}

impl Default for PhaseOneOptions {
    fn default() -> Self {
        Self {
            margins: FeasibilityMargins::default(),
            max_iter: 1000,
            residual_threshold: 1e-6,
            backtrack_factor: 0.5,
            max_backtracks: 60,
            hessian_floor: 1e-4,
        }
    }
}

/// Whether every inequality clears its margin.
pub fn strictly_feasible(
    c: &DVector<f64>,
    bounds: &[BoundKind],
    margins: &FeasibilityMargins,
) -> bool {
    c.iter().zip(bounds).all(|(&ci, kind)| {
        let need = match *kind {
            BoundKind::OneSided => margins.one_sided,
            BoundKind::TwoSided { range } => margins.two_sided * range.min(1.0),
        };
        -ci >= need
    })
}

/// `−τ Σ log sᵢ + ‖c + s‖₁` from constraint values `c`.
pub fn merit_value(c: &DVector<f64>, s: &DVector<f64>, tau: f64) -> Result<f64> {
    if let Some((index, &value)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveSlack { index, value });
    }
    let barrier: f64 = s.iter().map(|v| v.ln()).sum();
    Ok(-tau * barrier + (c + s).lp_norm(1))
}

pub fn merit(p: &ProblemSpec, x: &DVector<f64>, s: &DVector<f64>, tau: f64) -> Result<f64> {
    merit_value(&p.constraints(x)?, s, tau)
}

/// `Δq = −τ(−dsᵀS⁻¹1 + ½dxᵀHdx + ½dsᵀS⁻²ds) + ‖c + s‖₁`.
pub fn predicted_reduction(
    residual_l1: f64,
    s: &DVector<f64>,
    dx: &DVector<f64>,
    ds: &DVector<f64>,
    tau: f64,
    h: &DMatrix<f64>,
) -> f64 {
    let linear: f64 = ds.iter().zip(s.iter()).map(|(d, s)| d / s).sum();
    let curvature = dx.dot(&(h * dx));
    let slack: f64 = ds.iter().zip(s.iter()).map(|(d, s)| (d / s).powi(2)).sum();
    -tau * (-linear + 0.5 * curvature + 0.5 * slack) + residual_l1
}

/// `Θ = −dsᵀS⁻¹1 + dxᵀHdx + dsᵀS⁻²ds`.
pub fn theta_value(
    s: &DVector<f64>,
    dx: &DVector<f64>,
    ds: &DVector<f64>,
    h: &DMatrix<f64>,
) -> f64 {
    let linear: f64 = ds.iter().zip(s.iter()).map(|(d, s)| d / s).sum();
    let slack: f64 = ds.iter().zip(s.iter()).map(|(d, s)| (d / s).powi(2)).sum();
    -linear + dx.dot(&(h * dx)) + slack
}

/// Keeps `τ` unless the trial value `0.5‖c + s‖₁/Θ` is smaller.
pub fn update_tau(tau_prev: f64, theta: f64, residual_l1: f64) -> f64 {
    let trial = if theta <= 0.0 {
        f64::INFINITY
    } else {
        0.5 * residual_l1 / theta
    };
    if tau_prev <= trial {
        tau_prev
    } else {
        (1.0 - 1e-6) * trial
    }
}

/// Largest `α ∈ (0, 1]` with `s + α·ds ≥ 0.1·s`.
pub fn ftb_step(s: &DVector<f64>, ds: &DVector<f64>) -> f64 {
    s.iter()
        .zip(ds.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(s, d)| 0.9 * s / -d)
        .fold(1.0, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOneStatus {
    Feasible,
    IterationLimit,
    /// The Newton system broke down, typically because slacks collapsed
    /// towards zero on an infeasible problem.
    Stalled,
}

/// One step of the line search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneStep {
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
    pub merit_before: f64,
    pub merit_after: f64,
    pub predicted: f64,
    /// False when the backtracking budget ran out and the tiny step was forced.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOneReport {
    pub status: PhaseOneStatus,
    pub x: Vec<f64>,
    /// Newton steps taken before stopping.
    pub iterations: usize,
    pub equality_residual: f64,
    pub final_violation: f64,
    pub steps: Vec<PhaseOneStep>,
}

impl PhaseOneReport {
    pub fn is_feasible(&self) -> bool {
        self.status == PhaseOneStatus::Feasible
    }

    pub fn point(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    /// The point, or [`Error::IterationLimitExceeded`].
    pub fn into_point(self) -> Result<DVector<f64>> {
        match self.status {
            PhaseOneStatus::Feasible => Ok(DVector::from_vec(self.x)),
            PhaseOneStatus::IterationLimit | PhaseOneStatus::Stalled => {
                Err(Error::IterationLimitExceeded(self.iterations))
            }
        }
    }
}

/// `I + Σ zᵢ∇²cᵢ(x) + λI` with the smallest `λ ∈ {0, 10⁻⁴, 2·10⁻⁴, …}`
/// giving `H ⪰ floor·I`.
fn modified_hessian(
    p: &ProblemSpec,
    x: &DVector<f64>,
    z: &DVector<f64>,
    floor: f64,
) -> Result<DMatrix<f64>> {
    let n = p.n();
    let mut h = DMatrix::<f64>::identity(n, n);
    for i in 0..p.m() {
        if z[i] != 0.0 {
            h += p.constraint_hessian(i, x)? * z[i];
        }
    }
    h = (&h + h.transpose()) * 0.5;
    let low = SymmetricEigen::new(h.clone()).eigenvalues.min();
    if low < floor {
        let mut lambda = 1e-4;
        while low + lambda < floor {
            lambda *= 2.0;
        }
        h += DMatrix::identity(n, n) * lambda;
    }
    Ok(h)
}

pub fn phase1_solve(
    p: &ProblemSpec,
    x0: &DVector<f64>,
    opts: &PhaseOneOptions,
) -> Result<PhaseOneReport> {
    if !p.has_hessians() && p.m() > 0 {
        return Err(Error::MissingOracle("constraint Hessians"));
    }
    let projection = least_squares_feasible(p.factors(), p.b(), x0)?;
    if projection.residual > opts.residual_threshold {
        return Err(Error::LeastSquaresResidualTooLarge {
            residual: projection.residual,
            threshold: opts.residual_threshold,
        });
    }
    let mut x = projection.x;
    let mut c = p.constraints(&x)?;
    let mut s = c.map(|v| (-v).max(1.0));
    let mut z = s.map(|v| 1.0 / v);
    let mut tau = 1.0;
    let mut steps = Vec::new();

    let finish = |status, x: &DVector<f64>, c: &DVector<f64>, iterations, steps| PhaseOneReport {
        status,
        x: x.iter().copied().collect(),
        iterations,
        equality_residual: p.equality_residual(x),
        final_violation: c.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        steps,
    };

    for k in 1..=opts.max_iter {
        if strictly_feasible(&c, p.bounds(), &opts.margins) {
            return Ok(finish(PhaseOneStatus::Feasible, &x, &c, k - 1, steps));
        }
        let h = modified_hessian(p, &x, &z, opts.hessian_floor)?;
        let jac = p.jacobian(&x)?;
        let r = &c + &s;
        let step = match solve_phase1_kkt(&h, &s, p.factors(), &jac, &z, &r) {
            Ok(step) => step,
            Err(Error::SingularSystem(_)) => {
                return Ok(finish(PhaseOneStatus::Stalled, &x, &c, k - 1, steps))
            }
            Err(e) => return Err(e),
        };
        let r1 = r.lp_norm(1);

        tau = update_tau(tau, theta_value(&s, &step.dx, &step.ds, &h), r1);
        let predicted = predicted_reduction(r1, &s, &step.dx, &step.ds, tau, &h);
        let alpha_ftb = ftb_step(&s, &step.ds);
        let merit_before = merit_value(&c, &s, tau)?;

        let mut alpha = alpha_ftb;
        let mut accepted = false;
        let mut trial = None;
        for _ in 0..=opts.max_backtracks {
            let xt = &x + &step.dx * alpha;
            let st = &s + &step.ds * alpha;
            let ct = p.constraints(&xt)?;
            let mt = merit_value(&ct, &st, tau)?;
            if mt <= merit_before - 1e-4 * alpha * predicted {
                trial = Some((xt, st, ct, mt));
                accepted = true;
                break;
            }
            alpha *= opts.backtrack_factor;
        }
        let (xt, st, ct, mt) = match trial {
            Some(t) => t,
            None => {
                alpha = opts.backtrack_factor.powi(opts.max_backtracks as i32) * alpha_ftb;
                let xt = &x + &step.dx * alpha;
                let st = &s + &step.ds * alpha;
                let ct = p.constraints(&xt)?;
                let mt = merit_value(&ct, &st, tau)?;
                (xt, st, ct, mt)
            }
        };
        steps.push(PhaseOneStep {
            k,
            tau,
            alpha,
            merit_before,
            merit_after: mt,
            predicted,
            accepted,
        });
        x = xt;
        s = st;
        c = ct;
        z = (&z + &step.dz * alpha).map(|v| v.max(1e-12));
    }

    if strictly_feasible(&c, p.bounds(), &opts.margins) {
        return Ok(finish(
            PhaseOneStatus::Feasible,
            &x,
            &c,
            opts.max_iter,
            steps,
        ));
    }
    Ok(finish(
        PhaseOneStatus::IterationLimit,
        &x,
        &c,
        opts.max_iter,
        steps,
    ))
}
