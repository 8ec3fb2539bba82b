//! The single-loop feasible interior-point iteration.

mod direction;
mod gamma;
mod report;
mod schedule;

pub use direction::{
    compute_direction, compute_q, h_policy_matrix, ConditionReport, Direction, DirectionContext,
    HPolicy, Hessian,
};
pub use gamma::{compute_gamma, gamma_tilde, GammaInput, GammaOutcome};
pub use report::{Multipliers, SolveReport, TraceRow, ViolationRecord};
pub use schedule::{
    mu_reset, schedule_at, DirectionBounds, Exploration, LipschitzEstimates, Mode, Schedule,
    ScheduleValues, DEFAULT_BUDGET, DEFAULT_DECAY, DEFAULT_RESET_CAP,
};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    barrier_gradient, check_interior, draw_gradient, in_neighborhood, kkt_residual, nearly_active,
    NoiseModel, ProblemSpec,
};

/// Logged violations beyond this count are only counted.
const VIOLATION_LOG_LIMIT: usize = 1000;

/// Run settings that are not part of the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub h_policy: HPolicy,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Keep every `trace_every`-th iteration in the report trace (plus the last).
    pub trace_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            h_policy: HPolicy::Identity,
            noise: NoiseModel::None,
            seed: 0,
            trace_every: 1,
        }
    }
}

/// Everything computed during one iteration, passed to observers.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub k: usize,
    pub x: DVector<f64>,
    pub x_next: DVector<f64>,
    pub mu1: f64,
    pub mu: f64,
    pub theta_prev: f64,
    pub theta: f64,
    pub g: DVector<f64>,
    pub q: DVector<f64>,
    pub active: Vec<usize>,
    pub d: DVector<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub l_k: f64,
    pub stationarity: Option<f64>,
    pub conditions: ConditionReport,
    pub reset: bool,
    pub null_step: bool,
}

/// `z = −μ/c(x)` and `y = −(AAᵀ)⁻¹A(g + ∇c(x)z)`.
pub fn multiplier_estimates(
    p: &ProblemSpec,
    x: &DVector<f64>,
    mu: f64,
    grad_value: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let c = p.constraints(x)?;
    check_interior(&c)?;
    let jac = p.jacobian(x)?;
    let z = c.map(|ci| -mu / ci);
    let y = -p.factors().range_coefficients(&(grad_value + &jac * &z));
    Ok((y, z))
}

/// `‖P∇ₓφ(x, μ)‖₂`, or `None` without an exact gradient oracle.
pub fn projected_stationarity(p: &ProblemSpec, x: &DVector<f64>, mu: f64) -> Result<Option<f64>> {
    if !p.has_gradient() {
        return Ok(None);
    }
    let c = p.constraints(x)?;
    check_interior(&c)?;
    let q = barrier_gradient(&c, &p.jacobian(x)?, mu, &p.gradient(x)?);
    Ok(Some(p.factors().project(&q).norm()))
}

/// Runs the method for `schedule.budget` iterations from `x1`.
pub fn solve(
    p: &ProblemSpec,
    schedule: &Schedule,
    est: &LipschitzEstimates,
    x1: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    solve_with_observer(p, schedule, est, x1, opts, &mut |_| {})
}

/// [`solve`], calling `observer` once per iteration.
pub fn solve_with_observer(
    p: &ProblemSpec,
    schedule: &Schedule,
    est: &LipschitzEstimates,
    x1: &DVector<f64>,
    opts: &SolveOptions,
    observer: &mut dyn FnMut(&IterateState),
) -> Result<SolveReport> {
    schedule.validate()?;
    est.validate(p.m())?;
    opts.noise.validate()?;
    if x1.len() != p.n() {
        return Err(Error::Dimension {
            what: "starting point",
            expected: p.n(),
            got: x1.len(),
        });
    }
    let eq_tol = 1e-8 * (1.0 + p.b().norm());
    let eq_res = p.equality_residual(x1);
    if !(eq_res <= eq_tol) {
        return Err(Error::InfeasibleStart(format!(
            "‖Ax₁ − b‖ = {eq_res:e} exceeds {eq_tol:e}"
        )));
    }
    let c1 = p.constraints(x1)?;
    if !in_neighborhood(&c1, schedule.theta0) {
        let worst = c1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        return Err(Error::InfeasibleStart(format!(
            "max c(x₁) = {worst:e} is above −θ₀ = {:e}",
            -schedule.theta0
        )));
    }

    let deterministic = schedule.mode == Mode::Deterministic;
    if !deterministic && !p.has_stochastic_gradient() && !p.has_gradient() {
        return Err(Error::MissingOracle("stochastic gradient"));
    }
    let use_oracle = !deterministic && opts.noise.is_none() && p.has_stochastic_gradient();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let initial = schedule.clone();
    let mut sched = schedule.clone();
    let bounds = sched.direction_bounds();
    let factors = p.factors();
    let budget = sched.budget;
    let every = opts.trace_every.max(1);

    let mut x = x1.clone();
    let mut trace = Vec::new();
    let mut violation_log = Vec::new();
    let mut condition_violations = 0;
    let mut null_steps = 0;
    let mut neighborhood_failures = 0;
    let mut stationarity_min: Option<f64> = None;

    for k in 1..=budget {
        let c = p.constraints(&x)?;
        let jac = p.jacobian(&x)?;
        let g = if deterministic {
            p.gradient(&x)?
        } else if use_oracle {
            p.stochastic_gradient(&x, &mut rng)?
        } else {
            draw_gradient(p, &x, &opts.noise, &mut rng)?
        };
        let exact_grad = if !deterministic && p.has_gradient() {
            Some(p.gradient(&x)?)
        } else {
            None
        };

        let build = |sched: &Schedule| -> Result<(f64, DVector<f64>, Vec<usize>, Direction)> {
            let mu = sched.mu(k);
            let q = compute_q(&c, &jac, mu, &g);
            let active = nearly_active(&c, mu, sched.eta);
            let h = h_policy_matrix(
                p,
                &x,
                mu,
                opts.h_policy,
                sched.lambda_lower,
                sched.lambda_upper,
            )?;
            let ctx = DirectionContext {
                q: &q,
                jac: &jac,
                active: &active,
                bounds,
                eta_lower: sched.eta_lower,
            };
            let dir = compute_direction(&ctx, &h, factors)?;
            Ok((mu, q, active, dir))
        };

        let (mut mu, mut q, mut active, mut dir) = build(&sched)?;
        let mut reset = false;
        if !dir.report.interior && sched.mu1 < sched.mu1_reset_cap {
            condition_violations += 1;
            if violation_log.len() < VIOLATION_LOG_LIMIT {
                violation_log.push(ViolationRecord {
                    k,
                    failed: dir
                        .report
                        .failures()
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                    mu1: sched.mu1,
                    action: "mu_reset".into(),
                });
            }
            sched = mu_reset(&sched);
            reset = true;
            (mu, q, active, dir) = build(&sched)?;
        }
        if !dir.report.all_pass() {
            condition_violations += 1;
            if violation_log.len() < VIOLATION_LOG_LIMIT {
                violation_log.push(ViolationRecord {
                    k,
                    failed: dir
                        .report
                        .failures()
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                    mu1: sched.mu1,
                    action: "accepted".into(),
                });
            }
        }

        let values = schedule_at(&sched, est, k)?;
        let stationarity = if deterministic {
            Some(dir.report.pq_norm)
        } else {
            exact_grad.as_ref().map(|grad| {
                factors
                    .project(&barrier_gradient(&c, &jac, mu, grad))
                    .norm()
            })
        };
        if let Some(s) = stationarity {
            stationarity_min = Some(stationarity_min.map_or(s, |m: f64| m.min(s)));
        }

        let null_step = dir.is_null();
        let gamma = if null_step {
            null_steps += 1;
            0.0
        } else {
            let cap = if deterministic { 1.0 } else { values.gamma_max };
            let input = GammaInput {
                x: &x,
                d: &dir.d,
                c: &c,
                jac: &jac,
                alpha: values.alpha,
                theta: values.theta,
                lip_grad_c: &est.lip_grad_c,
                cap,
                exploration: sched.exploration,
                mu: values.mu,
            };
            match compute_gamma(p, &input) {
                Ok(out) => out.gamma,
                Err(Error::NeighborhoodViolation { .. }) => {
                    neighborhood_failures += 1;
                    0.0
                }
                Err(e) => return Err(e),
            }
        };
        let x_next = if gamma > 0.0 {
            &x + &dir.d * (gamma * values.alpha)
        } else {
            x.clone()
        };

        observer(&IterateState {
            k,
            x: x.clone(),
            x_next: x_next.clone(),
            mu1: sched.mu1,
            mu,
            theta_prev: values.theta_prev,
            theta: values.theta,
            g: g.clone(),
            q: std::mem::take(&mut q),
            active: active.clone(),
            d: dir.d.clone(),
            alpha: values.alpha,
            gamma,
            gamma_min: values.gamma_min,
            gamma_max: values.gamma_max,
            l_k: values.l_k,
            stationarity,
            conditions: dir.report.clone(),
            reset,
            null_step,
        });

        if (k - 1) % every == 0 || k == budget {
            trace.push(TraceRow {
                k,
                stationarity,
                alpha: values.alpha,
                gamma,
                active_count: active.len(),
                mu,
                theta: values.theta_prev,
            });
        }
        x = x_next;
    }

    let mu_final = sched.mu(budget + 1);
    let theta_final = sched.theta_prev(budget + 1);
    let grad_final = if p.has_gradient() {
        Some(p.gradient(&x)?)
    } else {
        None
    };
    let (y, z) = match &grad_final {
        Some(gf) => multiplier_estimates(p, &x, mu_final, gf)?,
        None => {
            let c = p.constraints(&x)?;
            check_interior(&c)?;
            (DVector::zeros(p.l()), c.map(|ci| -mu_final / ci))
        }
    };
    let kkt = if grad_final.is_some() {
        Some(kkt_residual(p, &x, &y, &z)?)
    } else {
        None
    };

    let stationarity_initial = projected_stationarity(p, x1, initial.mu1)?;
    let stationarity_initial_at_final_mu = projected_stationarity(p, x1, mu_final)?;
    let stationarity_final = projected_stationarity(p, &x, mu_final)?;
    let (relative_stationarity, degenerate) = match (
        stationarity_final,
        stationarity_initial,
        stationarity_initial_at_final_mu,
    ) {
        (Some(num), Some(a), Some(b)) => {
            let den = a.min(b);
            if den > 0.0 {
                (Some(num / den), false)
            } else {
                (Some(0.0), true)
            }
        }
        _ => (None, false),
    };
    let (f_initial, f_final) = if p.has_objective() {
        (Some(p.objective(x1)?), Some(p.objective(&x)?))
    } else {
        (None, None)
    };

    Ok(SolveReport {
        problem: p.name().to_string(),
        mode: sched.mode,
        seed: opts.seed,
        noise: opts.noise,
        h_policy: opts.h_policy,
        iterations_run: budget,
        schedule: initial,
        estimates: est.clone(),
        final_x: x.iter().copied().collect(),
        mu_final,
        theta_final,
        f_initial,
        f_final,
        stationarity_initial,
        stationarity_initial_at_final_mu,
        stationarity_final,
        stationarity_min,
        relative_stationarity,
        relative_stationarity_degenerate: degenerate,
        multipliers: Multipliers {
            y: y.iter().copied().collect(),
            z: z.iter().copied().collect(),
        },
        kkt,
        mu_resets: sched.resets,
        null_steps,
        neighborhood_failures,
        condition_violations,
        violation_log,
        trace,
    })
}

/// Adjusts a schedule for the curvature policy: with the barrier Hessian
/// the deterministic constants follow from `[λ̲, λ̄]`, and a degenerate
/// window `λ̄ = λ̲` is widened to `10⁴`.
pub fn schedule_for_policy(mut s: Schedule, policy: HPolicy) -> Schedule {
    if policy == HPolicy::BarrierHessian {
        if s.lambda_upper <= s.lambda_lower {
            s.lambda_upper = 1e4;
        }
        if s.mode == Mode::Deterministic {
            s.zeta_lower = 1.0 / s.lambda_upper;
            s.zeta_upper = 1.0 / s.lambda_lower;
            s.zeta = s.lambda_lower / s.lambda_upper;
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dvector, DMatrix};

    fn box_qp() -> ProblemSpec {
        // ¼‖x − (2, −2)‖² over the box [−1, 1]²; multipliers ½ at the corner
        ProblemSpec::builder("box", 2)
            .objective(|x| 0.25 * ((x[0] - 2.0).powi(2) + (x[1] + 2.0).powi(2)))
            .gradient(|x| dvector![0.5 * (x[0] - 2.0), 0.5 * (x[1] + 2.0)])
            .constraints(
                4,
                |x| dvector![x[0] - 1.0, -x[0] - 1.0, x[1] - 1.0, -x[1] - 1.0],
                |_| DMatrix::from_column_slice(2, 4, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            )
            .build()
            .unwrap()
    }

    fn exact(m: usize) -> LipschitzEstimates {
        LipschitzEstimates {
            kappa_grad_f: 2.5,
            lip_grad_f: 0.5,
            kappa_c: vec![2.0; m],
            lip_c: vec![1.0; m],
            kappa_grad_c: vec![1.0; m],
            lip_grad_c: vec![1e-8; m],
            sigma: 0.0,
        }
    }

    #[test]
    fn multipliers_single_constraint() {
        let p = ProblemSpec::builder("one", 1)
            .gradient(|_| dvector![0.0])
            .constraints(1, |_| dvector![-2.0], |_| DMatrix::from_element(1, 1, 1.0))
            .build()
            .unwrap();
        let (y, z) = multiplier_estimates(&p, &dvector![0.0], 1.0, &dvector![0.0]).unwrap();
        assert_eq!(y.len(), 0);
        assert_relative_eq!(z[0], 0.5);
        let (_, z) = multiplier_estimates(&p, &dvector![0.0], 1e-12, &dvector![0.0]).unwrap();
        assert!(z[0] < 1e-11);
    }

    #[test]
    fn box_qp_moves_toward_corner() {
        let p = box_qp();
        // the bounds nearest the start face away from the pull of f
        let x1 = dvector![-0.3, 0.2];
        let mut s =
            Schedule::from_start(&p.constraints(&x1).unwrap(), Mode::Deterministic).unwrap();
        s.budget = 2000;
        let r = solve(&p, &s, &exact(4), &x1, &SolveOptions::default()).unwrap();
        assert_eq!(r.mu_resets, 0);
        assert!(r.final_x[0] > 0.9 && r.final_x[1] < -0.9);
        assert!(r.f_final.unwrap() < r.f_initial.unwrap());
        assert!(r.relative_stationarity.unwrap() < 0.1);
    }

    #[test]
    fn rejects_start_outside_neighborhood() {
        let p = box_qp();
        let s = Schedule::from_theta0(0.5, Mode::Deterministic);
        let err = solve(
            &p,
            &s,
            &exact(4),
            &dvector![0.9, 0.0],
            &SolveOptions::default(),
        );
        assert!(matches!(err, Err(Error::InfeasibleStart(_))));
    }

    #[test]
    fn trace_downsampling_keeps_last_row() {
        let p = box_qp();
        let x1 = dvector![0.0, 0.0];
        let mut s =
            Schedule::from_start(&p.constraints(&x1).unwrap(), Mode::Deterministic).unwrap();
        s.budget = 25;
        let opts = SolveOptions {
            trace_every: 10,
            ..SolveOptions::default()
        };
        let r = solve(&p, &s, &exact(4), &x1, &opts).unwrap();
        let ks: Vec<usize> = r.trace.iter().map(|t| t.k).collect();
        assert_eq!(ks, vec![1, 11, 21, 25]);
    }
}
