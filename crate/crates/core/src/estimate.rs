//! Sampled bound and Lipschitz constants for the step-size rules.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ProblemSpec;
use crate::solver::LipschitzEstimates;

/// Sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    /// Number of random points; `None` means `n`, capped at 64.
    pub samples: Option<usize>,
    /// Per-coordinate variance of the sample cloud around the start. Kept
    /// small because wide clouds inflate the constants in higher dimension.
    pub variance: f64,
    pub safety: f64,
    pub floor: f64,
    /// Used for `κ_{∇f}`, `L_{∇f}` when the problem has no exact gradient.
    pub objective_fallback: (f64, f64),
    /// Noise bound written into the result.
    pub sigma: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            samples: None,
            variance: 0.01,
            safety: 1.1,
            floor: 1e-8,
            objective_fallback: (1.0, 1.0),
            sigma: 0.0,
        }
    }
}

pub const MAX_SAMPLES: usize = 64;

struct Sample {
    x: DVector<f64>,
    c: DVector<f64>,
    jac: DMatrix<f64>,
    grad: Option<DVector<f64>>,
}

/// Estimates from `x1` and `samples` points drawn from `N(x1, σ²I)`.
///
/// Bounds take the maximum over all points, Lipschitz constants the
/// largest difference quotient over all pairs. Every value is multiplied
/// by the safety factor and floored.
pub fn estimate_constants(
    p: &ProblemSpec,
    x1: &DVector<f64>,
    opts: &EstimateOptions,
    rng: &mut dyn RngCore,
) -> Result<LipschitzEstimates> {
    let n = p.n();
    let count = opts.samples.unwrap_or(n).min(MAX_SAMPLES);
    let spread = opts.variance.sqrt();
    let has_grad = p.has_gradient();

    let mut points = Vec::with_capacity(count + 1);
    let eval = |x: DVector<f64>| -> Result<Sample> {
        Ok(Sample {
            c: p.constraints(&x)?,
            jac: p.jacobian(&x)?,
            grad: if has_grad {
                Some(p.gradient(&x)?)
            } else {
                None
            },
            x,
        })
    };
    points.push(eval(x1.clone())?);
    for _ in 0..count {
        let x = DVector::from_iterator(
            n,
            x1.iter()
                .map(|v| v + spread * rng.sample::<f64, _>(StandardNormal)),
        );
        points.push(eval(x)?);
    }

    let m = p.m();
    let mut kappa_c = vec![0.0_f64; m];
    let mut lip_c = vec![0.0_f64; m];
    let mut lip_grad_c = vec![0.0_f64; m];
    let mut kappa_grad_f = 0.0_f64;
    let mut lip_grad_f = 0.0_f64;

    for s in &points {
        for i in 0..m {
            kappa_c[i] = kappa_c[i].max(s.c[i].abs());
            lip_c[i] = lip_c[i].max(s.jac.column(i).norm());
        }
        if let Some(g) = &s.grad {
            kappa_grad_f = kappa_grad_f.max(g.norm());
        }
    }
    for (a, u) in points.iter().enumerate() {
        for v in &points[a + 1..] {
            let dist = (&u.x - &v.x).norm();
            if dist == 0.0 {
                continue;
            }
            for i in 0..m {
                let q = (u.jac.column(i) - v.jac.column(i)).norm() / dist;
                lip_grad_c[i] = lip_grad_c[i].max(q);
            }
            if let (Some(gu), Some(gv)) = (&u.grad, &v.grad) {
                lip_grad_f = lip_grad_f.max((gu - gv).norm() / dist);
            }
        }
    }

    if !has_grad {
        (kappa_grad_f, lip_grad_f) = opts.objective_fallback;
    }
    let fix = |v: f64| (v * opts.safety).max(opts.floor);
    let lip_c: Vec<f64> = lip_c.into_iter().map(fix).collect();
    Ok(LipschitzEstimates {
        kappa_grad_f: fix(kappa_grad_f),
        lip_grad_f: fix(lip_grad_f),
        kappa_c: kappa_c.into_iter().map(fix).collect(),
        kappa_grad_c: lip_c.clone(),
        lip_c,
        lip_grad_c: lip_grad_c.into_iter().map(fix).collect(),
        sigma: opts.sigma,
    })
}
