use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::schedule::DirectionBounds;
use crate::error::Result;
use crate::linalg::{solve_direction_system, NullSpaceFactors};
use crate::model::{barrier_gradient, check_interior, ProblemSpec};

/// Choice of the matrix `H_k` in the direction system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HPolicy {
    #[default]
    Identity,
    /// `I` plus the Hessian of the barrier term, safeguarded on `Null(A)`.
    BarrierHessian,
}

/// `H_k`, with the identity kept symbolic so that `d = −Pq` needs no solve.
#[derive(Debug, Clone, PartialEq)]
pub enum Hessian {
    Identity,
    Dense(DMatrix<f64>),
}

impl Hessian {
    pub fn to_matrix(&self, n: usize) -> DMatrix<f64> {
        match self {
            Hessian::Identity => DMatrix::identity(n, n),
            Hessian::Dense(h) => h.clone(),
        }
    }
}

/// `q = g − μ∇c(x)diag(c(x))⁻¹1`.
pub fn compute_q(c: &DVector<f64>, jac: &DMatrix<f64>, mu: f64, g: &DVector<f64>) -> DVector<f64> {
    barrier_gradient(c, jac, mu, g)
}

/// Builds `H_k` for `policy` at `x`.
///
/// The barrier-Hessian policy forms `I + μΣ[∇cᵢ∇cᵢᵀ/cᵢ² − ∇²cᵢ/cᵢ]`, then
/// shifts by the smallest `τ ∈ {0, 10⁻⁴, 2·10⁻⁴, 4·10⁻⁴, …}` lifting the
/// reduced eigenvalues to `λ̲`, and scales down when the largest exceeds
/// `λ̄`. If both cannot hold at once the reduced spectrum is clipped.
pub fn h_policy_matrix(
    p: &ProblemSpec,
    x: &DVector<f64>,
    mu: f64,
    policy: HPolicy,
    lambda_lower: f64,
    lambda_upper: f64,
) -> Result<Hessian> {
    if policy == HPolicy::Identity {
        return Ok(Hessian::Identity);
    }
    let n = p.n();
    let c = p.constraints(x)?;
    check_interior(&c)?;
    let jac = p.jacobian(x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    for i in 0..p.m() {
        let gi = jac.column(i);
        let ci = c[i];
        h += (gi * gi.transpose()) * (mu / (ci * ci));
        h -= p.constraint_hessian(i, x)? * (mu / ci);
    }
    h = (&h + h.transpose()) * 0.5;

    let z = p.factors().basis();
    if z.ncols() == 0 {
        return Ok(Hessian::Dense(h));
    }
    let reduced = z.tr_mul(&h) * z;
    let eig = SymmetricEigen::new(reduced.clone());
    let mut lo = eig.eigenvalues.min();
    let mut hi = eig.eigenvalues.max();

    if lo < lambda_lower {
        let mut tau = 1e-4;
        while lo + tau < lambda_lower {
            tau *= 2.0;
        }
        h += DMatrix::identity(n, n) * tau;
        lo += tau;
        hi += tau;
    }
    if hi > lambda_upper {
        let scale = lambda_upper / hi;
        h *= scale;
        lo *= scale;
    }
    if lo < lambda_lower * (1.0 - 1e-12) {
        let mut clipped = eig;
        clipped
            .eigenvalues
            .apply(|v| *v = v.clamp(lambda_lower, lambda_upper));
        let m = clipped.recompose();
        h = z * m * z.transpose() + (DMatrix::identity(n, n) - z * z.transpose());
    }
    Ok(Hessian::Dense(h))
}

/// Pass/fail record of the direction conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    /// `‖Ad‖ ≤ 10⁻⁸`
    pub null_space: bool,
    /// `lower·‖Pq‖ ≤ ‖d‖`
    pub lower: bool,
    /// `‖d‖ ≤ upper·‖Pq‖`
    pub upper: bool,
    /// `−(Pq)ᵀd ≥ angle·‖Pq‖‖d‖`
    pub angle: bool,
    /// `∇cᵢᵀd ≤ −½η̲‖d‖` on the nearly active set.
    pub interior: bool,
    pub interior_violations: Vec<usize>,
    pub pq_norm: f64,
    pub d_norm: f64,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.null_space && self.lower && self.upper && self.angle && self.interior
    }

    /// Labels of the failed conditions, in order.
    pub fn failures(&self) -> Vec<&'static str> {
        [
            (self.null_space, "null_space"),
            (self.lower, "lower"),
            (self.upper, "upper"),
            (self.angle, "angle"),
            (self.interior, "interior"),
        ]
        .into_iter()
        .filter(|(ok, _)| !ok)
        .map(|(_, name)| name)
        .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Direction {
    pub d: DVector<f64>,
    pub y: DVector<f64>,
    pub pq: DVector<f64>,
    pub report: ConditionReport,
}

impl Direction {
    pub fn is_null(&self) -> bool {
        self.report.d_norm == 0.0
    }
}

/// What [`compute_direction`] needs about the current iterate.
pub struct DirectionContext<'a> {
    pub q: &'a DVector<f64>,
    pub jac: &'a DMatrix<f64>,
    pub active: &'a [usize],
    pub bounds: DirectionBounds,
    pub eta_lower: f64,
}

pub fn compute_direction(
    ctx: &DirectionContext<'_>,
    h: &Hessian,
    factors: &NullSpaceFactors,
) -> Result<Direction> {
    let n = factors.dim();
    let pq = factors.project(ctx.q);
    let pq_norm = pq.norm();
    let (d, y) = if pq_norm == 0.0 {
        (DVector::zeros(n), factors.range_coefficients(&(-ctx.q)))
    } else {
        match h {
            Hessian::Identity => (-&pq, factors.range_coefficients(&(-ctx.q))),
            Hessian::Dense(hm) => solve_direction_system(hm, factors, ctx.q)?,
        }
    };
    let report = check_conditions(ctx, factors, &pq, &d);
    Ok(Direction { d, y, pq, report })
}

fn check_conditions(
    ctx: &DirectionContext<'_>,
    factors: &NullSpaceFactors,
    pq: &DVector<f64>,
    d: &DVector<f64>,
) -> ConditionReport {
    let pq_norm = pq.norm();
    let d_norm = d.norm();
    let b = ctx.bounds;
    let ad = if factors.rows() == 0 {
        0.0
    } else {
        (factors.a() * d).norm()
    };
    let interior_violations: Vec<usize> = ctx
        .active
        .iter()
        .copied()
        .filter(|&i| ctx.jac.column(i).dot(d) > -0.5 * ctx.eta_lower * d_norm)
        .collect();
    ConditionReport {
        null_space: ad <= 1e-8,
        lower: b.lower * pq_norm <= d_norm * (1.0 + 1e-10),
        upper: d_norm <= b.upper * pq_norm * (1.0 + 1e-10),
        angle: -pq.dot(d) >= b.angle * pq_norm * d_norm * (1.0 - 1e-10),
        interior: interior_violations.is_empty(),
        interior_violations,
        pq_norm,
        d_norm,
    }
}
