use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::null_basis;
use crate::model::{ConstraintDef, EqualityDef, ObjectiveDef, ProblemDef};

/// Lower bound imposed on the cone axis `x_n`.
pub const AXIS_FLOOR: f64 = 1e-3;
const MAX_REDRAWS: usize = 10;
/// Expected norm of the cross-section part of the interior point.
const SECTION_NORM: f64 = 2.0;
/// Gap between `x̂_n` and `‖u‖`; small enough that the cone, not the axis
/// floor, is the tightest constraint at `x̂`.
const AXIS_GAP: f64 = 0.3;
/// Weight `ρ` of `e_n` in the cost.
const AXIS_COST: f64 = 2.0;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random cone program together with a point certified strictly inside it.
#[derive(Debug, Clone)]
pub struct GeneratedSocp {
    pub def: ProblemDef,
    pub interior: DVector<f64>,
}

/// Random instance of `min cᵀx` s.t. `Ax = b`, `‖x_{1:n−1}‖₂ ≤ x_n`.
///
/// The cone is written as `‖x_{1:n−1}‖² − x_n² ≤ 0` together with
/// `x_n ≥ 10⁻³`, which is smooth and describes the same set. The point
/// `x̂ = (u, ‖u‖ + 0.3)` with `u ~ N(0, 4I/(n−1))` is interior and `b = Ax̂`.
/// The cost is `c = Aᵀw + 2e_n`, so `cᵀx = wᵀb + 2x_n` on the feasible set
/// and the optimal value is finite.
pub fn generate_socp(n: usize, l: usize, seed: u64) -> Result<GeneratedSocp> {
    if n < 2 || l >= n {
        return Err(Error::Config(format!(
            "need n >= 2 and 0 <= l < n, got n = {n}, l = {l}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = SECTION_NORM / ((n - 1) as f64).sqrt();
    let u = DVector::from_fn(n - 1, |_, _| scale * normal(&mut rng));
    let mut interior = DVector::zeros(n);
    interior.rows_mut(0, n - 1).copy_from(&u);
    interior[n - 1] = u.norm() + AXIS_GAP;

    let mut a = None;
    let mut last_err = None;
    for _ in 0..MAX_REDRAWS {
        let candidate = DMatrix::from_fn(l, n, |_, _| normal(&mut rng));
        match null_basis(&candidate) {
            Ok(_) => {
                a = Some(candidate);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let a = match (a, last_err) {
        (Some(a), _) => a,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one draw is made"),
    };
    let b = &a * &interior;
    let w = DVector::from_fn(l, |_, _| normal(&mut rng));
    let mut cost = a.tr_mul(&w);
    cost[n - 1] += AXIS_COST;

    let mut axis = vec![0.0; n];
    axis[n - 1] = -1.0;
    let equalities = (l > 0).then(|| EqualityDef {
        a: a.row_iter().map(|r| r.iter().copied().collect()).collect(),
        b: b.iter().copied().collect(),
    });
    let def = ProblemDef {
        name: format!("socp_n{n}_l{l}_s{seed}"),
        n,
        equalities,
        objective: ObjectiveDef::Linear {
            c: cost.iter().copied().collect(),
        },
        constraints: vec![
            ConstraintDef::NormCone,
            ConstraintDef::Affine {
                a: axis,
                b: -AXIS_FLOOR,
            },
        ],
        start: Some(interior.iter().copied().collect()),
    };
    Ok(GeneratedSocp { def, interior })
}
