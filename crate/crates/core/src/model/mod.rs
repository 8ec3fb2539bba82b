//! Problem instances, barrier evaluations and KKT residuals.

mod defs;
mod noise;

pub use defs::{ConstraintDef, EqualityDef, ObjectiveDef, ProblemDef};
pub use noise::{draw_gradient, NoiseModel};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::NullSpaceFactors;

pub type ScalarFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type StochasticFn = Arc<dyn Fn(&DVector<f64>, &mut dyn RngCore) -> DVector<f64> + Send + Sync>;
pub type HessianFn = Arc<dyn Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// How a scalar inequality relates to the original bounds of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundKind {
    #[default]
    OneSided,
    /// One half of `lo ≤ φ(x) ≤ hi`, with `range = hi − lo`.
    TwoSided { range: f64 },
}

/// `min f(x)` subject to `Ax = b` and `c(x) ≤ 0`, given through oracles.
///
/// Immutable once built and cheap to clone; all oracles are shared.
#[derive(Clone)]
pub struct ProblemSpec {
    name: String,
    n: usize,
    m: usize,
    b: DVector<f64>,
    factors: NullSpaceFactors,
    objective: Option<ScalarFn>,
    gradient: Option<VectorFn>,
    stochastic_gradient: Option<StochasticFn>,
    constraints: VectorFn,
    jacobian: MatrixFn,
    hessians: Option<HessianFn>,
    bounds: Vec<BoundKind>,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("l", &self.l())
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    pub fn builder(name: impl Into<String>, n: usize) -> ProblemBuilder {
        ProblemBuilder::new(name, n)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.factors.rows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        self.factors.a()
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn factors(&self) -> &NullSpaceFactors {
        &self.factors
    }

    pub fn bounds(&self) -> &[BoundKind] {
        &self.bounds
    }

    pub fn has_objective(&self) -> bool {
        self.objective.is_some()
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }

    pub fn has_stochastic_gradient(&self) -> bool {
        self.stochastic_gradient.is_some()
    }

    pub fn has_hessians(&self) -> bool {
        self.hessians.is_some()
    }

    pub fn objective(&self, x: &DVector<f64>) -> Result<f64> {
        let f = self
            .objective
            .as_ref()
            .ok_or(Error::MissingOracle("objective"))?;
        Ok(f(x))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self
            .gradient
            .as_ref()
            .ok_or(Error::MissingOracle("gradient"))?;
        let v = g(x);
        check_len(&v, self.n, "gradient oracle")?;
        Ok(v)
    }

    pub fn stochastic_gradient(
        &self,
        x: &DVector<f64>,
        rng: &mut dyn RngCore,
    ) -> Result<DVector<f64>> {
        let g = self
            .stochastic_gradient
            .as_ref()
            .ok_or(Error::MissingOracle("stochastic gradient"))?;
        let v = g(x, rng);
        check_len(&v, self.n, "stochastic gradient oracle")?;
        Ok(v)
    }

    pub fn constraints(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let v = (self.constraints)(x);
        check_len(&v, self.m, "constraint oracle")?;
        Ok(v)
    }

    /// Columns are the constraint gradients, so the result is n×m.
    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = (self.jacobian)(x);
        if j.shape() != (self.n, self.m) {
            return Err(Error::Dimension {
                what: "constraint Jacobian oracle",
                expected: self.n * self.m,
                got: j.nrows() * j.ncols(),
            });
        }
        Ok(j)
    }

    pub fn constraint_hessian(&self, i: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let h = self
            .hessians
            .as_ref()
            .ok_or(Error::MissingOracle("constraint Hessians"))?;
        let v = h(i, x);
        if v.shape() != (self.n, self.n) {
            return Err(Error::Dimension {
                what: "constraint Hessian oracle",
                expected: self.n * self.n,
                got: v.nrows() * v.ncols(),
            });
        }
        Ok(v)
    }

    /// `‖Ax − b‖₂`.
    pub fn equality_residual(&self, x: &DVector<f64>) -> f64 {
        if self.l() == 0 {
            return 0.0;
        }
        (self.a() * x - &self.b).norm()
    }
}

/// Assembles a [`ProblemSpec`], checking dimensions and the rank of `A`.
pub struct ProblemBuilder {
    name: String,
    n: usize,
    a: Option<DMatrix<f64>>,
    b: Option<DVector<f64>>,
    objective: Option<ScalarFn>,
    gradient: Option<VectorFn>,
    stochastic_gradient: Option<StochasticFn>,
    constraints: Option<(usize, VectorFn, MatrixFn)>,
    hessians: Option<HessianFn>,
    bounds: Option<Vec<BoundKind>>,
}

impl ProblemBuilder {
    pub fn new(name: impl Into<String>, n: usize) -> Self {
        Self {
            name: name.into(),
            n,
            a: None,
            b: None,
            objective: None,
            gradient: None,
            stochastic_gradient: None,
            constraints: None,
            hessians: None,
            bounds: None,
        }
    }

    pub fn equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a = Some(a);
        self.b = Some(b);
        self
    }

    pub fn objective(mut self, f: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.objective = Some(Arc::new(f));
        self
    }

    pub fn gradient(
        mut self,
        g: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Arc::new(g));
        self
    }

    pub fn stochastic_gradient(
        mut self,
        g: impl Fn(&DVector<f64>, &mut dyn RngCore) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.stochastic_gradient = Some(Arc::new(g));
        self
    }

    /// `m` inequalities with values `c` and Jacobian `jac` (n×m, gradients as columns).
    pub fn constraints(
        mut self,
        m: usize,
        c: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.constraints = Some((m, Arc::new(c), Arc::new(jac)));
        self
    }

    pub fn constraint_hessians(
        mut self,
        h: impl Fn(usize, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hessians = Some(Arc::new(h));
        self
    }

    pub fn bounds(mut self, bounds: Vec<BoundKind>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn build(self) -> Result<ProblemSpec> {
        let n = self.n;
        let a = self.a.unwrap_or_else(|| DMatrix::zeros(0, n));
        let b = self.b.unwrap_or_else(|| DVector::zeros(a.nrows()));
        if a.ncols() != n {
            return Err(Error::Dimension {
                what: "columns of A",
                expected: n,
                got: a.ncols(),
            });
        }
        check_len(&b, a.nrows(), "b")?;
        let factors = NullSpaceFactors::new(a)?;
        let (m, constraints, jacobian) = match self.constraints {
            Some(c) => c,
            None => (
                0,
                Arc::new(|_: &DVector<f64>| DVector::zeros(0)) as VectorFn,
                Arc::new(move |_: &DVector<f64>| DMatrix::zeros(n, 0)) as MatrixFn,
            ),
        };
        let bounds = self.bounds.unwrap_or_else(|| vec![BoundKind::OneSided; m]);
        if bounds.len() != m {
            return Err(Error::Dimension {
                what: "bound metadata",
                expected: m,
                got: bounds.len(),
            });
        }
        Ok(ProblemSpec {
            name: self.name,
            n,
            m,
            b,
            factors,
            objective: self.objective,
            gradient: self.gradient,
            stochastic_gradient: self.stochastic_gradient,
            constraints,
            jacobian,
            hessians: self.hessians,
            bounds,
        })
    }
}

fn check_len(v: &DVector<f64>, expected: usize, what: &'static str) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}

/// Fails unless every entry of `c` is strictly negative.
pub fn check_interior(c: &DVector<f64>) -> Result<()> {
    match c.iter().enumerate().find(|(_, v)| !(**v < 0.0)) {
        Some((index, &value)) => Err(Error::Domain { index, value }),
        None => Ok(()),
    }
}

/// `φ(x, μ) = f(x) − μ Σ log(−cᵢ(x))`.
pub fn eval_barrier(p: &ProblemSpec, x: &DVector<f64>, mu: f64) -> Result<f64> {
    let c = p.constraints(x)?;
    check_interior(&c)?;
    let f = p.objective(x)?;
    Ok(f - mu * c.iter().map(|ci| (-ci).ln()).sum::<f64>())
}

/// `φ̃(x, μ) = f(x) − μ Σ log(−cᵢ(x)/κ_{cᵢ})`, the barrier shifted by the
/// bounds `κ_c`. It is increasing in `μ` wherever `cᵢ(x) ≥ −κ_{cᵢ}`.
pub fn eval_shifted_barrier(
    p: &ProblemSpec,
    x: &DVector<f64>,
    mu: f64,
    kappa_c: &[f64],
) -> Result<f64> {
    let c = p.constraints(x)?;
    check_interior(&c)?;
    let f = p.objective(x)?;
    let logs: f64 = c.iter().zip(kappa_c).map(|(ci, k)| (-ci / k).ln()).sum();
    Ok(f - mu * logs)
}

/// `g − μ ∇c(x) diag(c(x))⁻¹ 1`, which is `∇ₓφ(x, μ)` when `g = ∇f(x)`.
pub fn eval_barrier_gradient(
    p: &ProblemSpec,
    x: &DVector<f64>,
    mu: f64,
    g: &DVector<f64>,
) -> Result<DVector<f64>> {
    let c = p.constraints(x)?;
    check_interior(&c)?;
    let jac = p.jacobian(x)?;
    Ok(barrier_gradient(&c, &jac, mu, g))
}

/// [`eval_barrier_gradient`] from values already at hand.
pub fn barrier_gradient(
    c: &DVector<f64>,
    jac: &DMatrix<f64>,
    mu: f64,
    g: &DVector<f64>,
) -> DVector<f64> {
    if mu == 0.0 || c.is_empty() {
        return g.clone();
    }
    let weights = c.map(|ci| mu / -ci);
    g + jac * weights
}

/// `c ≤ −θ` componentwise, compared exactly.
pub fn in_neighborhood(c: &DVector<f64>, theta: f64) -> bool {
    c.iter().all(|&ci| ci <= -theta)
}

pub fn neighborhood_contains(p: &ProblemSpec, x: &DVector<f64>, theta: f64) -> Result<bool> {
    Ok(in_neighborhood(&p.constraints(x)?, theta))
}

/// Indices with `cᵢ > −ημ`.
pub fn nearly_active(c: &DVector<f64>, mu: f64, eta: f64) -> Vec<usize> {
    let cut = -eta * mu;
    c.iter()
        .enumerate()
        .filter(|(_, &ci)| ci > cut)
        .map(|(i, _)| i)
        .collect()
}

pub fn nearly_active_set(
    p: &ProblemSpec,
    x: &DVector<f64>,
    mu: f64,
    eta: f64,
) -> Result<Vec<usize>> {
    Ok(nearly_active(&p.constraints(x)?, mu, eta))
}

/// Componentwise violation of the first-order optimality system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal_eq: f64,
    pub primal_ineq: f64,
    pub dual_sign: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        [
            self.stationarity,
            self.primal_eq,
            self.primal_ineq,
            self.dual_sign,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn kkt_residual(
    p: &ProblemSpec,
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<KktResidual> {
    check_len(y, p.l(), "y")?;
    check_len(z, p.m(), "z")?;
    let grad = p.gradient(x)?;
    let c = p.constraints(x)?;
    let jac = p.jacobian(x)?;
    let mut r = grad + &jac * z;
    if p.l() > 0 {
        r += p.a().tr_mul(y);
    }
    let inf = |it: &mut dyn Iterator<Item = f64>| it.fold(0.0_f64, f64::max);
    Ok(KktResidual {
        stationarity: r.norm(),
        primal_eq: p.equality_residual(x),
        primal_ineq: inf(&mut c.iter().map(|v| v.max(0.0))),
        dual_sign: inf(&mut z.iter().map(|v| (-v).max(0.0))),
        complementarity: inf(&mut c.iter().zip(z.iter()).map(|(a, b)| (a * b).abs())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn constant_constraints(values: Vec<f64>, n: usize) -> ProblemSpec {
        let m = values.len();
        let c = DVector::from_vec(values);
        ProblemSpec::builder("constant", n)
            .objective(|_| 2.0)
            .gradient(move |_| DVector::zeros(n))
            .constraints(m, move |_| c.clone(), move |_| DMatrix::zeros(n, m))
            .build()
            .unwrap()
    }

    #[test]
    fn barrier_values() {
        let p = ProblemSpec::builder("zero", 1)
            .objective(|_| 0.0)
            .constraints(1, |_| dvector![-1.0], |_| DMatrix::zeros(1, 1))
            .build()
            .unwrap();
        assert_eq!(eval_barrier(&p, &dvector![0.0], 1.0).unwrap(), 0.0);

        let e = std::f64::consts::E;
        let p = constant_constraints(vec![-e, -e], 2);
        assert_relative_eq!(
            eval_barrier(&p, &dvector![0.0, 0.0], 1.0).unwrap(),
            0.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn shifted_barrier_offsets_by_kappa() {
        let p = constant_constraints(vec![-0.5, -2.0], 1);
        let x = dvector![0.0];
        let plain = eval_barrier(&p, &x, 0.3).unwrap();
        let shifted = eval_shifted_barrier(&p, &x, 0.3, &[1.0, 4.0]).unwrap();
        assert_relative_eq!(shifted, plain + 0.3 * 4.0_f64.ln(), epsilon = 1e-14);
        // −c ≤ κ makes every log term nonpositive, so φ̃ grows with μ
        assert!(eval_shifted_barrier(&p, &x, 0.1, &[1.0, 4.0]).unwrap() < shifted);
    }

    #[test]
    fn barrier_rejects_boundary() {
        let p = constant_constraints(vec![-1.0, 0.0], 1);
        assert!(matches!(
            eval_barrier(&p, &dvector![0.0], 1.0),
            Err(Error::Domain { index: 1, .. })
        ));
        let p = ProblemSpec::builder("no f", 1)
            .constraints(1, |_| dvector![-1.0], |_| DMatrix::zeros(1, 1))
            .build()
            .unwrap();
        assert!(matches!(
            eval_barrier(&p, &dvector![0.0], 1.0),
            Err(Error::MissingOracle(_))
        ));
    }

    #[test]
    fn barrier_gradient_arithmetic() {
        let p = ProblemSpec::builder("one", 2)
            .constraints(
                1,
                |_| dvector![-2.0],
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            )
            .build()
            .unwrap();
        let g = dvector![1.0, 1.0];
        let q = eval_barrier_gradient(&p, &dvector![0.0, 0.0], 1.0, &g).unwrap();
        assert_relative_eq!(q, dvector![1.5, 1.0], epsilon = 1e-15);
        let q0 = eval_barrier_gradient(&p, &dvector![0.0, 0.0], 0.0, &g).unwrap();
        assert_eq!(q0, g);
    }

    #[test]
    fn neighborhood_membership() {
        assert!(in_neighborhood(&dvector![-1.0, -2.0], 0.5));
        assert!(!in_neighborhood(&dvector![-1.0, -0.4], 0.5));
        assert!(in_neighborhood(&dvector![-0.5], 0.5));
    }

    #[test]
    fn nearly_active_examples() {
        assert_eq!(nearly_active(&dvector![-0.1, -5.0], 0.2, 1.0), vec![0]);
        assert!(nearly_active(&dvector![-3.0, -4.0], 0.2, 1.0).is_empty());
        assert!(nearly_active(&dvector![-0.2], 0.2, 1.0).is_empty());
    }

    #[test]
    fn kkt_residual_unconstrained() {
        let p = ProblemSpec::builder("sphere", 3)
            .objective(|x| 0.5 * x.norm_squared())
            .gradient(|x| x.clone())
            .build()
            .unwrap();
        let r = kkt_residual(
            &p,
            &DVector::zeros(3),
            &DVector::zeros(0),
            &DVector::zeros(0),
        )
        .unwrap();
        assert_eq!(r.max(), 0.0);

        let x = dvector![1.0, 2.0, 2.0];
        let r = kkt_residual(&p, &x, &DVector::zeros(0), &DVector::zeros(0)).unwrap();
        assert_relative_eq!(r.stationarity, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn rank_checked_at_build() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = ProblemSpec::builder("bad", 2)
            .equalities(a, dvector![1.0, 1.0])
            .build()
            .unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }));
    }

    #[test]
    fn oracle_dimensions_checked() {
        let p = ProblemSpec::builder("bad oracle", 2)
            .gradient(|_| dvector![1.0])
            .build()
            .unwrap();
        assert!(matches!(
            p.gradient(&dvector![0.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
    }
}
