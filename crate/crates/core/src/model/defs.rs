//! Serializable problem families that compile into oracle-backed specs.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BoundKind, ProblemSpec};
use crate::error::{Error, Result};

/// A problem written out as data: dense `A`, `b` and named analytic families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemDef {
    pub name: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equalities: Option<EqualityDef>,
    pub objective: ObjectiveDef,
    #[serde(default)]
    pub constraints: Vec<ConstraintDef>,
    /// A point to start from; it need not be feasible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityDef {
    /// Row-major.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveDef {
    /// `cᵀx`
    Linear { c: Vec<f64> },
    /// `½xᵀQx + cᵀx`
    Quadratic { q: Vec<Vec<f64>>, c: Vec<f64> },
    /// `s·Σ [100(x_{i+1} − x_i²)² + (1 − x_i)²]`
    Rosenbrock {
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintDef {
    /// `aᵀx − b ≤ 0`
    Affine { a: Vec<f64>, b: f64 },
    /// `½xᵀQx + aᵀx − b ≤ 0`
    Quadratic {
        q: Vec<Vec<f64>>,
        a: Vec<f64>,
        b: f64,
    },
    /// `‖x − center‖² − radius² ≤ 0`
    Ball { center: Vec<f64>, radius: f64 },
    /// `‖x_{1:n−1}‖² − x_n² ≤ 0`
    NormCone,
    /// `lo ≤ aᵀx ≤ hi`, expanded into two inequalities.
    Range { a: Vec<f64>, lo: f64, hi: f64 },
}

#[derive(Debug, Clone)]
enum Objective {
    Linear(DVector<f64>),
    Quadratic(DMatrix<f64>, DVector<f64>),
    Rosenbrock(f64),
}

impl Objective {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Objective::Linear(c) => c.dot(x),
            Objective::Quadratic(q, c) => 0.5 * x.dot(&(q * x)) + c.dot(x),
            Objective::Rosenbrock(s) => {
                s * x
                    .as_slice()
                    .windows(2)
                    .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                    .sum::<f64>()
            }
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Objective::Linear(c) => c.clone(),
            Objective::Quadratic(q, c) => q * x + c,
            Objective::Rosenbrock(s) => {
                let mut g = DVector::zeros(x.len());
                for i in 0..x.len().saturating_sub(1) {
                    let r = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * r - 2.0 * (1.0 - x[i]);
                    g[i + 1] += 200.0 * r;
                }
                g * *s
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Piece {
    Affine(DVector<f64>, f64),
    Quadratic(DMatrix<f64>, DVector<f64>, f64),
    Ball(DVector<f64>, f64),
    Cone,
}

impl Piece {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Piece::Affine(a, b) => a.dot(x) - b,
            Piece::Quadratic(q, a, b) => 0.5 * x.dot(&(q * x)) + a.dot(x) - b,
            Piece::Ball(center, r2) => (x - center).norm_squared() - r2,
            Piece::Cone => {
                let n = x.len();
                x.rows(0, n - 1).norm_squared() - x[n - 1] * x[n - 1]
            }
        }
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Piece::Affine(a, _) => a.clone(),
            Piece::Quadratic(q, a, _) => q * x + a,
            Piece::Ball(center, _) => (x - center) * 2.0,
            Piece::Cone => {
                let n = x.len();
                let mut g = x * 2.0;
                g[n - 1] = -2.0 * x[n - 1];
                g
            }
        }
    }

    fn hessian(&self, n: usize) -> DMatrix<f64> {
        match self {
            Piece::Affine(..) => DMatrix::zeros(n, n),
            Piece::Quadratic(q, ..) => q.clone(),
            Piece::Ball(..) => DMatrix::identity(n, n) * 2.0,
            Piece::Cone => {
                let mut h = DMatrix::identity(n, n) * 2.0;
                h[(n - 1, n - 1)] = -2.0;
                h
            }
        }
    }
}

fn vector(v: &[f64], n: usize, what: &'static str) -> Result<DVector<f64>> {
    if v.len() != n {
        return Err(Error::Dimension {
            what,
            expected: n,
            got: v.len(),
        });
    }
    Ok(DVector::from_column_slice(v))
}

fn matrix(rows: &[Vec<f64>], r: usize, c: usize, what: &'static str) -> Result<DMatrix<f64>> {
    if rows.len() != r {
        return Err(Error::Dimension {
            what,
            expected: r,
            got: rows.len(),
        });
    }
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::Dimension {
            what,
            expected: c,
            got: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn symmetric(rows: &[Vec<f64>], n: usize, what: &'static str) -> Result<DMatrix<f64>> {
    let q = matrix(rows, n, n, what)?;
    let scale = 1.0 + q.amax();
    if (&q - q.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Config(format!("{what} must be symmetric")));
    }
    Ok((&q + q.transpose()) * 0.5)
}

impl ProblemDef {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Number of scalar inequalities once ranges are split.
    pub fn inequality_count(&self) -> usize {
        self.constraints
            .iter()
            .map(|c| match c {
                ConstraintDef::Range { .. } => 2,
                _ => 1,
            })
            .sum()
    }

    pub fn start_vector(&self) -> Option<DVector<f64>> {
        self.start.as_deref().map(DVector::from_column_slice)
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Config("problem dimension must be positive".into()));
        }
        let objective = match &self.objective {
            ObjectiveDef::Linear { c } => Objective::Linear(vector(c, n, "linear objective")?),
            ObjectiveDef::Quadratic { q, c } => Objective::Quadratic(
                symmetric(q, n, "objective Hessian")?,
                vector(c, n, "objective linear term")?,
            ),
            ObjectiveDef::Rosenbrock { scale } => Objective::Rosenbrock(*scale),
        };

        let mut pieces = Vec::new();
        let mut bounds = Vec::new();
        for c in &self.constraints {
            match c {
                ConstraintDef::Affine { a, b } => {
                    pieces.push(Piece::Affine(vector(a, n, "affine constraint")?, *b));
                    bounds.push(BoundKind::OneSided);
                }
                ConstraintDef::Quadratic { q, a, b } => {
                    pieces.push(Piece::Quadratic(
                        symmetric(q, n, "constraint Hessian")?,
                        vector(a, n, "quadratic constraint")?,
                        *b,
                    ));
                    bounds.push(BoundKind::OneSided);
                }
                ConstraintDef::Ball { center, radius } => {
                    pieces.push(Piece::Ball(
                        vector(center, n, "ball center")?,
                        radius * radius,
                    ));
                    bounds.push(BoundKind::OneSided);
                }
                ConstraintDef::NormCone => {
                    if n < 2 {
                        return Err(Error::Config("norm cone needs n >= 2".into()));
                    }
                    pieces.push(Piece::Cone);
                    bounds.push(BoundKind::OneSided);
                }
                ConstraintDef::Range { a, lo, hi } => {
                    if !(lo < hi) {
                        return Err(Error::Config(format!("empty range [{lo}, {hi}]")));
                    }
                    let a = vector(a, n, "range constraint")?;
                    let range = hi - lo;
                    pieces.push(Piece::Affine(a.clone(), *hi));
                    pieces.push(Piece::Affine(-a, -lo));
                    bounds.push(BoundKind::TwoSided { range });
                    bounds.push(BoundKind::TwoSided { range });
                }
            }
        }

        let m = pieces.len();
        let pieces = Arc::new(pieces);
        let objective = Arc::new(objective);
        let mut builder = ProblemSpec::builder(self.name.clone(), n);
        if let Some(eq) = &self.equalities {
            let a = matrix(&eq.a, eq.a.len(), n, "A")?;
            let b = vector(&eq.b, a.nrows(), "b")?;
            builder = builder.equalities(a, b);
        }
        let (fo, go) = (objective.clone(), objective);
        let (pc, pj, ph) = (pieces.clone(), pieces.clone(), pieces);
        builder
            .objective(move |x| fo.value(x))
            .gradient(move |x| go.gradient(x))
            .constraints(
                m,
                move |x| DVector::from_iterator(pc.len(), pc.iter().map(|p| p.value(x))),
                move |x| {
                    let mut j = DMatrix::zeros(x.len(), pj.len());
                    for (i, p) in pj.iter().enumerate() {
                        j.set_column(i, &p.gradient(x));
                    }
                    j
                },
            )
            .constraint_hessians(move |i, x| ph[i].hessian(x.len()))
            .bounds(bounds)
            .build()
    }
}
