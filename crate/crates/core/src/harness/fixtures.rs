//! Small test problems with known strictly feasible points.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::socp::generate_socp;
use crate::error::Result;
use crate::model::{ConstraintDef, EqualityDef, ObjectiveDef, ProblemDef, ProblemSpec};

/// A problem definition and a strictly feasible starting point.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub def: ProblemDef,
    pub start: DVector<f64>,
}

impl Fixture {
    fn new(def: ProblemDef, start: Vec<f64>) -> Self {
        let mut def = def;
        def.start = Some(start.clone());
        Self {
            def,
            start: DVector::from_vec(start),
        }
    }

    /// Same problem from another strictly feasible point.
    pub fn starting_at(self, start: Vec<f64>) -> Self {
        Self::new(self.def, start)
    }

    pub fn name(&self) -> &str {
        &self.def.name
    }

    pub fn build(&self) -> Result<ProblemSpec> {
        self.def.build()
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn unit(n: usize, i: usize, sign: f64) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = sign;
    v
}

fn box_constraints(n: usize, lo: f64, hi: f64) -> Vec<ConstraintDef> {
    (0..n)
        .flat_map(|i| {
            [
                ConstraintDef::Affine {
                    a: unit(n, i, 1.0),
                    b: hi,
                },
                ConstraintDef::Affine {
                    a: unit(n, i, -1.0),
                    b: -lo,
                },
            ]
        })
        .collect()
}

fn nonnegative(n: usize) -> Vec<ConstraintDef> {
    (0..n)
        .map(|i| ConstraintDef::Affine {
            a: unit(n, i, -1.0),
            b: 0.0,
        })
        .collect()
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `½(x − t)ᵀQ(x − t)` as a quadratic objective.
fn shifted_quadratic(q: &DMatrix<f64>, target: &DVector<f64>) -> ObjectiveDef {
    ObjectiveDef::Quadratic {
        q: rows(q),
        c: (-(q * target)).iter().copied().collect(),
    }
}

/// Well-conditioned random SPD matrix with eigenvalues in `[1, cond]`.
fn spd(rng: &mut ChaCha8Rng, n: usize, cond: f64) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    let q = g.qr().q();
    let eig = DVector::from_fn(n, |i, _| {
        if n == 1 {
            1.0
        } else {
            1.0 + (cond - 1.0) * i as f64 / (n - 1) as f64
        }
    });
    &q * DMatrix::from_diagonal(&eig) * q.transpose()
}

/// `f = vᵀx`, `c₁ = −x₁`, `c₂ = a·x₁ − x₂`, starting from `(1, a + 1)`.
pub fn example1(a: f64, v: [f64; 2]) -> Fixture {
    let def = ProblemDef {
        name: format!("example1_a{a}_v{}_{}", v[0], v[1]),
        n: 2,
        equalities: None,
        objective: ObjectiveDef::Linear { c: v.to_vec() },
        constraints: vec![
            ConstraintDef::Affine {
                a: vec![-1.0, 0.0],
                b: 0.0,
            },
            ConstraintDef::Affine {
                a: vec![a, -1.0],
                b: 0.0,
            },
        ],
        start: None,
    };
    Fixture::new(def, vec![1.0, a + 1.0])
}

/// `f = vᵀx`, `c₁ = −x₁`, `c₂ = x₁ − x₂²`, starting from `(0.5, 1)`.
pub fn example2(v: [f64; 2]) -> Fixture {
    let def = ProblemDef {
        name: format!("example2_v{}_{}", v[0], v[1]),
        n: 2,
        equalities: None,
        objective: ObjectiveDef::Linear { c: v.to_vec() },
        constraints: vec![
            ConstraintDef::Affine {
                a: vec![-1.0, 0.0],
                b: 0.0,
            },
            ConstraintDef::Quadratic {
                q: vec![vec![0.0, 0.0], vec![0.0, -2.0]],
                a: vec![1.0, 0.0],
                b: 0.0,
            },
        ],
        start: None,
    };
    Fixture::new(def, vec![0.5, 1.0])
}

/// Unit disk with a start outside it, for the feasibility search.
pub fn disk_outside() -> Fixture {
    let def = ProblemDef {
        name: "disk_outside".into(),
        n: 2,
        equalities: None,
        objective: ObjectiveDef::Linear { c: vec![1.0, 0.0] },
        constraints: vec![ConstraintDef::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        }],
        start: None,
    };
    Fixture::new(def, vec![2.0, 0.0])
}

/// `x₁ ≤ −1` and `x₁ ≥ 1`: no feasible point.
pub fn infeasible_pair() -> Fixture {
    let def = ProblemDef {
        name: "infeasible_pair".into(),
        n: 1,
        equalities: None,
        objective: ObjectiveDef::Linear { c: vec![1.0] },
        constraints: vec![
            ConstraintDef::Affine {
                a: vec![1.0],
                b: -1.0,
            },
            ConstraintDef::Affine {
                a: vec![-1.0],
                b: -1.0,
            },
        ],
        start: None,
    };
    Fixture::new(def, vec![0.0])
}

/// Point inside `[−1, 1]ⁿ` leaning towards `dir`, with distinct slacks so
/// that only a few bounds are tight at once.
fn lean(dir: &DVector<f64>, reach: f64) -> Vec<f64> {
    let n = dir.len();
    (0..n)
        .map(|i| dir[i].signum() * reach * (i + 1) as f64 / n as f64)
        .collect()
}

/// `½(x − t)ᵀQ(x − t)` over `[−1, 1]ⁿ` with `t` partly outside the box.
pub fn box_qp(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = spd(&mut rng, n, 4.0) * 0.25;
    let target = DVector::from_fn(n, |i, _| if i % 2 == 0 { 1.5 } else { -0.5 });
    let def = ProblemDef {
        name: format!("box_qp_{n}"),
        n,
        equalities: None,
        objective: shifted_quadratic(&q, &target),
        constraints: box_constraints(n, -1.0, 1.0),
        start: None,
    };
    Fixture::new(def, lean(&-&target, 0.5))
}

/// Convex quadratic over a ball whose unconstrained minimizer lies outside.
pub fn ball_qp(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = spd(&mut rng, n, 3.0) * 0.25;
    let target = DVector::from_element(n, 2.0 / (n as f64).sqrt());
    let def = ProblemDef {
        name: format!("ball_qp_{n}"),
        n,
        equalities: None,
        objective: shifted_quadratic(&q, &target),
        constraints: vec![ConstraintDef::Ball {
            center: vec![0.0; n],
            radius: 1.0,
        }],
        start: None,
    };
    // opposite the target, so the nearby boundary and the objective agree
    let start = (&target * (-0.6 / target.norm())).iter().copied().collect();
    Fixture::new(def, start)
}

/// Linear objective over a ball.
pub fn ball_linear(n: usize) -> Fixture {
    let c: Vec<f64> = (0..n).map(|i| 0.5 + 0.05 * i as f64).collect();
    let def = ProblemDef {
        name: format!("ball_linear_{n}"),
        n,
        equalities: None,
        objective: ObjectiveDef::Linear { c },
        constraints: vec![ConstraintDef::Ball {
            center: vec![0.0; n],
            radius: 1.0,
        }],
        start: None,
    };
    Fixture::new(def, vec![0.2; n])
}

/// Quadratic over the probability simplex.
pub fn simplex_qp(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = spd(&mut rng, n, 5.0) * 0.2;
    let target = DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let def = ProblemDef {
        name: format!("simplex_qp_{n}"),
        n,
        equalities: Some(EqualityDef {
            a: vec![vec![1.0; n]],
            b: vec![1.0],
        }),
        objective: shifted_quadratic(&q, &target),
        constraints: nonnegative(n),
        start: None,
    };
    Fixture::new(def, ramp_on_simplex(n))
}

/// Simplex point with weights proportional to `1, 2, …, n`.
fn ramp_on_simplex(n: usize) -> Vec<f64> {
    let total = (n * (n + 1)) as f64 / 2.0;
    (0..n).map(|i| (i + 1) as f64 / total).collect()
}

/// Mean-variance portfolio: `½xᵀΣx − rᵀx` on the simplex.
pub fn portfolio(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = gaussian(&mut rng, n, n) * (0.5 / (n as f64).sqrt());
    let sigma = &g * g.transpose() + DMatrix::identity(n, n) * 0.1;
    let r: Vec<f64> = (0..n).map(|i| -0.2 * (i as f64 + 1.0) / n as f64).collect();
    let def = ProblemDef {
        name: format!("portfolio_{n}"),
        n,
        equalities: Some(EqualityDef {
            a: vec![vec![1.0; n]],
            b: vec![1.0],
        }),
        objective: ObjectiveDef::Quadratic {
            q: rows(&sigma),
            c: r,
        },
        constraints: nonnegative(n),
        start: None,
    };
    Fixture::new(def, ramp_on_simplex(n))
}

/// Quadratic with random equalities inside a box.
pub fn equality_box_qp(n: usize, l: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian(&mut rng, l, n);
    let x0 = DVector::from_fn(n, |i, _| 0.6 * (i + 1) as f64 / n as f64);
    let b = &a * &x0;
    let q = spd(&mut rng, n, 4.0) * 0.1;
    let target = DVector::from_element(n, 2.0);
    let def = ProblemDef {
        name: format!("equality_box_qp_{n}_{l}"),
        n,
        equalities: Some(EqualityDef {
            a: rows(&a),
            b: b.iter().copied().collect(),
        }),
        objective: shifted_quadratic(&q, &target),
        constraints: box_constraints(n, -1.0, 1.0),
        start: None,
    };
    Fixture::new(def, x0.iter().copied().collect())
}

/// Least squares `½‖Mx − y‖²` with nonnegativity and an upper bound on the sum.
pub fn nonnegative_least_squares(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = gaussian(&mut rng, n + 3, n) * (0.5 / ((n + 3) as f64).sqrt());
    let truth = DVector::from_fn(n, |i, _| if i % 3 == 0 { -1.0 } else { 1.0 });
    let y = &m * truth;
    let q = m.transpose() * &m + DMatrix::identity(n, n) * 0.02;
    let c = -(m.transpose() * y);
    let mut constraints = nonnegative(n);
    constraints.push(ConstraintDef::Affine {
        a: vec![1.0; n],
        b: n as f64,
    });
    let def = ProblemDef {
        name: format!("nonneg_least_squares_{n}"),
        n,
        equalities: None,
        objective: ObjectiveDef::Quadratic {
            q: rows(&q),
            c: c.iter().copied().collect(),
        },
        constraints,
        start: None,
    };
    let start = (0..n).map(|i| 0.4 + 0.1 * i as f64).collect();
    Fixture::new(def, start)
}

/// Rosenbrock inside a ball that contains its minimizer.
pub fn rosenbrock_ball(n: usize) -> Fixture {
    let def = ProblemDef {
        name: format!("rosenbrock_ball_{n}"),
        n,
        equalities: None,
        objective: ObjectiveDef::Rosenbrock { scale: 0.01 },
        constraints: vec![ConstraintDef::Ball {
            center: vec![0.0; n],
            radius: 1.5 * (n as f64).sqrt(),
        }],
        start: None,
    };
    let start = (0..n)
        .map(|i| if i % 2 == 0 { -1.2 } else { 1.0 })
        .collect();
    Fixture::new(def, start)
}

/// Rosenbrock in a box that cuts off its minimizer.
pub fn rosenbrock_box(n: usize) -> Fixture {
    let def = ProblemDef {
        name: format!("rosenbrock_box_{n}"),
        n,
        equalities: None,
        objective: ObjectiveDef::Rosenbrock { scale: 0.01 },
        constraints: box_constraints(n, -0.5, 0.5),
        start: None,
    };
    let start = (0..n).map(|i| 0.1 + 0.05 * i as f64).collect();
    Fixture::new(def, start)
}

/// Linear objective on the intersection of two overlapping disks.
pub fn two_balls() -> Fixture {
    let def = ProblemDef {
        name: "two_balls".into(),
        n: 2,
        equalities: None,
        objective: ObjectiveDef::Linear { c: vec![0.0, 0.5] },
        constraints: vec![
            ConstraintDef::Ball {
                center: vec![-0.5, 0.0],
                radius: 1.0,
            },
            ConstraintDef::Ball {
                center: vec![0.5, 0.0],
                radius: 1.0,
            },
        ],
        start: None,
    };
    Fixture::new(def, vec![0.2, 0.3])
}

/// Quadratic over an ellipsoid `½xᵀDx ≤ 1`.
pub fn ellipsoid_qp(n: usize) -> Fixture {
    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = 1.0 + i as f64;
            row
        })
        .collect();
    let target = DVector::from_element(n, 1.5);
    let def = ProblemDef {
        name: format!("ellipsoid_qp_{n}"),
        n,
        equalities: None,
        objective: shifted_quadratic(&(DMatrix::identity(n, n) * 0.25), &target),
        constraints: vec![ConstraintDef::Quadratic {
            q: d,
            a: vec![0.0; n],
            b: 1.0,
        }],
        start: None,
    };
    Fixture::new(def, vec![0.1; n])
}

/// Quadratic with two-sided bounds on linear combinations.
pub fn range_qp(n: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = spd(&mut rng, n, 3.0) * 0.1;
    let target = DVector::from_fn(n, |i, _| if i % 2 == 0 { 3.0 } else { -3.0 });
    let constraints = (0..n)
        .map(|i| {
            let mut a = vec![0.0; n];
            a[i] = 1.0;
            a[(i + 1) % n] = 0.5;
            ConstraintDef::Range {
                a,
                lo: -1.0,
                hi: 1.0,
            }
        })
        .collect();
    let def = ProblemDef {
        name: format!("range_qp_{n}"),
        n,
        equalities: None,
        objective: shifted_quadratic(&q, &target),
        constraints,
        start: None,
    };
    let start = (0..n).map(|i| 0.05 * (i + 1) as f64).collect();
    Fixture::new(def, start)
}

/// Nonconvex quadratic objective on a box.
pub fn indefinite_box(n: usize) -> Fixture {
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = vec![0.0; n];
            row[i] = if i % 2 == 0 { 0.5 } else { -0.25 };
            row
        })
        .collect();
    let c: Vec<f64> = (0..n).map(|i| 0.15 - 0.05 * i as f64).collect();
    let def = ProblemDef {
        name: format!("indefinite_box_{n}"),
        n,
        equalities: None,
        objective: ObjectiveDef::Quadratic { q, c },
        constraints: box_constraints(n, -1.0, 1.0),
        start: None,
    };
    let start = (0..n).map(|i| 0.1 + 0.1 * i as f64).collect();
    Fixture::new(def, start)
}

/// Linear objective over a bounded slice of the second-order cone.
pub fn cone_slice(n: usize) -> Fixture {
    let mut c = vec![0.0; n];
    c[0] = 0.5;
    c[n - 1] = 0.25;
    let mut top = vec![0.0; n];
    top[n - 1] = 1.0;
    let mut start = vec![0.0; n];
    start[0] = -0.2;
    start[n - 1] = 0.8;
    let def = ProblemDef {
        name: format!("cone_slice_{n}"),
        n,
        equalities: None,
        objective: ObjectiveDef::Linear { c },
        constraints: vec![
            ConstraintDef::NormCone,
            ConstraintDef::Affine { a: top, b: 2.0 },
            ConstraintDef::Affine {
                a: unit(n, n - 1, -1.0),
                b: -0.1,
            },
        ],
        start: None,
    };
    Fixture::new(def, start)
}

/// Small generated cone program.
pub fn socp_small(n: usize, l: usize, seed: u64) -> Fixture {
    let g = generate_socp(n, l, seed).expect("generator accepts these shapes");
    let start = g.interior.iter().copied().collect();
    Fixture::new(g.def, start)
}

/// The benchmark collection used for the stationarity histogram.
pub fn batch() -> Vec<Fixture> {
    vec![
        example1(1.0, [0.0, 0.5]).starting_at(vec![0.5, 0.85]),
        example1(1.0, [0.5, 0.5]).starting_at(vec![0.5, 0.85]),
        example1(2.0, [0.5, 0.25]).starting_at(vec![0.5, 1.6]),
        example2([0.5, 0.0]),
        box_qp(2, 1),
        box_qp(5, 2),
        box_qp(10, 3),
        ball_qp(3, 4),
        ball_qp(8, 5),
        ball_linear(4),
        simplex_qp(4, 6),
        simplex_qp(10, 7),
        portfolio(6, 8),
        equality_box_qp(8, 2, 9),
        equality_box_qp(15, 5, 10),
        nonnegative_least_squares(6, 11),
        rosenbrock_ball(2),
        rosenbrock_box(4),
        two_balls(),
        ellipsoid_qp(5),
        range_qp(4, 12),
        indefinite_box(4),
        cone_slice(4),
        socp_small(6, 2, 13),
        socp_small(12, 3, 14),
    ]
}

/// Looks a fixture up by the name it reports.
pub fn by_name(name: &str) -> Option<Fixture> {
    let extra = [disk_outside(), infeasible_pair()];
    batch().into_iter().chain(extra).find(|f| f.name() == name)
}
