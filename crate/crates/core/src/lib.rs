//! Single-loop feasible interior-point method for
//!
//! ```text
//! min f(x)  subject to  Ax = b,  c(x) ≤ 0
//! ```
//!
//! with exact or stochastic objective gradients. Every iterate stays strictly
//! feasible: it satisfies the equalities and keeps each `cᵢ` below a shrinking
//! margin `−θ_k`. One linear solve per iteration produces a descent direction
//! for the log-barrier function, and the step is sized from Lipschitz
//! estimates so that no line search on `f` is needed.
//!
//! ```
//! use rand::SeedableRng;
//! use slip::estimate::{estimate_constants, EstimateOptions};
//! use slip::harness::fixtures;
//! use slip::solver::{solve, Mode, Schedule, SolveOptions};
//!
//! let fixture = fixtures::ball_qp(3, 4);
//! let p = fixture.def.build()?;
//! let x1 = fixture.start.clone();
//! let mut schedule = Schedule::from_start(&p.constraints(&x1)?, Mode::Deterministic)?;
//! schedule.budget = 500;
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
//! let est = estimate_constants(&p, &x1, &EstimateOptions::default(), &mut rng)?;
//! let report = solve(&p, &schedule, &est, &x1, &SolveOptions::default())?;
//! assert!(report.f_final.unwrap() < report.f_initial.unwrap());
//! # Ok::<(), slip::Error>(())
//! ```

// `!(a < b)` is used on purpose so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimate;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod phase1;
pub mod solver;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/problems.md")]
    mod problems {}
    #[doc = include_str!("../../../book/src/barrier.md")]
    mod barrier {}
    #[doc = include_str!("../../../book/src/directions.md")]
    mod directions {}
    #[doc = include_str!("../../../book/src/step_sizes.md")]
    mod step_sizes {}
    #[doc = include_str!("../../../book/src/stochastic.md")]
    mod stochastic {}
    #[doc = include_str!("../../../book/src/phase_one.md")]
    mod phase_one {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
