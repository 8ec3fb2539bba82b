use nalgebra::DVector;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ProblemSpec;
use crate::error::{Error, Result};

/// Synthetic error added to exact gradients in stochastic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    /// `∇f(x) + σ·ξ` with `ξ ~ N(0, I)`. Unbounded, so it does not satisfy a
    /// hard bound on the projected error.
    Gaussian { sigma: f64 },
    /// Gaussian draw whose null-space component is shrunk onto the ball of
    /// radius `sigma` when it falls outside. The law stays symmetric, so the
    /// estimate is unbiased.
    ProjectedBounded { sigma: f64 },
    /// Variance of a sampled mean over a fraction `batch_frac` of the data:
    /// `σ·sqrt((1 − b)/b)·ξ`.
    MinibatchLike { sigma: f64, batch_frac: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        let sigma = match *self {
            NoiseModel::None => return Ok(()),
            NoiseModel::Gaussian { sigma } | NoiseModel::ProjectedBounded { sigma } => sigma,
            NoiseModel::MinibatchLike { sigma, batch_frac } => {
                if !(batch_frac > 0.0 && batch_frac <= 1.0) {
                    return Err(Error::Config(format!(
                        "batch fraction must lie in (0, 1], got {batch_frac}"
                    )));
                }
                sigma
            }
        };
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise level must be >= 0, got {sigma}"
            )));
        }
        Ok(())
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseModel::None)
    }

    /// Typical size of `‖P(g − ∇f)‖₂` in a space of dimension `dim`; exact
    /// bound for the projected kind.
    pub fn nominal_bound(&self, dim: usize) -> f64 {
        let root = (dim as f64).sqrt();
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * root,
            NoiseModel::ProjectedBounded { sigma } => sigma,
            NoiseModel::MinibatchLike { sigma, batch_frac } => {
                sigma * ((1.0 - batch_frac) / batch_frac).sqrt() * root
            }
        }
    }
}

fn standard_normal(rng: &mut dyn RngCore, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// `∇f(x)` plus one draw of `noise`.
pub fn draw_gradient(
    p: &ProblemSpec,
    x: &DVector<f64>,
    noise: &NoiseModel,
    rng: &mut dyn RngCore,
) -> Result<DVector<f64>> {
    let g = p.gradient(x)?;
    let n = p.n();
    Ok(match *noise {
        NoiseModel::None => g,
        NoiseModel::Gaussian { sigma } => g + standard_normal(rng, n) * sigma,
        NoiseModel::ProjectedBounded { sigma } => {
            let e = standard_normal(rng, n) * sigma;
            let pe = p.factors().project(&e);
            let norm = pe.norm();
            if norm > sigma {
                let shrink = if norm > 0.0 { sigma / norm } else { 0.0 };
                g + (&e - &pe) + pe * shrink
            } else {
                g + e
            }
        }
        NoiseModel::MinibatchLike { sigma, batch_frac } => {
            let scale = sigma * ((1.0 - batch_frac) / batch_frac).sqrt();
            g + standard_normal(rng, n) * scale
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dvector, DMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(n: usize) -> ProblemSpec {
        let a = DMatrix::from_fn(2, n, |i, j| ((i + 1) * (j + 2)) as f64 % 5.0 - 2.0);
        let b = DVector::zeros(2);
        ProblemSpec::builder("linear", n)
            .equalities(a, b)
            .gradient(|x| x.map(|v| 2.0 * v + 1.0))
            .build()
            .unwrap()
    }

    #[test]
    fn exact_kinds() {
        let p = linear(4);
        let x = dvector![1.0, 0.0, -1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = p.gradient(&x).unwrap();
        assert_eq!(
            draw_gradient(&p, &x, &NoiseModel::None, &mut rng).unwrap(),
            g
        );
        let bounded = NoiseModel::ProjectedBounded { sigma: 0.0 };
        assert_eq!(draw_gradient(&p, &x, &bounded, &mut rng).unwrap(), g);
    }

    #[test]
    fn projected_bound_and_mean() {
        let p = linear(5);
        let x = dvector![0.5, -1.0, 0.0, 2.0, 1.0];
        let g = p.gradient(&x).unwrap();
        let noise = NoiseModel::ProjectedBounded { sigma: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws = 10_000;
        let mut sum = DVector::zeros(5);
        let mut sum_sq = DVector::zeros(5);
        let mut worst = 0.0_f64;
        for _ in 0..draws {
            let e = draw_gradient(&p, &x, &noise, &mut rng).unwrap() - &g;
            worst = worst.max(p.factors().project(&e).norm());
            sum_sq += e.component_mul(&e);
            sum += e;
        }
        assert!(worst <= 1.0 + 1e-12);
        let mean = &sum / draws as f64;
        for i in 0..5 {
            let var = sum_sq[i] / draws as f64 - mean[i] * mean[i];
            let se = (var / draws as f64).sqrt();
            assert!(
                mean[i].abs() <= 3.0 * se + 1e-12,
                "component {i}: {}",
                mean[i]
            );
        }
    }

    #[test]
    fn validation() {
        assert!(NoiseModel::Gaussian { sigma: -1.0 }.validate().is_err());
        assert!(NoiseModel::MinibatchLike {
            sigma: 1.0,
            batch_frac: 0.0
        }
        .validate()
        .is_err());
        assert!(NoiseModel::MinibatchLike {
            sigma: 1.0,
            batch_frac: 0.25
        }
        .validate()
        .is_ok());
    }
}
