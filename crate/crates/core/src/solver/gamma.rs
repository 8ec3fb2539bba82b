use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::schedule::{positive_root, Exploration};
use crate::error::{Error, Result};
use crate::model::{in_neighborhood, ProblemSpec};

/// Fractions of the step at which the segment condition is sampled.
const SEGMENT_SAMPLES: [f64; 5] = [0.2, 0.4, 0.6, 0.8, 1.0];
const MAX_HALVINGS: usize = 50;

/// Largest `γ` keeping the quadratic model of `cᵢ` along `d` below `−θ_k`:
/// the positive root of `½L‖d‖²u² + (∇cᵢᵀd)u − (−cᵢ − θ_k) = 0`, `u = γα`.
pub fn gamma_tilde(grad_dot_d: f64, d_norm_sq: f64, slack: f64, lip: f64, alpha: f64) -> f64 {
    positive_root(0.5 * lip * d_norm_sq, grad_dot_d, slack.max(0.0)) / alpha
}

/// Inputs of [`compute_gamma`] at the current iterate.
pub struct GammaInput<'a> {
    pub x: &'a DVector<f64>,
    pub d: &'a DVector<f64>,
    pub c: &'a DVector<f64>,
    pub jac: &'a DMatrix<f64>,
    pub alpha: f64,
    /// `θ_k`, the neighborhood the step must land in.
    pub theta: f64,
    pub lip_grad_c: &'a [f64],
    /// 1 in deterministic mode, `γ_{k,max}` in stochastic mode.
    pub cap: f64,
    pub exploration: Exploration,
    /// `μ_k`, used only by [`Exploration::Objective`].
    pub mu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaOutcome {
    pub gamma: f64,
    /// `minᵢ min{γ̃ᵢ, cap}` before verification and exploration.
    pub rule_gamma: f64,
    pub halvings: usize,
    pub doublings: u32,
}

fn barrier_sum(c: &DVector<f64>) -> f64 {
    -c.iter().map(|v| (-v).ln()).sum::<f64>()
}

struct Segment<'a> {
    p: &'a ProblemSpec,
    x: &'a DVector<f64>,
    step: DVector<f64>,
    theta: f64,
}

impl Segment<'_> {
    fn point(&self, gamma: f64) -> DVector<f64> {
        self.x + &self.step * gamma
    }

    /// Constraint values at the endpoint when every sample lies in `𝒩(θ)`.
    fn check(&self, gamma: f64) -> Result<Option<DVector<f64>>> {
        let mut last = None;
        for s in SEGMENT_SAMPLES {
            let c = self.p.constraints(&self.point(s * gamma))?;
            if !in_neighborhood(&c, self.theta) {
                return Ok(None);
            }
            last = Some(c);
        }
        Ok(last)
    }
}

/// Chooses `γ_k` so that `[x, x + γ_kα_kd] ⊆ 𝒩(θ_k)`.
///
/// The rule value is checked at four interior points and the endpoint and
/// halved until it passes. When exploration is on and `x + α_kd` is already
/// safe, `γ` starts at 1 and doubles instead.
pub fn compute_gamma(p: &ProblemSpec, input: &GammaInput<'_>) -> Result<GammaOutcome> {
    let d_norm_sq = input.d.norm_squared();
    let mut rule = input.cap;
    for i in 0..input.c.len() {
        let g = input.jac.column(i).dot(input.d);
        let slack = -input.c[i] - input.theta;
        rule = rule.min(gamma_tilde(
            g,
            d_norm_sq,
            slack,
            input.lip_grad_c[i],
            input.alpha,
        ));
    }

    let seg = Segment {
        p,
        x: input.x,
        step: input.d * input.alpha,
        theta: input.theta,
    };

    if input.exploration != Exploration::Off {
        if let Some(mut c_prev) = seg.check(1.0)? {
            let mut gamma = 1.0;
            let mut doublings = 0;
            let mut phi_prev = match input.exploration {
                Exploration::Objective { .. } => {
                    p.objective(&seg.point(1.0))? + input.mu * barrier_sum(&c_prev)
                }
                _ => 0.0,
            };
            loop {
                let next = match input.exploration {
                    Exploration::BarrierTerm { max_doublings }
                    | Exploration::Objective { max_doublings }
                        if doublings < max_doublings =>
                    {
                        2.0 * gamma
                    }
                    Exploration::ConstraintsOnly { cap } if gamma < cap => (2.0 * gamma).min(cap),
                    _ => break,
                };
                let Some(c_next) = seg.check(next)? else {
                    break;
                };
                match input.exploration {
                    Exploration::BarrierTerm { .. } => {
                        if barrier_sum(&c_next) > barrier_sum(&c_prev) {
                            break;
                        }
                    }
                    Exploration::Objective { .. } => {
                        let phi_next =
                            p.objective(&seg.point(next))? + input.mu * barrier_sum(&c_next);
                        if phi_next > phi_prev {
                            break;
                        }
                        phi_prev = phi_next;
                    }
                    _ => {}
                }
                gamma = next;
                c_prev = c_next;
                doublings += 1;
            }
            return Ok(GammaOutcome {
                gamma,
                rule_gamma: rule,
                halvings: 0,
                doublings,
            });
        }
    }

    let mut gamma = rule;
    for halvings in 0..=MAX_HALVINGS {
        if seg.check(gamma)?.is_some() {
            return Ok(GammaOutcome {
                gamma,
                rule_gamma: rule,
                halvings,
                doublings: 0,
            });
        }
        gamma *= 0.5;
    }
    Err(Error::NeighborhoodViolation {
        halvings: MAX_HALVINGS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    #[test]
    fn closed_form_examples() {
        assert_relative_eq!(gamma_tilde(0.0, 1.0, 0.5, 1.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            gamma_tilde(0.0, 1.0, 0.1, 1.0, 1.0),
            0.2_f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn rationalized_root_matches_textbook_form() {
        for (g, dd, r, l, a) in [
            (0.3_f64, 2.0, 0.7, 1.5, 0.2),
            (-0.3, 2.0, 0.7, 1.5, 0.2),
            (1.0, 0.5, 1e-3, 4.0, 1.0),
        ] {
            let textbook = (-g + (g * g + 2.0 * l * dd * r).sqrt()) / (l * a * dd);
            assert_relative_eq!(gamma_tilde(g, dd, r, l, a), textbook, max_relative = 1e-10);
        }
    }

    fn half_plane() -> ProblemSpec {
        // c(x) = x₁ − 1
        ProblemSpec::builder("half-plane", 2)
            .constraints(
                1,
                |x| dvector![x[0] - 1.0],
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            )
            .build()
            .unwrap()
    }

    #[test]
    fn rule_value_stays_in_neighborhood() {
        let p = half_plane();
        let x = dvector![0.0, 0.0];
        let d = dvector![1.0, 0.0];
        let c = p.constraints(&x).unwrap();
        let jac = p.jacobian(&x).unwrap();
        let input = GammaInput {
            x: &x,
            d: &d,
            c: &c,
            jac: &jac,
            alpha: 2.0,
            theta: 0.5,
            lip_grad_c: &[1e-8],
            cap: 1.0,
            exploration: Exploration::Off,
            mu: 1.0,
        };
        let out = compute_gamma(&p, &input).unwrap();
        // exact linear constraint: γα = 0.5
        assert_relative_eq!(out.gamma, 0.25, max_relative = 1e-6);
        let end = &x + &d * (out.gamma * 2.0);
        assert!(p.constraints(&end).unwrap()[0] <= -0.5);
    }

    #[test]
    fn underestimated_curvature_is_halved() {
        // c(x) = x₁² − 1 but L is claimed tiny.
        let p = ProblemSpec::builder("disk", 1)
            .constraints(
                1,
                |x| dvector![x[0] * x[0] - 1.0],
                |x| DMatrix::from_element(1, 1, 2.0 * x[0]),
            )
            .build()
            .unwrap();
        let x = dvector![0.0];
        let d = dvector![1.0];
        let c = p.constraints(&x).unwrap();
        let jac = p.jacobian(&x).unwrap();
        let input = GammaInput {
            x: &x,
            d: &d,
            c: &c,
            jac: &jac,
            alpha: 1.0,
            theta: 0.5,
            lip_grad_c: &[1e-8],
            cap: 1.0,
            exploration: Exploration::Off,
            mu: 1.0,
        };
        let out = compute_gamma(&p, &input).unwrap();
        assert_eq!(out.halvings, 1);
        assert_eq!(out.gamma, 0.5);
    }

    #[test]
    fn exploration_respects_cap_and_barrier() {
        let p = half_plane();
        let x = dvector![-100.0, 0.0];
        let c = p.constraints(&x).unwrap();
        let jac = p.jacobian(&x).unwrap();
        let away = dvector![-1.0, 0.0];
        let toward = dvector![1.0, 0.0];
        let mut input = GammaInput {
            x: &x,
            d: &away,
            c: &c,
            jac: &jac,
            alpha: 1.0,
            theta: 0.5,
            lip_grad_c: &[1e-8],
            cap: 1.0,
            exploration: Exploration::ConstraintsOnly { cap: 10.0 },
            mu: 1.0,
        };
        let out = compute_gamma(&p, &input).unwrap();
        assert_eq!(out.gamma, 10.0);
        assert_eq!(out.doublings, 4);

        input.exploration = Exploration::BarrierTerm { max_doublings: 10 };
        assert_eq!(compute_gamma(&p, &input).unwrap().gamma, 1024.0);

        // moving toward the constraint raises the barrier term
        input.d = &toward;
        let out = compute_gamma(&p, &input).unwrap();
        assert_eq!(out.gamma, 1.0);
        assert_eq!(out.doublings, 0);
    }

    #[test]
    fn objective_exploration_stops_when_phi_rises() {
        // f = ½x₁², c = x₁ − 1; moving left lowers the barrier but raises f
        let p = ProblemSpec::builder("bowl", 2)
            .objective(|x| 0.5 * x[0] * x[0])
            .constraints(
                1,
                |x| dvector![x[0] - 1.0],
                |_| DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            )
            .build()
            .unwrap();
        let x = dvector![-2.0, 0.0];
        let d = dvector![-1.0, 0.0];
        let c = p.constraints(&x).unwrap();
        let jac = p.jacobian(&x).unwrap();
        let mut input = GammaInput {
            x: &x,
            d: &d,
            c: &c,
            jac: &jac,
            alpha: 1.0,
            theta: 0.5,
            lip_grad_c: &[1e-8],
            cap: 1.0,
            exploration: Exploration::Objective { max_doublings: 10 },
            mu: 1.0,
        };
        assert_eq!(compute_gamma(&p, &input).unwrap().gamma, 1.0);
        input.exploration = Exploration::BarrierTerm { max_doublings: 10 };
        assert_eq!(compute_gamma(&p, &input).unwrap().gamma, 1024.0);
    }
}
