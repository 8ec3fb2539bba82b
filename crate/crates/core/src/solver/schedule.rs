use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which gradient information drives the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Deterministic,
    Stochastic,
}

/// Whether and how `γ` may grow past the rule value once `x + αd` is safe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Exploration {
    Off,
    /// Double from 1 while the endpoint stays in the neighborhood and
    /// `−Σ log(−cᵢ)` does not increase.
    BarrierTerm {
        max_doublings: u32,
    },
    /// Double from 1 while the endpoint stays in the neighborhood and
    /// `φ(·, μ_k)` does not increase. Needs objective values.
    Objective {
        max_doublings: u32,
    },
    /// Double from 1 up to `cap` while the endpoint stays in the neighborhood.
    ConstraintsOnly {
        cap: f64,
    },
}

impl Exploration {
    pub fn default_for(mode: Mode) -> Self {
        match mode {
            Mode::Deterministic => Exploration::Objective { max_doublings: 10 },
            Mode::Stochastic => Exploration::ConstraintsOnly { cap: 10.0 },
        }
    }
}

/// Parameters and prescribed sequences of the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub mode: Mode,
    pub mu1: f64,
    pub theta0: f64,
    /// Decay exponent, negative: `μ_k = μ₁kᵗ`.
    pub t: f64,
    pub t_alpha: f64,
    pub eta: f64,
    pub eta_lower: f64,
    pub zeta_lower: f64,
    pub zeta_upper: f64,
    pub zeta: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub gamma_buff: f64,
    pub exploration: Exploration,
    pub budget: usize,
    pub mu1_reset_cap: f64,
    #[serde(default)]
    pub resets: u32,
}

pub const DEFAULT_DECAY: f64 = -0.7;
pub const DEFAULT_BUDGET: usize = 20_000;
pub const DEFAULT_RESET_CAP: f64 = 1e4;

impl Schedule {
    /// Defaults for a start whose largest constraint value is `max_c < 0`:
    /// `θ₀ = −0.9·max c`, `μ₁ = max{0.1, 2θ₀}`.
    pub fn from_start(c1: &DVector<f64>, mode: Mode) -> Result<Self> {
        let max_c = c1.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let theta0 = if c1.is_empty() { 1.0 } else { -0.9 * max_c };
        if !(theta0 > 0.0) {
            return Err(Error::InfeasibleStart(format!(
                "largest constraint value {max_c:e} is not negative"
            )));
        }
        Ok(Self::from_theta0(theta0, mode))
    }

    pub fn from_theta0(theta0: f64, mode: Mode) -> Self {
        let mu1 = (2.0 * theta0).max(0.1);
        let t_alpha = match mode {
            Mode::Deterministic => 0.0,
            Mode::Stochastic => -0.151,
        };
        Self {
            mode,
            mu1,
            theta0,
            t: DEFAULT_DECAY,
            t_alpha,
            eta: 0.5 * (theta0 / mu1 + 1.0),
            eta_lower: theta0 + 1e-8,
            zeta_lower: 1.0,
            zeta_upper: 1.0,
            zeta: 1.0,
            lambda_lower: 1.0,
            lambda_upper: 1.0,
            gamma_buff: 1.0,
            exploration: Exploration::default_for(mode),
            budget: DEFAULT_BUDGET,
            mu1_reset_cap: DEFAULT_RESET_CAP,
            resets: 0,
        }
    }

    /// Replaces `μ₁` and re-centres `η = (θ₀/μ₁ + 1)/2`.
    pub fn with_mu1(mut self, mu1: f64) -> Self {
        self.mu1 = mu1;
        self.eta = 0.5 * (self.theta0 / mu1 + 1.0);
        self
    }

    /// Replaces `θ₀` and resets the quantities derived from it.
    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = theta0;
        self.eta_lower = theta0 + 1e-8;
        let mu1 = self.mu1;
        self.with_mu1(mu1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSchedule(msg));
        if !(self.mu1 > 0.0 && self.theta0 > 0.0) {
            return bad(format!(
                "mu1 = {} and theta0 = {} must be positive",
                self.mu1, self.theta0
            ));
        }
        if !(self.t < 0.0) || !(self.t_alpha <= 0.0) {
            return bad(format!(
                "exponents t = {}, t_alpha = {} out of range",
                self.t, self.t_alpha
            ));
        }
        let sum = self.t + self.t_alpha;
        if !(-1.0..0.0).contains(&sum) {
            return bad(format!("t + t_alpha = {sum} must lie in [-1, 0)"));
        }
        if self.mode == Mode::Stochastic {
            if !(2.0 * self.t + self.t_alpha < -1.0) {
                return bad(format!(
                    "2t + t_alpha = {} must be < -1",
                    2.0 * self.t + self.t_alpha
                ));
            }
            if !(self.t + 2.0 * self.t_alpha < -1.0) {
                return bad(format!(
                    "t + 2t_alpha = {} must be < -1",
                    self.t + 2.0 * self.t_alpha
                ));
            }
        }
        let ratio = self.theta0 / self.mu1;
        if !(self.eta > ratio && self.eta < 1.0) {
            return bad(format!(
                "eta = {} must lie in (theta0/mu1, 1) = ({ratio}, 1)",
                self.eta
            ));
        }
        if !(self.eta_lower > self.theta0) {
            return bad(format!("eta_lower = {} must exceed theta0", self.eta_lower));
        }
        if !(self.zeta_lower > 0.0 && self.zeta_lower <= self.zeta_upper) {
            return bad("need 0 < zeta_lower <= zeta_upper".into());
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad(format!("zeta = {} must lie in (0, 1]", self.zeta));
        }
        if !(self.lambda_lower > 0.0
            && self.lambda_lower <= 1.0
            && self.lambda_upper >= self.lambda_lower)
        {
            return bad("need 0 < lambda_lower <= 1 and lambda_upper >= lambda_lower".into());
        }
        if !(self.gamma_buff >= 0.0) {
            return bad("gamma_buff must be nonnegative".into());
        }
        if self.budget == 0 {
            return bad("iteration budget must be at least 1".into());
        }
        match self.exploration {
            Exploration::ConstraintsOnly { cap } if !(cap >= 1.0) => {
                bad(format!("exploration cap {cap} must be >= 1"))
            }
            Exploration::Objective { .. } if self.mode == Mode::Stochastic => {
                bad("objective-monitored exploration needs exact objective values".into())
            }
            _ => Ok(()),
        }
    }

    /// `μ_k = μ₁kᵗ`
    pub fn mu(&self, k: usize) -> f64 {
        self.mu1 * (k as f64).powf(self.t)
    }

    /// `θ_{k−1} = θ₀kᵗ`
    pub fn theta_prev(&self, k: usize) -> f64 {
        self.theta0 * (k as f64).powf(self.t)
    }

    /// `θ_k = θ₀(k+1)ᵗ`
    pub fn theta(&self, k: usize) -> f64 {
        self.theta0 * ((k + 1) as f64).powf(self.t)
    }

    /// Bounds `(lower, upper, angle)` imposed on `d` against `‖Pq‖`.
    pub fn direction_bounds(&self) -> DirectionBounds {
        match self.mode {
            Mode::Deterministic => DirectionBounds {
                lower: self.zeta_lower,
                upper: self.zeta_upper,
                angle: self.zeta,
            },
            Mode::Stochastic => DirectionBounds {
                lower: 1.0 / self.lambda_upper,
                upper: 1.0 / self.lambda_lower,
                angle: self.lambda_lower / self.lambda_upper,
            },
        }
    }
}

/// Constants in `lower‖Pq‖ ≤ ‖d‖ ≤ upper‖Pq‖` and `−(Pq)ᵀd ≥ angle‖Pq‖‖d‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionBounds {
    pub lower: f64,
    pub upper: f64,
    pub angle: f64,
}

/// Bound and Lipschitz constants of the problem functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimates {
    pub kappa_grad_f: f64,
    pub lip_grad_f: f64,
    pub kappa_c: Vec<f64>,
    pub lip_c: Vec<f64>,
    /// Equal to `lip_c`.
    pub kappa_grad_c: Vec<f64>,
    pub lip_grad_c: Vec<f64>,
    pub sigma: f64,
}

impl LipschitzEstimates {
    pub fn validate(&self, m: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidEstimates(msg));
        for (name, v) in [
            ("kappa_c", &self.kappa_c),
            ("lip_c", &self.lip_c),
            ("kappa_grad_c", &self.kappa_grad_c),
            ("lip_grad_c", &self.lip_grad_c),
        ] {
            if v.len() != m {
                return bad(format!("{name} has {} entries, expected {m}", v.len()));
            }
            if let Some(x) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return bad(format!("{name} contains non-positive value {x}"));
            }
        }
        if !(self.kappa_grad_f > 0.0 && self.lip_grad_f > 0.0) {
            return bad("objective constants must be positive".into());
        }
        if !(self.sigma >= 0.0) {
            return bad("sigma must be nonnegative".into());
        }
        if self.kappa_grad_c != self.lip_c {
            return bad("kappa_grad_c must equal lip_c".into());
        }
        Ok(())
    }

    /// `Σᵢ (L_{cᵢ}κ_{∇cᵢ} + κ_{cᵢ}L_{∇cᵢ})`
    pub fn barrier_curvature_sum(&self) -> f64 {
        (0..self.kappa_c.len())
            .map(|i| self.lip_c[i] * self.kappa_grad_c[i] + self.kappa_c[i] * self.lip_grad_c[i])
            .sum()
    }
}

/// Quantities prescribed for iteration `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleValues {
    pub mu: f64,
    pub theta_prev: f64,
    pub theta: f64,
    pub l_k: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
}

/// Root of `a·u² + b·u − r = 0` with `a > 0`, `r ≥ 0`, written as
/// `2r / (b + sqrt(b² + 4ar))` so that neither `a → 0` nor `b > 0` cancels.
pub(crate) fn positive_root(a: f64, b: f64, r: f64) -> f64 {
    let disc = (b * b + 4.0 * a * r).sqrt();
    if b > 0.0 {
        2.0 * r / (b + disc)
    } else {
        (disc - b) / (2.0 * a)
    }
}

pub fn schedule_at(s: &Schedule, est: &LipschitzEstimates, k: usize) -> Result<ScheduleValues> {
    if k == 0 {
        return Err(Error::InvalidSchedule(
            "iterations are numbered from 1".into(),
        ));
    }
    s.validate()?;
    let mu = s.mu(k);
    let theta_prev = s.theta_prev(k);
    let theta = s.theta(k);
    let l_k = est.lip_grad_f + mu / (theta * theta_prev) * est.barrier_curvature_sum();
    let decay = (k as f64).powf(s.t_alpha);
    let kappa_sum: f64 = est.kappa_grad_c.iter().sum();
    let (alpha, beta) = match s.mode {
        Mode::Deterministic => (
            decay * s.zeta_lower * s.zeta / (s.zeta_upper * s.zeta_upper * l_k),
            s.zeta_upper * (est.kappa_grad_f + s.mu1 / s.theta0 * kappa_sum),
        ),
        Mode::Stochastic => (
            decay * s.lambda_lower * s.lambda_lower / (s.lambda_upper * l_k),
            (est.kappa_grad_f + est.sigma + s.mu1 / s.theta0 * kappa_sum) / s.lambda_lower,
        ),
    };

    let mut gamma_min = 1.0_f64;
    for i in 0..est.kappa_c.len() {
        let lip = est.lip_grad_c[i];
        let kappa = est.kappa_grad_c[i];
        let room = s.eta * mu - theta;
        let scale = alpha * beta;
        // u solving ½L·u² + κ·u − room = 0, then divided by αβ.
        let quad = positive_root(0.5 * lip, kappa, room) / scale;
        let lin = (s.eta_lower - theta) / (scale * lip);
        gamma_min = gamma_min.min(quad).min(lin);
    }
    let gamma_max = match s.mode {
        Mode::Deterministic => 1.0,
        Mode::Stochastic => (gamma_min + s.gamma_buff * (k as f64).powf(s.t)).min(1.0),
    };
    Ok(ScheduleValues {
        mu,
        theta_prev,
        theta,
        l_k,
        alpha,
        beta,
        gamma_min,
        gamma_max,
    })
}

/// Doubles `μ₁` up to the cap and re-centres `η`; `θ₀` and the iteration
/// counter are unaffected.
pub fn mu_reset(s: &Schedule) -> Schedule {
    if s.mu1 >= s.mu1_reset_cap {
        return s.clone();
    }
    let mut next = s.clone().with_mu1((2.0 * s.mu1).min(s.mu1_reset_cap));
    next.resets += 1;
    next
}
