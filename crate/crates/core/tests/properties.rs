use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use slip::estimate::{estimate_constants, EstimateOptions};
use slip::harness::{fixtures, generate_socp, plan_run, EstimateSettings, ScheduleOverrides};
use slip::linalg::null_basis;
use slip::model::{eval_barrier, in_neighborhood, nearly_active, NoiseModel};
use slip::phase1::{merit_value, phase1_solve, update_tau, PhaseOneOptions};
use slip::solver::{
    compute_direction, compute_q, multiplier_estimates, solve_with_observer, DirectionBounds,
    DirectionContext, HPolicy, Hessian, Mode, Schedule, SolveOptions,
};

fn vector(n: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, n)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    vector(rows * cols, 2.0).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

/// Random `l × n` matrix with `l < n`, full row rank with probability one.
fn equality_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..9).prop_flat_map(|n| (0..n).prop_flat_map(move |l| matrix(l, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nearly_active_grows_with_eta(
        c in vector(8, 3.0).prop_map(|v| DVector::from_vec(v.iter().map(|x| -x.abs() - 1e-3).collect())),
        mu in 0.01..5.0,
        eta in 0.0..1.0,
        extra in 0.0..1.0,
    ) {
        let small = nearly_active(&c, mu, eta);
        let large = nearly_active(&c, mu, eta + extra);
        prop_assert!(small.iter().all(|i| large.contains(i)));
    }

    #[test]
    fn neighborhoods_are_nested(c in vector(6, 2.0), theta in 0.0..2.0, wider in 0.0..2.0) {
        let c = DVector::from_vec(c);
        if in_neighborhood(&c, theta + wider) {
            prop_assert!(in_neighborhood(&c, theta));
        }
    }

    #[test]
    fn projector_identities(a in equality_matrix(), v in vector(8, 5.0)) {
        let Ok(factors) = null_basis(&a) else { return Ok(()) };
        let n = a.ncols();
        let v = DVector::from_column_slice(&v[..n]);
        let pv = factors.project(&v);
        prop_assert!((factors.project(&pv) - &pv).norm() <= 1e-10 * (1.0 + v.norm()));
        prop_assert!((&a * &pv).norm() <= 1e-10 * (1.0 + v.norm()) * (1.0 + a.norm()));
        let w = DVector::from_fn(n, |i, _| (i as f64).sin());
        // symmetry: ⟨Pv, w⟩ = ⟨v, Pw⟩
        prop_assert!((pv.dot(&w) - v.dot(&factors.project(&w))).abs() <= 1e-10 * (1.0 + v.norm() * w.norm()));
    }

    #[test]
    fn direction_bounds_hold(
        a in equality_matrix(),
        q in vector(8, 3.0),
        spectrum in prop::collection::vec(0.2..5.0, 8),
    ) {
        let Ok(factors) = null_basis(&a) else { return Ok(()) };
        let n = a.ncols();
        let z = factors.basis();
        let r = z.ncols();
        if r == 0 {
            return Ok(());
        }
        let eig = &spectrum[..r];
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(0.0, f64::max);
        let h = z * DMatrix::from_diagonal(&DVector::from_column_slice(eig)) * z.transpose()
            + (DMatrix::identity(n, n) - z * z.transpose());
        let q = DVector::from_column_slice(&q[..n]);
        let jac = DMatrix::zeros(n, 0);
        let bounds = DirectionBounds { lower: 1.0 / hi, upper: 1.0 / lo, angle: lo / hi };
        let ctx = DirectionContext { q: &q, jac: &jac, active: &[], bounds, eta_lower: 1.0 };
        let dir = compute_direction(&ctx, &Hessian::Dense(h), &factors).unwrap();
        let (pq, d) = (dir.pq.norm(), dir.d.norm());
        let tol = 1e-8 * (1.0 + pq);
        prop_assert!(d >= bounds.lower * pq - tol);
        prop_assert!(d <= bounds.upper * pq + tol);
        prop_assert!(-dir.pq.dot(&dir.d) >= bounds.angle * pq * d - tol * (1.0 + d));
        prop_assert!((&a * &dir.d).norm() <= 1e-8 * (1.0 + d));
    }

    #[test]
    fn schedules_decrease_at_a_fixed_ratio(theta0 in 1e-3..10.0, stochastic in any::<bool>()) {
        let mode = if stochastic { Mode::Stochastic } else { Mode::Deterministic };
        let s = Schedule::from_theta0(theta0, mode);
        let ratio = s.mu(1) / s.theta_prev(1);
        for k in 1..2000 {
            prop_assert!(s.mu(k + 1) < s.mu(k));
            prop_assert!(s.theta(k + 1) < s.theta(k));
            let r = s.mu(k) / s.theta_prev(k);
            prop_assert!((r - ratio).abs() <= 1e-12 * ratio);
        }
    }

    #[test]
    fn barrier_gradient_matches_differences(seed in 0u64..1000, mu in 0.01..3.0) {
        let f = fixtures::two_balls();
        let p = f.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = &f.start + DVector::from_fn(2, |_, _| rand::Rng::random_range(&mut rng, -0.1..0.1));
        let c = p.constraints(&x).unwrap();
        prop_assume!(c.max() < -1e-2);
        let q = compute_q(&c, &p.jacobian(&x).unwrap(), mu, &p.gradient(&x).unwrap());
        let h = 1e-4 * (-c.max());
        for j in 0..2 {
            let at = |t: f64| {
                let mut y = x.clone();
                y[j] += t;
                eval_barrier(&p, &y, mu).unwrap()
            };
            let fd = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            prop_assert!((fd - q[j]).abs() <= 1e-6 * q.amax().max(1.0));
        }
    }

    #[test]
    fn multipliers_reproduce_the_projected_gradient(seed in 0u64..1000, mu in 0.01..2.0) {
        let f = fixtures::equality_box_qp(8, 2, 9);
        let p = f.build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let step = p.factors().project(&DVector::from_fn(8, |_, _| rand::Rng::random_range(&mut rng, -0.1..0.1)));
        let x = &f.start + step;
        let c = p.constraints(&x).unwrap();
        prop_assume!(c.max() < 0.0);
        let g = p.gradient(&x).unwrap();
        let jac = p.jacobian(&x).unwrap();
        let (y, z) = multiplier_estimates(&p, &x, mu, &g).unwrap();
        // ∇f + Jz + Aᵀy is exactly the projected barrier gradient
        let residual = &g + &jac * &z + p.a().transpose() * &y;
        let pq = p.factors().project(&compute_q(&c, &jac, mu, &g));
        prop_assert!((residual - pq).norm() <= 1e-10 * (1.0 + g.norm() + z.norm()));
        prop_assert!(z.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn tau_never_increases(tau in 1e-6..10.0, theta in -5.0..5.0, residual in 0.0..10.0) {
        let next = update_tau(tau, theta, residual);
        prop_assert!(next <= tau && next > 0.0 || residual == 0.0 && theta > 0.0);
    }

    #[test]
    fn merit_is_the_stated_sum(c in vector(5, 3.0), s in prop::collection::vec(0.01..4.0f64, 5), tau in 0.0..2.0f64) {
        let c = DVector::from_vec(c);
        let s = DVector::from_vec(s);
        let expected: f64 = s.iter().zip(c.iter()).map(|(s, c)| -tau * s.ln() + (c + s).abs()).sum();
        prop_assert!((merit_value(&c, &s, tau).unwrap() - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn phase_one_accepts_only_decreasing_steps(x in -4.0..4.0f64, y in -4.0..4.0f64) {
        let f = fixtures::disk_outside();
        let p = f.build().unwrap();
        let r = phase1_solve(&p, &DVector::from_vec(vec![x, y]), &PhaseOneOptions::default()).unwrap();
        prop_assert!(r.is_feasible());
        let mut tau = f64::INFINITY;
        for step in &r.steps {
            prop_assert!(step.tau <= tau);
            tau = step.tau;
            if step.accepted {
                prop_assert!(step.merit_after <= step.merit_before - 1e-4 * step.alpha * step.predicted);
            }
        }
    }

    #[test]
    fn estimates_are_positive_and_repeatable(seed in 0u64..200) {
        let f = fixtures::ball_qp(3, 4);
        let p = f.build().unwrap();
        let opts = EstimateOptions::default();
        let run = || estimate_constants(&p, &f.start, &opts, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let est = run();
        prop_assert_eq!(&est, &run());
        prop_assert!(est.validate(p.m()).is_ok());
        prop_assert_eq!(&est.kappa_grad_c, &est.lip_c);
    }

    #[test]
    fn generated_cones_have_interior_points(n in 2usize..30, seed in any::<u64>(), frac in 0.0..1.0) {
        let l = ((n - 1) as f64 * frac) as usize;
        let g = generate_socp(n, l, seed).unwrap();
        let p = g.def.build().unwrap();
        prop_assert!(p.constraints(&g.interior).unwrap().iter().all(|v| *v <= -1e-3));
        prop_assert!(p.equality_residual(&g.interior) <= 1e-10 * (1.0 + p.b().norm()));
    }
}

/// Smallest stationarity over the run falls two orders below the first.
#[test]
fn stationarity_trend_on_deterministic_fixtures() {
    for f in fixtures::batch() {
        let p = f.build().unwrap();
        let (mut s, est) = plan_run(
            &p,
            &f.start,
            Mode::Deterministic,
            &ScheduleOverrides::default(),
            HPolicy::Identity,
            &NoiseModel::None,
            &EstimateSettings::default(),
        )
        .unwrap();
        s.budget = 20_000;
        let mut first = None;
        let mut least = f64::INFINITY;
        solve_with_observer(
            &p,
            &s,
            &est,
            &f.start,
            &SolveOptions::default(),
            &mut |st| {
                let v = st.stationarity.unwrap();
                first.get_or_insert(v);
                least = least.min(v);
            },
        )
        .unwrap();
        let first = first.unwrap();
        assert!(
            least <= 1e-2 * first,
            "{}: {least:.3e} vs initial {first:.3e}",
            f.name()
        );
    }
}
