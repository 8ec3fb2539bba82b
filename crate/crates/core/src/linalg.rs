//! Dense kernels for the affine part of the problem.
//!
//! Everything here works off one pivoted Householder factorization of `Aᵀ`,
//! computed once per problem:
//!
//! ```text
//! Aᵀ Π = [Q₁ Z] [R; 0]
//! ```
//!
//! `Z` is an orthonormal basis of `Null(A)`, `Q₁` spans `Range(Aᵀ)`, and the
//! orthogonal projector onto the null space is applied as `v − Q₁Q₁ᵀv`, never
//! formed densely.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on the diagonal of `R` below which `A` is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Relative pivot magnitude below which a reduced system counts as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Factorization of the equality-constraint matrix `A` (l×n).
#[derive(Debug, Clone)]
pub struct NullSpaceFactors {
    a: DMatrix<f64>,
    /// n×(n−l), orthonormal columns spanning `Null(A)`.
    basis: DMatrix<f64>,
    /// n×l, orthonormal columns spanning `Range(Aᵀ)`.
    range: DMatrix<f64>,
    /// l×l upper triangular factor with `Aᵀ Π = Q₁ R`.
    r: DMatrix<f64>,
    /// Column `j` of `AᵀΠ` is column `perm[j]` of `Aᵀ`.
    perm: Vec<usize>,
}

/// Orthonormal null-space basis and projector for `A`.
///
/// Fails with [`Error::RankDeficient`] when the numerical rank of `A` is
/// below its row count, using the tolerance `1e-10·‖A‖_F`.
pub fn null_basis(a: &DMatrix<f64>) -> Result<NullSpaceFactors> {
    NullSpaceFactors::new(a.clone())
}

impl NullSpaceFactors {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        let (l, n) = a.shape();
        if l >= n && l > 0 {
            return Err(Error::RankDeficient {
                rank: n.min(l),
                expected: l,
            });
        }
        let (q, r, perm) = pivoted_qr(&a.transpose());
        let scale = a.norm();
        let rank = (0..l)
            .take_while(|&j| r[(j, j)].abs() > RANK_TOLERANCE * scale)
            .count();
        if rank < l {
            return Err(Error::RankDeficient { rank, expected: l });
        }
        Ok(Self {
            basis: q.columns(l, n - l).into_owned(),
            range: q.columns(0, l).into_owned(),
            r: r.view((0, 0), (l, l)).into_owned(),
            perm,
            a,
        })
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The matrix `Z`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `Pv = v − Aᵀ(AAᵀ)⁻¹Av`.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rows() == 0 {
            return v.clone();
        }
        let coeffs = self.range.tr_mul(v);
        v - &self.range * coeffs
    }

    /// The `y` minimizing `‖v − Aᵀy‖`, i.e. `y = (AAᵀ)⁻¹Av`.
    pub fn range_coefficients(&self, v: &DVector<f64>) -> DVector<f64> {
        let l = self.rows();
        let mut w = self.range.tr_mul(v);
        if l > 0 {
            // R w = Q₁ᵀ v; R is nonsingular by construction.
            let solved = self.r.solve_upper_triangular_mut(&mut w);
            debug_assert!(solved);
        }
        let mut y = DVector::zeros(l);
        for (j, &p) in self.perm.iter().enumerate() {
            y[p] = w[j];
        }
        y
    }

    /// `Aᵀ(AAᵀ)⁻¹r` for `r ∈ R^l`.
    fn min_norm_preimage(&self, r: &DVector<f64>) -> DVector<f64> {
        // AAᵀ = Π RᵀR Πᵀ, so Aᵀ(AAᵀ)⁻¹r = Q₁ R⁻ᵀ Πᵀ r.
        let mut w = DVector::from_iterator(self.rows(), self.perm.iter().map(|&p| r[p]));
        let solved = self.r.tr_solve_upper_triangular_mut(&mut w);
        debug_assert!(solved);
        &self.range * w
    }
}

/// `P v` for the projector held by `factors`.
pub fn project_null(factors: &NullSpaceFactors, v: &DVector<f64>) -> DVector<f64> {
    factors.project(v)
}

/// Householder QR with column pivoting on the column norms.
/// Returns the full orthogonal `Q` (rows×rows), `R` (cols×cols, upper
/// triangular in its leading block) and the column permutation.
fn pivoted_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, Vec<usize>) {
    let (rows, cols) = m.shape();
    let mut work = m.clone();
    let mut perm: Vec<usize> = (0..cols).collect();
    let steps = rows.min(cols);
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(steps);

    for j in 0..steps {
        let pivot = (j..cols)
            .max_by(|&p, &q| {
                let np = work.view((j, p), (rows - j, 1)).norm_squared();
                let nq = work.view((j, q), (rows - j, 1)).norm_squared();
                np.total_cmp(&nq)
            })
            .unwrap_or(j);
        if pivot != j {
            work.swap_columns(j, pivot);
            perm.swap(j, pivot);
        }

        let x = work.view((j, j), (rows - j, 1)).column(0).into_owned();
        let norm = x.norm();
        if norm == 0.0 {
            reflectors.push(DVector::zeros(rows - j));
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let vnorm = v.norm();
        v /= vnorm;

        let mut block = work.view_mut((j, j), (rows - j, cols - j));
        let proj = v.tr_mul(&block);
        block -= 2.0 * &v * proj;
        reflectors.push(v);
    }

    let mut q = DMatrix::<f64>::identity(rows, rows);
    for (j, v) in reflectors.iter().enumerate().rev() {
        let mut block = q.view_mut((j, 0), (rows - j, rows));
        let proj = v.tr_mul(&block);
        block -= 2.0 * v * proj;
    }

    let r = work.rows(0, steps).upper_triangle();
    let mut r_square = DMatrix::zeros(cols, cols);
    r_square.view_mut((0, 0), (steps, cols)).copy_from(&r);
    (q, r_square, perm)
}

/// Solves `K u + Aᵀy = rhs`, `Au = 0` by the null-space method.
fn solve_saddle(
    k: &DMatrix<f64>,
    factors: &NullSpaceFactors,
    rhs: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let z = factors.basis();
    if z.ncols() == 0 {
        let u = DVector::zeros(factors.dim());
        return Ok((u, factors.range_coefficients(rhs)));
    }
    let reduced = z.tr_mul(k) * z;
    let scale = reduced
        .diagonal()
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let chol = Cholesky::new(reduced).ok_or(Error::SingularSystem("reduced Hessian"))?;
    let pivot_min = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, v| acc.min(v * v));
    if !(pivot_min > PIVOT_TOLERANCE * scale) {
        return Err(Error::SingularSystem("reduced Hessian"));
    }
    let reduced_rhs = z.tr_mul(rhs);
    let u = z * chol.solve(&reduced_rhs);
    let y = factors.range_coefficients(&(rhs - k * &u));
    Ok((u, y))
}

/// Search direction from `[H Aᵀ; A 0][d; y] = −[q; 0]`.
///
/// Computed in reduced form `d = −Z(ZᵀHZ)⁻¹Zᵀq`. The multiplier follows the
/// convention `Hd + Aᵀy = −q`.
pub fn solve_direction_system(
    h: &DMatrix<f64>,
    factors: &NullSpaceFactors,
    q: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_square(h, factors.dim(), "H")?;
    check_len(q, factors.dim(), "q")?;
    solve_saddle(h, factors, &(-q))
}

/// Closest point to `x0` on `{x : Ax = b}` together with the achieved residual.
#[derive(Debug, Clone)]
pub struct AffineProjection {
    pub x: DVector<f64>,
    pub residual: f64,
}

/// `x₀ − Aᵀ(AAᵀ)⁻¹(Ax₀ − b)`.
pub fn least_squares_feasible(
    factors: &NullSpaceFactors,
    b: &DVector<f64>,
    x0: &DVector<f64>,
) -> Result<AffineProjection> {
    check_len(b, factors.rows(), "b")?;
    check_len(x0, factors.dim(), "x0")?;
    if factors.rows() == 0 {
        return Ok(AffineProjection {
            x: x0.clone(),
            residual: 0.0,
        });
    }
    let r = factors.a() * x0 - b;
    let x = x0 - factors.min_norm_preimage(&r);
    let residual = (factors.a() * &x - b).norm();
    Ok(AffineProjection { x, residual })
}

/// Solution of the four-block feasibility-restoration system.
#[derive(Debug, Clone)]
pub struct Phase1Step {
    pub dx: DVector<f64>,
    pub ds: DVector<f64>,
    pub y: DVector<f64>,
    pub dz: DVector<f64>,
}

/// Solves
///
/// ```text
/// [ H    0    Aᵀ  J ] [dx]     [ J z         ]
/// [ 0    S⁻²  0   I ] [ds] = − [ −S⁻¹1 + z   ]
/// [ A    0    0   0 ] [y ]     [ 0           ]
/// [ Jᵀ   I    0   0 ] [dz]     [ c(x) + s    ]
/// ```
///
/// after eliminating `ds` and `dz`, leaving
/// `(H + JS⁻²Jᵀ)dx + Aᵀy = −J(S⁻¹1 + S⁻²(c+s))`, `A dx = 0`.
pub fn solve_phase1_kkt(
    h: &DMatrix<f64>,
    s: &DVector<f64>,
    factors: &NullSpaceFactors,
    jac: &DMatrix<f64>,
    z: &DVector<f64>,
    residual: &DVector<f64>,
) -> Result<Phase1Step> {
    let n = factors.dim();
    let m = s.len();
    check_square(h, n, "H")?;
    check_len(z, m, "z")?;
    check_len(residual, m, "c + s")?;
    if jac.shape() != (n, m) {
        return Err(Error::Dimension {
            what: "constraint Jacobian",
            expected: n * m,
            got: jac.nrows() * jac.ncols(),
        });
    }
    if let Some((index, &value)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositiveSlack { index, value });
    }

    let inv_s = s.map(|v| 1.0 / v);
    let inv_s2 = s.map(|v| 1.0 / (v * v));
    let mut scaled_jac = jac.clone();
    for (mut col, w) in scaled_jac.column_iter_mut().zip(inv_s2.iter()) {
        col *= *w;
    }
    let k = h + &scaled_jac * jac.transpose();
    let rhs = -(jac * (&inv_s + inv_s2.component_mul(residual)));

    let (dx, y) = solve_saddle(&k, factors, &rhs)?;
    let ds = -residual - jac.tr_mul(&dx);
    let dz = &inv_s - z - inv_s2.component_mul(&ds);
    Ok(Phase1Step { dx, ds, y, dz })
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

fn check_square(h: &DMatrix<f64>, expected: usize, what: &'static str) -> Result<()> {
    if h.shape() != (expected, expected) {
        return Err(Error::Dimension {
            what,
            expected,
            got: h.nrows(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn single_row_projector() {
        let f = null_basis(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        assert_eq!(f.basis().ncols(), 1);
        assert_relative_eq!(f.basis()[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(f.basis()[(1, 0)].abs(), 1.0, epsilon = 1e-15);
        let pv = project_null(&f, &dvector![3.0, 4.0]);
        assert_relative_eq!(pv, dvector![0.0, 4.0], epsilon = 1e-15);
    }

    #[test]
    fn no_equalities_means_identity() {
        let f = null_basis(&DMatrix::zeros(0, 3)).unwrap();
        assert_eq!(f.basis(), &DMatrix::identity(3, 3));
        let v = dvector![1.0, -2.0, 5.0];
        assert_eq!(f.project(&v), v);
        assert_eq!(f.range_coefficients(&v).len(), 0);
    }

    #[test]
    fn random_factor_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = gaussian(&mut rng, 3, 7);
            let f = null_basis(&a).unwrap();
            let z = f.basis();
            let scale = 1.0 + a.norm();
            assert!((&a * z).amax() <= 1e-10 * scale);
            assert!((z.tr_mul(z) - DMatrix::identity(4, 4)).amax() <= 1e-12);
            let v = gaussian_vec(&mut rng, 7);
            let pv = f.project(&v);
            assert!((f.project(&pv) - &pv).norm() <= 1e-10 * v.norm());
            assert!((&a * &pv).norm() <= 1e-10 * scale * v.norm());
            // P Aᵀ = 0
            for row in 0..3 {
                let at = a.row(row).transpose();
                assert!(f.project(&at).norm() <= 1e-10 * scale);
            }
            // contraction
            assert!(pv.norm() <= v.norm() * (1.0 + 1e-14));
        }
    }

    #[test]
    fn null_and_range_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian(&mut rng, 2, 5);
        let f = null_basis(&a).unwrap();
        let u = f.basis() * gaussian_vec(&mut rng, 3);
        assert_relative_eq!(f.project(&u), u.clone(), epsilon = 1e-12);
        let w = gaussian_vec(&mut rng, 2);
        let atw = a.transpose() * &w;
        assert!(f.project(&atw).norm() <= 1e-12 * atw.norm());
        assert_relative_eq!(f.range_coefficients(&atw), w, epsilon = 1e-10);
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        match null_basis(&a) {
            Err(Error::RankDeficient { rank, expected }) => {
                assert_eq!((rank, expected), (1, 2));
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn identity_hessian_without_equalities() {
        let f = null_basis(&DMatrix::zeros(0, 3)).unwrap();
        let q = dvector![1.0, -2.0, 0.5];
        let (d, y) = solve_direction_system(&DMatrix::identity(3, 3), &f, &q).unwrap();
        assert_relative_eq!(d, -q, epsilon = 1e-15);
        assert_eq!(y.len(), 0);
    }

    #[test]
    fn identity_hessian_projects_gradient() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let f = null_basis(&a).unwrap();
        let (d, y) =
            solve_direction_system(&DMatrix::identity(2, 2), &f, &dvector![3.0, 4.0]).unwrap();
        assert_relative_eq!(d, dvector![0.0, -4.0], epsilon = 1e-15);
        // H d + Aᵀ y = −q  ⇒  y = −3
        assert_relative_eq!(y[0], -3.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_reduced_hessian() {
        let f = null_basis(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        // H is zero on Null(A) = span(e₂)
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            solve_direction_system(&h, &f, &dvector![1.0, 1.0]),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn least_squares_examples() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let f = null_basis(&a).unwrap();
        let p = least_squares_feasible(&f, &dvector![2.0], &dvector![0.0, 5.0]).unwrap();
        assert_relative_eq!(p.x, dvector![2.0, 5.0], epsilon = 1e-15);
        assert!(p.residual <= 1e-15);

        let p = least_squares_feasible(&f, &dvector![2.0], &dvector![2.0, -1.0]).unwrap();
        assert_relative_eq!(p.x, dvector![2.0, -1.0], epsilon = 1e-15);
    }

    #[test]
    fn least_squares_random_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a = gaussian(&mut rng, 4, 9);
            let f = null_basis(&a).unwrap();
            let b = &a * gaussian_vec(&mut rng, 9);
            let x0 = gaussian_vec(&mut rng, 9);
            let p = least_squares_feasible(&f, &b, &x0).unwrap();
            assert!(p.residual <= 1e-10 * (1.0 + b.norm()));
            // x − x₀ ∈ Range(Aᵀ) ⟂ Null(A)
            let step = &p.x - &x0;
            assert!(f.basis().tr_mul(&step).norm() <= 1e-10 * (1.0 + step.norm()));
        }
    }

    #[test]
    fn phase1_system_with_zero_right_hand_side() {
        // No constraint gradient and a centred slack give a zero right-hand side.
        let f = null_basis(&DMatrix::zeros(0, 1)).unwrap();
        let s = dvector![2.0];
        let step = solve_phase1_kkt(
            &DMatrix::identity(1, 1),
            &s,
            &f,
            &DMatrix::zeros(1, 1),
            &dvector![0.5],
            &dvector![0.0],
        )
        .unwrap();
        assert_eq!(step.dx[0], 0.0);
        assert_eq!(step.ds[0], 0.0);
        assert_eq!(step.dz[0], 0.0);
    }

    #[test]
    fn phase1_system_stationary_through_equality_multiplier() {
        // With A = e₁ᵀ and ∇c = e₁ the barrier pull on s is absorbed by y.
        let f = null_basis(&DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        let s = dvector![4.0];
        let z = dvector![0.25];
        let jac = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let step =
            solve_phase1_kkt(&DMatrix::identity(2, 2), &s, &f, &jac, &z, &dvector![0.0]).unwrap();
        assert!(step.dx.norm() <= 1e-15);
        assert!(step.ds.norm() <= 1e-15);
        assert!(step.dz.norm() <= 1e-15);
        assert_relative_eq!(step.y[0], -0.25, epsilon = 1e-15);
    }
}
