//! Least squares regression representations.
//!
//! Every solver maps a d×n data matrix `X` (columns are samples) to an n×n
//! coefficient matrix `Z` whose column i expresses sample i in terms of the
//! others:
//!
//! * [`lsr_constrained`]: noise-free `min ‖Z‖_F s.t. X = XZ` (optionally with
//!   `diag(Z) = 0`), solved column by column as least-norm systems.
//! * [`lsr1`]: `min ‖X − XZ‖_F² + λ‖Z‖_F² s.t. diag(Z) = 0`, via the closed form
//!   `Z = −D·diag(D)⁻¹` with `D = (XᵀX + λI)⁻¹` and zeroed diagonal.
//! * [`lsr2`]: the unconstrained ridge problem, `Z = (XᵀX + λI)⁻¹XᵀX`.
//! * [`column_oracle_ridge`]: the same ridge problems solved one column at a
//!   time with the column's own (n−1)- or n-variable system. It exists to
//!   check the closed forms.

use serde::{Deserialize, Serialize};

use crate::datagen::{check_unit_columns, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::matrix::{pseudo_inverse, solve_spd, Matrix, DEFAULT_RANK_TOL};

/// Relative residual above which a column counts as unrepresentable.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ConstrainedNoiseFree,
    Lsr1,
    Lsr2,
}

/// Solver output: the n×n representation matrix and how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub z: Matrix,
    /// 0 for the noise-free constrained solver.
    pub lambda: f64,
    pub variant: Variant,
    pub diag_constrained: bool,
}

impl Coefficients {
    pub fn n(&self) -> usize {
        self.z.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstrainedOptions {
    pub feasibility_tol: f64,
    pub rank_tol: f64,
}

impl Default for ConstrainedOptions {
    fn default() -> Self {
        ConstrainedOptions {
            feasibility_tol: FEASIBILITY_TOL,
            rank_tol: DEFAULT_RANK_TOL,
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveLambda(lambda))
    }
}

fn others(n: usize, i: usize) -> Vec<usize> {
    (0..n).filter(|&j| j != i).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `XᵀX + λI`.
fn regularized_gram(x: &Matrix, lambda: f64) -> Result<Matrix> {
    let g = x.gram();
    let n = g.rows();
    Matrix::from_fn(n, n, |i, j| if i == j { g[(i, j)] + lambda } else { g[(i, j)] })
}

/// Minimum-Frobenius-norm `Z` with `X = XZ`, using default tolerances.
pub fn lsr_constrained(x: &Matrix, zero_diag: bool) -> Result<Coefficients> {
    lsr_constrained_with(x, zero_diag, &ConstrainedOptions::default())
}

pub fn lsr_constrained_with(x: &Matrix, zero_diag: bool, opts: &ConstrainedOptions) -> Result<Coefficients> {
    let n = x.cols();
    let mut z = vec![vec![0.0; n]; n];

    for (i, zi) in z.iter_mut().enumerate() {
        let target = x.column(i);
        let scale = norm(target);
        let support: Vec<usize> = if zero_diag { others(n, i) } else { (0..n).collect() };

        if support.is_empty() {
            if scale > 0.0 {
                return Err(Error::InfeasibleColumn { column: i, residual: 1.0 });
            }
            continue;
        }

        let y = x.select_columns(&support)?;
        let rhs = Matrix::from_columns(&[target.to_vec()])?;
        let coef = pseudo_inverse(&y, opts.rank_tol)?.matmul(&rhs)?;
        let recon = y.matmul(&coef)?;
        let residual = recon.sub(&rhs).expect("same shape").frobenius_norm();
        let relative = if scale > 0.0 { residual / scale } else { residual };
        if relative > opts.feasibility_tol {
            return Err(Error::InfeasibleColumn { column: i, residual: relative });
        }
        for (row, &j) in support.iter().enumerate() {
            zi[j] = coef[(row, 0)];
        }
    }

    Ok(Coefficients {
        z: Matrix::from_columns(&z)?,
        lambda: 0.0,
        variant: Variant::ConstrainedNoiseFree,
        diag_constrained: zero_diag,
    })
}

/// Closed-form solution of the diagonal-constrained ridge problem.
pub fn lsr1(x: &Matrix, lambda: f64) -> Result<Coefficients> {
    check_lambda(lambda)?;
    let n = x.cols();
    let d = solve_spd(&regularized_gram(x, lambda)?, &Matrix::identity(n))?;
    let z = Matrix::from_fn(n, n, |j, i| if i == j { 0.0 } else { -d[(j, i)] / d[(i, i)] })?;
    Ok(Coefficients {
        z,
        lambda,
        variant: Variant::Lsr1,
        diag_constrained: true,
    })
}

/// Closed-form solution of the unconstrained ridge problem.
pub fn lsr2(x: &Matrix, lambda: f64) -> Result<Coefficients> {
    check_lambda(lambda)?;
    let z = solve_spd(&regularized_gram(x, lambda)?, &x.gram())?;
    Ok(Coefficients {
        z,
        lambda,
        variant: Variant::Lsr2,
        diag_constrained: false,
    })
}

/// Per-column reference solver: column i is `(YᵢᵀYᵢ + λI)⁻¹Yᵢᵀxᵢ` where `Yᵢ`
/// is `X` without column i (`zero_diag`) or all of `X`.
pub fn column_oracle_ridge(x: &Matrix, lambda: f64, zero_diag: bool) -> Result<Coefficients> {
    check_lambda(lambda)?;
    let n = x.cols();
    let mut z = vec![vec![0.0; n]; n];
    for (i, zi) in z.iter_mut().enumerate() {
        let support: Vec<usize> = if zero_diag { others(n, i) } else { (0..n).collect() };
        if support.is_empty() {
            continue;
        }
        let y = x.select_columns(&support)?;
        let rhs = y.transpose().matmul(&Matrix::from_columns(&[x.column(i).to_vec()])?)?;
        let coef = solve_spd(&regularized_gram(&y, lambda)?, &rhs)?;
        for (row, &j) in support.iter().enumerate() {
            zi[j] = coef[(row, 0)];
        }
    }
    Ok(Coefficients {
        z: Matrix::from_columns(&z)?,
        lambda,
        variant: if zero_diag { Variant::Lsr1 } else { Variant::Lsr2 },
        diag_constrained: zero_diag,
    })
}

/// `argmin_z ‖y − Xz‖² + λ‖z‖²`.
pub fn vector_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "vector_ridge",
            detail: format!("query of length {} against {}-dimensional data", y.len(), x.rows()),
        });
    }
    let rhs = x.transpose().matmul(&Matrix::from_columns(&[y.to_vec()])?)?;
    let z = solve_spd(&regularized_gram(x, lambda)?, &rhs)?;
    Ok(z.column(0).to_vec())
}

/// `‖X − XZ‖_F² + λ‖Z‖_F²`.
pub fn ridge_objective(x: &Matrix, z: &Matrix, lambda: f64) -> Result<f64> {
    let fit = x.sub(&x.matmul(z)?).ok_or(Error::DimensionMismatch {
        op: "ridge_objective",
        detail: "Z must be n×n".into(),
    })?;
    Ok(fit.frobenius_norm().powi(2) + lambda * z.frobenius_norm().powi(2))
}

/// Gradient of [`ridge_objective`] in `Z`: `2(XᵀXZ − XᵀX) + 2λZ`.
pub fn ridge_gradient(x: &Matrix, z: &Matrix, lambda: f64) -> Result<Matrix> {
    let g = x.gram();
    let gz = g.matmul(z)?;
    Matrix::from_fn(z.rows(), z.cols(), |i, j| 2.0 * (gz[(i, j)] - g[(i, j)]) + 2.0 * lambda * z[(i, j)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupingPair {
    pub i: usize,
    pub j: usize,
    /// `|z_i − z_j| / ‖y‖`.
    pub lhs: f64,
    /// `sqrt(2(1 − r)) / λ`.
    pub rhs: f64,
    /// Sample correlation `x_iᵀx_j`.
    pub r: f64,
}

impl GroupingPair {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingBoundReport {
    pub lambda: f64,
    pub coefficients: Vec<f64>,
    pub pairs: Vec<GroupingPair>,
}

impl GroupingBoundReport {
    /// Smallest `rhs − lhs` over all pairs (`+∞` with fewer than two columns).
    pub fn min_slack(&self) -> f64 {
        self.pairs.iter().map(GroupingPair::slack).fold(f64::INFINITY, f64::min)
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }
}

/// `sqrt(2(1 − r)) / λ`, with `r` clamped to at most 1.
pub fn grouping_rhs(r: f64, lambda: f64) -> f64 {
    (2.0 * (1.0 - r.min(1.0))).sqrt() / lambda
}

/// Solves the vector ridge problem for `y` and records, for every column pair,
/// the coefficient gap against its correlation bound.
pub fn grouping_bound_report(x: &Matrix, y: &[f64], lambda: f64) -> Result<GroupingBoundReport> {
    check_lambda(lambda)?;
    check_unit_columns(x, UNIT_NORM_TOL)?;
    let z = vector_ridge(x, y, lambda)?;
    let y_norm = norm(y);
    let gram = x.gram();
    let n = x.cols();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (z[i] - z[j]).abs();
            let r = gram[(i, j)];
            pairs.push(GroupingPair {
                i,
                j,
                lhs: if y_norm > 0.0 { gap / y_norm } else { 0.0 },
                rhs: grouping_rhs(r, lambda),
                r,
            });
        }
    }
    Ok(GroupingBoundReport {
        lambda,
        coefficients: z,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn unit_columns(m: &Matrix) -> Matrix {
        let norms: Vec<f64> = (0..m.cols()).map(|j| norm(m.column(j))).collect();
        Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] / norms[j]).unwrap()
    }

    fn example_one() -> Matrix {
        Matrix::from_rows(&[&[1.0, 2.0, 0.0, 0.0], &[0.0, 0.0, 1.0, 2.0]]).unwrap()
    }

    #[test]
    fn constrained_example_one_is_block_diagonal() {
        let z = lsr_constrained(&example_one(), true).unwrap().z;
        // x₁ = 0.5·x₂ is the least-norm way to write x₁ from x₂, x₃, x₄
        let col0 = z.column(0);
        assert!((col0[1] - 0.5).abs() < 1e-12);
        for &v in &[col0[0], col0[2], col0[3]] {
            assert!(v.abs() < 1e-12);
        }
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!(z[(i, j)].abs() < 1e-12 && z[(j, i)].abs() < 1e-12);
        }
        assert!((z[(0, 1)] - 2.0).abs() < 1e-12);
        assert!((z[(3, 2)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn constrained_duplicate_column() {
        let x = Matrix::from_rows(&[&[0.3, 0.3], &[-1.2, -1.2], &[2.0, 2.0]]).unwrap();
        let z = lsr_constrained(&x, true).unwrap().z;
        let expected = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert!(z.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn constrained_reconstructs_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let basis = random(6, 3, &mut rng);
        let x = basis.matmul(&random(3, 9, &mut rng)).unwrap();
        for zero_diag in [true, false] {
            let c = lsr_constrained(&x, zero_diag).unwrap();
            let resid = x.sub(&x.matmul(&c.z).unwrap()).unwrap().frobenius_norm() / x.frobenius_norm();
            assert!(resid <= 1e-8);
            if zero_diag {
                assert!((0..9).all(|i| c.z[(i, i)] == 0.0));
            }
        }
    }

    #[test]
    fn constrained_without_diag_constraint_is_projection() {
        // least-norm Z with X = XZ is the projector X⁺X
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(3, 5, &mut rng);
        let z = lsr_constrained(&x, false).unwrap().z;
        let proj = pseudo_inverse(&x, DEFAULT_RANK_TOL).unwrap().matmul(&x).unwrap();
        assert!(z.max_abs_diff(&proj).unwrap() < 1e-10);
    }

    #[test]
    fn constrained_reports_infeasible_column() {
        // x₃ is outside the span of x₁, x₂
        let x = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap();
        match lsr_constrained(&x, true) {
            Err(Error::InfeasibleColumn { column, residual }) => {
                assert_eq!(column, 2);
                assert!((residual - 1.0).abs() < 1e-12);
            }
            other => panic!("expected InfeasibleColumn, got {other:?}"),
        }
        let single = Matrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        assert!(matches!(lsr_constrained(&single, true), Err(Error::InfeasibleColumn { column: 0, .. })));
        assert!(lsr_constrained(&single, false).is_ok());
    }

    #[test]
    fn lsr1_orthonormal_columns_give_zero() {
        let z = lsr1(&Matrix::identity(3), 0.5).unwrap().z;
        assert_eq!(z.max_abs(), 0.0);
    }

    #[test]
    fn lsr1_duplicate_unit_columns() {
        // Gram [[1,1],[1,1]] + I has inverse (1/3)[[2,-1],[-1,2]], so Z₁₂ = (1/3)/(2/3)
        let x = Matrix::from_rows(&[&[0.6, 0.6], &[0.8, 0.8]]).unwrap();
        let z = lsr1(&x, 1.0).unwrap().z;
        assert!((z[(0, 1)] - 0.5).abs() < 1e-10);
        assert!((z[(1, 0)] - 0.5).abs() < 1e-10);
        assert_eq!(z[(0, 0)], 0.0);
    }

    #[test]
    fn lsr1_single_column_is_zero() {
        let x = Matrix::from_rows(&[&[3.0], &[4.0]]).unwrap();
        let c = lsr1(&x, 0.2).unwrap();
        assert_eq!(c.z, Matrix::zeros(1, 1));
        assert!(c.diag_constrained);
    }

    #[test]
    fn lambda_must_be_positive() {
        let x = Matrix::identity(2);
        for bad in [0.0, -1.0, f64::NAN] {
            assert!(matches!(lsr1(&x, bad), Err(Error::NonPositiveLambda(_))));
            assert!(matches!(lsr2(&x, bad), Err(Error::NonPositiveLambda(_))));
            assert!(matches!(column_oracle_ridge(&x, bad, true), Err(Error::NonPositiveLambda(_))));
        }
    }

    #[test]
    fn lsr1_matches_column_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(58);
        let x = random(5, 8, &mut rng);
        let closed = lsr1(&x, 0.1).unwrap().z;
        let oracle = column_oracle_ridge(&x, 0.1, true).unwrap().z;
        assert!(closed.max_abs_diff(&oracle).unwrap() <= 1e-10);
    }

    #[test]
    fn lsr2_identity_data() {
        let z = lsr2(&Matrix::identity(4), 0.25).unwrap().z;
        assert!(z.max_abs_diff(&Matrix::identity(4).scale(1.0 / 1.25)).unwrap() < 1e-15);
    }

    #[test]
    fn lsr2_large_lambda_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(4, 6, &mut rng);
        let lambda = 1e6;
        let z = lsr2(&x, lambda).unwrap().z;
        let bound = 6.0 / lambda * x.gram().frobenius_norm();
        assert!(z.frobenius_norm() <= bound);
        assert!(z.frobenius_norm() < 1e-4);
    }

    #[test]
    fn lsr2_stationary_and_rank_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(610);
        let x = random(6, 10, &mut rng);
        let z = lsr2(&x, 0.05).unwrap().z;
        assert!(ridge_gradient(&x, &z, 0.05).unwrap().max_abs() <= 1e-8);
        use crate::matrix::numeric_rank;
        assert_eq!(numeric_rank(&z, 1e-10).unwrap(), numeric_rank(&x, 1e-10).unwrap());
        assert_eq!(numeric_rank(&z, 1e-10).unwrap(), 6);
    }

    #[test]
    fn oracle_trivial_cases() {
        let z = column_oracle_ridge(&Matrix::identity(3), 0.7, true).unwrap().z;
        assert_eq!(z.max_abs(), 0.0);
        let x = Matrix::from_rows(&[&[1.0], &[2.0]]).unwrap();
        let z = column_oracle_ridge(&x, 0.5, false).unwrap().z;
        assert!((z[(0, 0)] - 5.0 / 5.5).abs() < 1e-15);
        let z = column_oracle_ridge(&x, 0.5, true).unwrap().z;
        assert_eq!(z[(0, 0)], 0.0);
    }

    #[test]
    fn lsr2_matches_unconstrained_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random(4, 7, &mut rng);
        let closed = lsr2(&x, 0.3).unwrap().z;
        let oracle = column_oracle_ridge(&x, 0.3, false).unwrap().z;
        assert!(closed.max_abs_diff(&oracle).unwrap() <= 1e-10);
    }

    #[test]
    fn grouping_identical_columns() {
        let x = unit_columns(&Matrix::from_rows(&[&[1.0, 1.0, 0.2], &[2.0, 2.0, -0.5], &[0.5, 0.5, 1.0]]).unwrap());
        let report = grouping_bound_report(&x, &[0.3, -1.0, 2.0], 0.4).unwrap();
        let z = &report.coefficients;
        assert!((z[0] - z[1]).abs() <= 1e-12);
        let pair = report.pairs.iter().find(|p| p.i == 0 && p.j == 1).unwrap();
        assert_eq!(pair.rhs, 0.0);
        assert!(report.holds(1e-9));
    }

    #[test]
    fn grouping_high_correlation_pair() {
        // two unit columns at correlation 0.98
        let r: f64 = 0.98;
        let x = Matrix::from_rows(&[&[1.0, r], &[0.0, (1.0 - r * r).sqrt()]]).unwrap();
        let report = grouping_bound_report(&x, &[0.2, 1.0], 0.1).unwrap();
        let pair = report.pairs[0];
        assert!((pair.r - 0.98).abs() < 1e-12);
        assert!((pair.rhs - 2.0).abs() < 1e-12);
        assert!(pair.lhs <= pair.rhs);
    }

    #[test]
    fn grouping_rejects_unnormalized() {
        let x = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(
            grouping_bound_report(&x, &[1.0, 0.0], 0.1),
            Err(Error::UnnormalizedColumn { column: 1, .. })
        ));
    }

    #[test]
    fn grouping_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(812);
        for lambda in [0.01, 0.1, 1.0] {
            for _ in 0..20 {
                let x = unit_columns(&random(8, 12, &mut rng));
                let y: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let report = grouping_bound_report(&x, &y, lambda).unwrap();
                assert_eq!(report.pairs.len(), 66);
                assert!(report.holds(1e-9), "min slack {}", report.min_slack());
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn woodbury_equivalence(seed in any::<u64>(), d in 2usize..50, n in 2usize..100, log_lambda in -4.0f64..1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random(d, n, &mut rng);
                let lambda = 10f64.powf(log_lambda);
                let closed = lsr1(&x, lambda).unwrap().z;
                let oracle = column_oracle_ridge(&x, lambda, true).unwrap().z;
                prop_assert!(closed.max_abs_diff(&oracle).unwrap() <= 1e-8);
            }

            #[test]
            fn lsr2_finite_difference_stationarity(seed in any::<u64>(), d in 2usize..8, n in 2usize..10, log_lambda in -2.0f64..1.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random(d, n, &mut rng);
                let lambda = 10f64.powf(log_lambda);
                let z = lsr2(&x, lambda).unwrap().z;
                prop_assert!(ridge_gradient(&x, &z, lambda).unwrap().max_abs() <= 1e-8);
                let h = 1e-5;
                for _ in 0..20 {
                    let (p, q) = (rng.gen_range(0..n), rng.gen_range(0..n));
                    let bump = |delta: f64| {
                        let zz = Matrix::from_fn(n, n, |i, j| z[(i, j)] + if (i, j) == (p, q) { delta } else { 0.0 }).unwrap();
                        ridge_objective(&x, &zz, lambda).unwrap()
                    };
                    let fd = (bump(h) - bump(-h)) / (2.0 * h);
                    prop_assert!(fd.abs() <= 1e-4, "finite difference {}", fd);
                }
            }

            #[test]
            fn duplicate_columns_get_equal_coefficients(seed in any::<u64>(), d in 2usize..8, n in 3usize..10, dup in 0usize..10) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let base = random(d, n - 1, &mut rng);
                let dup = dup % (n - 1);
                let mut cols: Vec<Vec<f64>> = (0..n - 1).map(|j| base.column(j).to_vec()).collect();
                cols.push(base.column(dup).to_vec());
                let x = Matrix::from_columns(&cols).unwrap();
                let z = lsr2(&x, 0.1).unwrap().z;
                for k in 0..n {
                    prop_assert!((z[(dup, k)] - z[(n - 1, k)]).abs() <= 1e-10);
                    prop_assert!((z[(k, dup)] - z[(k, n - 1)]).abs() <= 1e-10);
                }
            }

            #[test]
            fn shrinkage_is_monotone(seed in any::<u64>(), l1 in 1e-3f64..5.0, factor in 1.01f64..10.0) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random(5, 9, &mut rng);
                let small = lsr2(&x, l1).unwrap().z.frobenius_norm();
                let large = lsr2(&x, l1 * factor).unwrap().z.frobenius_norm();
                prop_assert!(small >= large);
            }
        }
    }
}
