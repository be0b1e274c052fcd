//! Scoring and structural diagnostics.
//!
//! * [`segmentation_error`] aligns predicted clusters to ground truth before
//!   counting mistakes.
//! * [`block_diag_violation`] measures how much coefficient mass crosses
//!   ground-truth cluster boundaries.
//! * [`check_ebd`] numerically probes a matrix criterion for permutation
//!   invariance, diagonal-block dominance and block additivity.
//! * [`grouping_effect_stats`] relates coefficient gaps to sample correlation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datagen::{DataMatrix, UNIT_NORM_TOL};
use crate::error::{Error, Result};
use crate::matrix::{numeric_rank, singular_values, Matrix, DEFAULT_RANK_TOL};
use crate::solvers::{grouping_rhs, Coefficients};
use crate::spectral::Labeling;

/// Largest k for which label alignment enumerates every permutation.
pub const EXHAUSTIVE_ALIGNMENT_MAX_K: usize = 8;

/// Off-block mass at or above which condition (2) must hold strictly.
pub const EBD_STRICT_MASS: f64 = 1e-6;

/// Relative tolerance for the equalities in the EBD checks.
pub const EBD_EQ_TOL: f64 = 1e-9;

/// Slack allowed on the grouping bound.
pub const GROUPING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub error_rate: f64,
    pub mistakes: usize,
    /// `mapping[p]` is the truth label matched to predicted label `p`.
    pub mapping: Vec<usize>,
}

/// Best label alignment of `pred` onto `truth`.
pub fn align_labels(pred: &Labeling, truth: &Labeling) -> Result<Alignment> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let k = pred.k().max(truth.k());
    let mut confusion = vec![vec![0i64; k]; k];
    for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
        confusion[p][t] += 1;
    }
    let mapping = if k <= EXHAUSTIVE_ALIGNMENT_MAX_K {
        best_permutation_exhaustive(&confusion)
    } else {
        let max = confusion.iter().flatten().copied().max().unwrap_or(0);
        let cost: Vec<Vec<i64>> = confusion.iter().map(|row| row.iter().map(|&c| max - c).collect()).collect();
        hungarian(&cost)
    };
    let matched: i64 = mapping.iter().enumerate().map(|(p, &t)| confusion[p][t]).sum();
    let mistakes = pred.len() - matched as usize;
    Ok(Alignment {
        error_rate: mistakes as f64 / pred.len() as f64,
        mistakes,
        mapping,
    })
}

/// Fraction of points misassigned under the best relabeling of `pred`.
pub fn segmentation_error(pred: &Labeling, truth: &Labeling) -> Result<f64> {
    Ok(align_labels(pred, truth)?.error_rate)
}

fn best_permutation_exhaustive(confusion: &[Vec<i64>]) -> Vec<usize> {
    fn search(
        row: usize,
        confusion: &[Vec<i64>],
        used: &mut [bool],
        current: &mut Vec<usize>,
        score: i64,
        best: &mut (i64, Vec<usize>),
    ) {
        let k = confusion.len();
        if row == k {
            if score > best.0 {
                *best = (score, current.clone());
            }
            return;
        }
        for col in 0..k {
            if !used[col] {
                used[col] = true;
                current.push(col);
                search(row + 1, confusion, used, current, score + confusion[row][col], best);
                current.pop();
                used[col] = false;
            }
        }
    }
    let k = confusion.len();
    let mut best = (i64::MIN, Vec::new());
    search(0, confusion, &mut vec![false; k], &mut Vec::with_capacity(k), 0, &mut best);
    best.1
}

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with potentials). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<i64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is a virtual start node
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        assignment[matched_row[j] - 1] = j - 1;
    }
    assignment
}

/// Cross-cluster share of `Σ|Z_ij|`; 0 when `Z` has no mass.
pub fn block_diag_violation(z: &Matrix, truth: &[usize]) -> Result<f64> {
    if !z.is_square() || z.cols() != truth.len() {
        return Err(Error::DimensionMismatch {
            op: "block_diag_violation",
            detail: format!("{}x{} coefficients with {} labels", z.rows(), z.cols(), truth.len()),
        });
    }
    let mut off = 0.0;
    let mut total = 0.0;
    for j in 0..z.cols() {
        for (i, v) in z.column(j).iter().enumerate() {
            let a = v.abs();
            total += a;
            if truth[i] != truth[j] {
                off += a;
            }
        }
    }
    Ok(if total > 0.0 { off / total } else { 0.0 })
}

/// A scalar function of a square matrix, probed by [`check_ebd`].
pub trait MatrixCriterion {
    fn name(&self) -> String;
    fn eval(&self, z: &Matrix) -> f64;
    /// Whether trial matrices should be drawn entrywise nonnegative.
    fn nonnegative_domain(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Criterion {
    /// `Σ|Z_ij|`
    L1,
    /// `‖Z‖_F²`
    FrobeniusSquared,
    /// `‖Z‖_F`
    Frobenius,
    /// `Σσᵢ(Z)`
    Nuclear,
    /// `‖ZᵀZ‖₁`, probed on nonnegative matrices.
    GramL1,
    /// `‖Z‖₁ + δ‖Z‖_*`
    L1PlusNuclear { delta: f64 },
    /// `(Σ|Z_ij|^p)^s`
    EntrywisePower { p: f64, s: f64 },
    /// Numeric rank with relative cutoff 1e-10.
    Rank,
}

impl Criterion {
    /// Criteria expected to satisfy conditions (1) and (2).
    pub fn block_enforcing() -> Vec<Criterion> {
        vec![
            Criterion::L1,
            Criterion::FrobeniusSquared,
            Criterion::Frobenius,
            Criterion::Nuclear,
            Criterion::L1PlusNuclear { delta: 0.5 },
            Criterion::GramL1,
        ]
    }
}

impl MatrixCriterion for Criterion {
    fn name(&self) -> String {
        match self {
            Criterion::L1 => "l1".into(),
            Criterion::FrobeniusSquared => "frobenius_squared".into(),
            Criterion::Frobenius => "frobenius".into(),
            Criterion::Nuclear => "nuclear".into(),
            Criterion::GramL1 => "gram_l1".into(),
            Criterion::L1PlusNuclear { delta } => format!("l1_plus_{delta}_nuclear"),
            Criterion::EntrywisePower { p, s } => format!("entrywise_power_p{p}_s{s}"),
            Criterion::Rank => "rank".into(),
        }
    }

    fn eval(&self, z: &Matrix) -> f64 {
        let nuclear = |z: &Matrix| singular_values(z).map(|s| s.iter().sum::<f64>()).unwrap_or(f64::NAN);
        match self {
            Criterion::L1 => z.abs_sum(),
            Criterion::FrobeniusSquared => z.frobenius_norm().powi(2),
            Criterion::Frobenius => z.frobenius_norm(),
            Criterion::Nuclear => nuclear(z),
            Criterion::GramL1 => z.gram().abs_sum(),
            Criterion::L1PlusNuclear { delta } => z.abs_sum() + delta * nuclear(z),
            Criterion::EntrywisePower { p, s } => z
                .to_column_major()
                .iter()
                .map(|v| v.abs().powf(*p))
                .sum::<f64>()
                .powf(*s),
            Criterion::Rank => numeric_rank(z, DEFAULT_RANK_TOL).map_or(f64::NAN, |r| r as f64),
        }
    }

    fn nonnegative_domain(&self) -> bool {
        matches!(self, Criterion::GramL1)
    }
}

/// Adapts a closure into a [`MatrixCriterion`].
pub struct FnCriterion<F> {
    pub name: String,
    pub f: F,
    pub nonnegative: bool,
}

impl<F: Fn(&Matrix) -> f64> MatrixCriterion for FnCriterion<F> {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn eval(&self, z: &Matrix) -> f64 {
        (self.f)(z)
    }

    fn nonnegative_domain(&self) -> bool {
        self.nonnegative
    }
}

/// Counterexample to one of the EBD conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbdWitness {
    pub trial: usize,
    pub z: Matrix,
    /// Size of the leading diagonal block `A`.
    pub split: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Vec<usize>>,
    /// `f(Z)` for conditions (1)/(2), `f(Z^D)` for (3).
    pub f_value: f64,
    /// `f(ZP)`, `f(Z^D)` or `f(A) + f(D)` respectively.
    pub compared_value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum ConditionOutcome {
    Pass { trials: usize },
    Fail { witness: Box<EbdWitness> },
    NotApplicable,
}

impl ConditionOutcome {
    pub fn passed(&self) -> bool {
        matches!(self, ConditionOutcome::Pass { .. })
    }

    pub fn witness(&self) -> Option<&EbdWitness> {
        match self {
            ConditionOutcome::Fail { witness } => Some(witness),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbdCheckResult {
    pub criterion: String,
    pub trials: usize,
    pub permutation_invariance: ConditionOutcome,
    pub diagonal_dominance: ConditionOutcome,
    pub additivity: ConditionOutcome,
}

/// Splits `z` at `split` into `(A, D, Z^D)`.
pub fn diagonal_blocks(z: &Matrix, split: usize) -> Result<(Matrix, Matrix, Matrix)> {
    let n = z.rows();
    if !z.is_square() || split == 0 || split >= n {
        return Err(Error::DimensionMismatch {
            op: "diagonal_blocks",
            detail: format!("split {split} of a {}x{} matrix", z.rows(), z.cols()),
        });
    }
    let a = Matrix::from_fn(split, split, |i, j| z[(i, j)])?;
    let d = Matrix::from_fn(n - split, n - split, |i, j| z[(split + i, split + j)])?;
    let zd = Matrix::from_fn(n, n, |i, j| if (i < split) == (j < split) { z[(i, j)] } else { 0.0 })?;
    Ok((a, d, zd))
}

fn eq_tol(a: f64, b: f64) -> f64 {
    EBD_EQ_TOL * a.abs().max(b.abs()).max(1.0)
}

/// False whenever either side is NaN.
fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= eq_tol(a, b)
}

/// Probes `f` on `trials` random block matrices (sizes 2–8) drawn from `seed`.
///
/// Condition (1): `f(Z) = f(ZP)` for a random permutation `P`.
/// Condition (2): `f(Z) ≥ f(Z^D)`, strictly when the off-diagonal blocks carry
/// mass of at least [`EBD_STRICT_MASS`].
/// Condition (3): `f(Z^D) = f(A) + f(D)`.
/// The first violation of each condition is kept as its witness.
pub fn check_ebd(f: &dyn MatrixCriterion, trials: usize, seed: u64) -> EbdCheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm_fail = None;
    let mut dom_fail = None;
    let mut add_fail = None;

    for trial in 0..trials {
        let n = rng.gen_range(2..=8);
        let split = rng.gen_range(1..n);
        let nonneg = f.nonnegative_domain();
        let z = Matrix::from_fn(n, n, |_, _| {
            let v: f64 = rng.sample(StandardNormal);
            if nonneg {
                v.abs()
            } else {
                v
            }
        })
        .expect("gaussian entries are finite");
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let (a, d, zd) = diagonal_blocks(&z, split).expect("split is interior");
        let f_z = f.eval(&z);

        if perm_fail.is_none() {
            let zp = z.select_columns(&perm).expect("nonempty permutation");
            let f_zp = f.eval(&zp);
            if !approx_eq(f_z, f_zp) {
                perm_fail = Some(EbdWitness {
                    trial,
                    z: z.clone(),
                    split,
                    permutation: Some(perm.clone()),
                    f_value: f_z,
                    compared_value: f_zp,
                    detail: "f(Z) != f(ZP)".into(),
                });
            }
        }

        let f_zd = f.eval(&zd);
        if dom_fail.is_none() {
            let off_mass = z.abs_sum() - zd.abs_sum();
            let tol = eq_tol(f_z, f_zd);
            let detail = if f_z.is_nan() || f_zd.is_nan() || f_z < f_zd - tol {
                Some("f(Z) < f(Z^D)".to_string())
            } else if off_mass >= EBD_STRICT_MASS && f_z - f_zd <= tol {
                Some(format!("f(Z) = f(Z^D) although the off-diagonal blocks carry mass {off_mass:.6}"))
            } else {
                None
            };
            if let Some(detail) = detail {
                dom_fail = Some(EbdWitness {
                    trial,
                    z: z.clone(),
                    split,
                    permutation: None,
                    f_value: f_z,
                    compared_value: f_zd,
                    detail,
                });
            }
        }

        if add_fail.is_none() {
            let sum = f.eval(&a) + f.eval(&d);
            if !approx_eq(f_zd, sum) {
                add_fail = Some(EbdWitness {
                    trial,
                    z: z.clone(),
                    split,
                    permutation: None,
                    f_value: f_zd,
                    compared_value: sum,
                    detail: "f(Z^D) != f(A) + f(D)".into(),
                });
            }
        }
    }

    let outcome = |fail: Option<EbdWitness>| match (fail, trials) {
        (_, 0) => ConditionOutcome::NotApplicable,
        (Some(w), _) => ConditionOutcome::Fail { witness: Box::new(w) },
        (None, _) => ConditionOutcome::Pass { trials },
    };
    EbdCheckResult {
        criterion: f.name(),
        trials,
        permutation_invariance: outcome(perm_fail),
        diagonal_dominance: outcome(dom_fail),
        additivity: outcome(add_fail),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairGrouping {
    pub i: usize,
    pub j: usize,
    /// `|x_iᵀx_j|`; when the inner product is negative, `x_j` is replaced by
    /// `−x_j` and the coefficients of `j` flip sign with it.
    pub r: f64,
    pub flipped: bool,
    /// `‖Z_{i,:} − s·Z_{j,:}‖₂` with `s = −1` when flipped.
    pub row_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub query: usize,
    pub i: usize,
    pub j: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingEffectSummary {
    pub pairs: Vec<PairGrouping>,
    /// Largest `lhs / rhs` over every (query, pair); 0/0 counts as 0.
    pub max_ratio: f64,
    pub worst: Option<BoundCheck>,
    /// Whether `lhs ≤ rhs + 1e-9` held everywhere.
    pub bound_holds: bool,
    pub checks: usize,
}

/// Grouping statistics of a ridge solution `z` computed from unit-norm `x`.
///
/// Column q of `z` solves the vector problem with query `x_q` (over all columns
/// for the unconstrained variant, over the other columns when the diagonal is
/// constrained), so the correlation bound is checked per query column.
pub fn grouping_effect_stats(z: &Coefficients, x: &DataMatrix) -> Result<GroupingEffectSummary> {
    x.check_unit_columns(UNIT_NORM_TOL)?;
    if z.lambda.is_nan() || z.lambda <= 0.0 {
        return Err(Error::NonPositiveLambda(z.lambda));
    }
    let n = x.len();
    if z.n() != n {
        return Err(Error::DimensionMismatch {
            op: "grouping_effect_stats",
            detail: format!("{}x{} coefficients for {n} samples", z.z.rows(), z.z.cols()),
        });
    }
    let gram = x.x.gram();
    let coeffs = &z.z;

    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    let mut max_ratio = 0.0f64;
    let mut worst: Option<BoundCheck> = None;
    let mut bound_holds = true;
    let mut checks = 0;

    for i in 0..n {
        for j in (i + 1)..n {
            let raw = gram[(i, j)];
            let flipped = raw < 0.0;
            let sign = if flipped { -1.0 } else { 1.0 };
            let r = raw.abs();
            let row_gap = (0..n)
                .map(|q| (coeffs[(i, q)] - sign * coeffs[(j, q)]).powi(2))
                .sum::<f64>()
                .sqrt();
            pairs.push(PairGrouping { i, j, r, flipped, row_gap });

            let rhs = grouping_rhs(r, z.lambda);
            for q in 0..n {
                if z.diag_constrained && (q == i || q == j) {
                    continue;
                }
                // query columns are unit norm, so ‖y‖ = 1
                let lhs = (coeffs[(i, q)] - sign * coeffs[(j, q)]).abs();
                checks += 1;
                if lhs > rhs + GROUPING_TOL {
                    bound_holds = false;
                }
                let ratio = if rhs > 0.0 {
                    lhs / rhs
                } else if lhs <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                if ratio > max_ratio || worst.is_none() {
                    max_ratio = max_ratio.max(ratio);
                    worst = Some(BoundCheck { query: q, i, j, lhs, rhs });
                }
            }
        }
    }
    Ok(GroupingEffectSummary {
        pairs,
        max_ratio,
        worst,
        bound_holds,
        checks,
    })
}

/// Wall-clock seconds per pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub preprocess: f64,
    pub solve: f64,
    pub affinity: f64,
    pub clustering: f64,
    pub metrics: f64,
    /// Solve plus affinity construction: the cost of obtaining the affinity.
    pub affinity_computation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationReport {
    pub n: usize,
    pub k: usize,
    pub labels: Vec<usize>,
    /// Present when ground truth is known.
    pub error_rate: Option<f64>,
    pub aligned_permutation: Option<Vec<usize>>,
    pub block_diag_violation: Option<f64>,
    pub isolated_nodes: Vec<usize>,
    pub eigen_tie: bool,
    pub degenerate_affinity: bool,
    pub wall_times: StageTimes,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{lsr2, Variant};

    fn lab(v: &[usize]) -> Labeling {
        Labeling::from_labels(v.to_vec()).unwrap()
    }

    /// The representation printed for the two-line example: feasible but not
    /// block diagonal.
    fn printed_z() -> Matrix {
        Matrix::from_rows(&[
            &[0.5, 1.0, 1.0, 2.0],
            &[0.25, 0.5, -0.5, -1.0],
            &[1.0, 2.0, 0.5, 1.0],
            &[-0.5, -1.0, 0.25, 0.5],
        ])
        .unwrap()
    }

    #[test]
    fn identical_and_relabeled_predictions() {
        let truth = lab(&[0, 0, 1, 1, 2, 2]);
        assert_eq!(segmentation_error(&truth, &truth).unwrap(), 0.0);
        let swapped = lab(&[2, 2, 0, 0, 1, 1]);
        let a = align_labels(&swapped, &truth).unwrap();
        assert_eq!(a.error_rate, 0.0);
        assert_eq!(a.mapping, vec![1, 2, 0]);
    }

    #[test]
    fn one_flip_in_ten() {
        let truth = lab(&[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let pred = lab(&[0, 0, 0, 0, 1, 1, 1, 1, 1, 1]);
        assert!((segmentation_error(&pred, &truth).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            segmentation_error(&lab(&[0, 1]), &lab(&[0, 1, 1])),
            Err(Error::LengthMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn different_cluster_counts() {
        // a single predicted cluster against two true clusters of 3 and 1
        let pred = Labeling::new(vec![0, 0, 0, 0], 1).unwrap();
        let truth = lab(&[0, 0, 0, 1]);
        assert_eq!(align_labels(&pred, &truth).unwrap().mistakes, 1);
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let k = rng.gen_range(1..=7);
            let cost: Vec<Vec<i64>> = (0..k).map(|_| (0..k).map(|_| rng.gen_range(0..50)).collect()).collect();
            let assign = hungarian(&cost);
            let mut seen = assign.clone();
            seen.sort_unstable();
            assert_eq!(seen, (0..k).collect::<Vec<_>>());
            let total: i64 = assign.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
            let neg: Vec<Vec<i64>> = cost.iter().map(|r| r.iter().map(|c| -c).collect()).collect();
            let best = best_permutation_exhaustive(&neg);
            let opt: i64 = best.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
            assert_eq!(total, opt);
        }
    }

    #[test]
    fn large_k_uses_assignment_and_is_exact() {
        let k = 12;
        let truth: Vec<usize> = (0..120).map(|i| i % k).collect();
        let pred: Vec<usize> = truth.iter().map(|&t| (t * 5 + 3) % k).collect();
        assert_eq!(segmentation_error(&lab(&pred), &lab(&truth)).unwrap(), 0.0);
        let mut noisy = pred.clone();
        noisy[0] = (noisy[0] + 1) % k;
        noisy[50] = (noisy[50] + 4) % k;
        let a = align_labels(&lab(&noisy), &lab(&truth)).unwrap();
        assert_eq!(a.mistakes, 2);
    }

    #[test]
    fn block_violation_basics() {
        let z = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[3.0, 0.0, 0.0], &[0.0, 0.0, -4.0]]).unwrap();
        assert_eq!(block_diag_violation(&z, &[0, 0, 1]).unwrap(), 0.0);
        assert_eq!(block_diag_violation(&Matrix::zeros(3, 3), &[0, 1, 2]).unwrap(), 0.0);
        assert!((block_diag_violation(&z, &[0, 1, 1]).unwrap() - 0.5).abs() < 1e-15);
        assert!(block_diag_violation(&z, &[0, 1]).is_err());
    }

    #[test]
    fn printed_representation_violation() {
        // off-block mass 9 of total 13.5
        let v = block_diag_violation(&printed_z(), &[0, 0, 1, 1]).unwrap();
        assert!((v - 9.0 / 13.5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn violation_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 9;
        let z = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).unwrap();
        let truth: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let zp = z.select_principal(&perm).unwrap();
        let tp: Vec<usize> = perm.iter().map(|&p| truth[p]).collect();
        let a = block_diag_violation(&z, &truth).unwrap();
        let b = block_diag_violation(&zp, &tp).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn l1_passes_all_three() {
        let r = check_ebd(&Criterion::L1, 100, 1);
        assert!(r.permutation_invariance.passed());
        assert!(r.diagonal_dominance.passed());
        assert!(r.additivity.passed());
    }

    #[test]
    fn rank_fails_dominance() {
        let r = check_ebd(&Criterion::Rank, 50, 2);
        assert!(r.permutation_invariance.passed());
        let w = r.diagonal_dominance.witness().expect("rank must fail condition (2)");
        assert_eq!(w.f_value, w.compared_value);
        let (_, _, zd) = diagonal_blocks(&w.z, w.split).unwrap();
        assert!(w.z.abs_sum() - zd.abs_sum() >= EBD_STRICT_MASS);
    }

    #[test]
    fn rank_equality_on_printed_representation() {
        let z = printed_z();
        let (_, _, zd) = diagonal_blocks(&z, 2).unwrap();
        assert_eq!(Criterion::Rank.eval(&z), 2.0);
        assert_eq!(Criterion::Rank.eval(&zd), 2.0);
    }

    #[test]
    fn frobenius_not_additive_but_square_is() {
        let f = check_ebd(&Criterion::Frobenius, 100, 3);
        assert!(f.permutation_invariance.passed());
        assert!(f.diagonal_dominance.passed());
        assert!(!f.additivity.passed());
        let f2 = check_ebd(&Criterion::FrobeniusSquared, 100, 3);
        assert!(f2.additivity.passed());
    }

    #[test]
    fn entrywise_power_additivity_needs_unit_outer_exponent() {
        let s1 = check_ebd(&Criterion::EntrywisePower { p: 1.5, s: 1.0 }, 60, 4);
        assert!(s1.diagonal_dominance.passed() && s1.additivity.passed());
        let s_half = check_ebd(&Criterion::EntrywisePower { p: 1.5, s: 0.5 }, 60, 4);
        assert!(s_half.diagonal_dominance.passed());
        assert!(!s_half.additivity.passed());
    }

    #[test]
    fn nuclear_norm_ties_on_rank_one_psd() {
        // dominance holds, but not strictly, for this matrix
        let z = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        let (_, _, zd) = diagonal_blocks(&z, 1).unwrap();
        assert!((Criterion::Nuclear.eval(&z) - Criterion::Nuclear.eval(&zd)).abs() < 1e-12);
    }

    #[test]
    fn zero_trials_not_applicable() {
        let r = check_ebd(&Criterion::L1, 0, 0);
        assert_eq!(r.additivity, ConditionOutcome::NotApplicable);
    }

    #[test]
    fn closure_criterion_and_broken_permutation() {
        // first-column mass is not permutation invariant
        let f = FnCriterion {
            name: "first_column".into(),
            f: |z: &Matrix| z.column(0).iter().map(|v| v.abs()).sum(),
            nonnegative: false,
        };
        let r = check_ebd(&f, 50, 5);
        assert!(!r.permutation_invariance.passed());
        assert!(r.permutation_invariance.witness().unwrap().permutation.is_some());
    }

    #[test]
    fn witness_serializes() {
        let r = check_ebd(&Criterion::Rank, 10, 6);
        let text = toml::to_string(&r).unwrap();
        assert!(text.contains("status = \"fail\""));
    }

    fn unit(m: &Matrix) -> DataMatrix {
        DataMatrix::new(m.clone()).normalized().unwrap()
    }

    #[test]
    fn grouping_stats_duplicates_and_bound() {
        let x = unit(
            &Matrix::from_rows(&[&[1.0, 1.0, 0.3, -0.2], &[0.5, 0.5, 1.0, 0.9], &[0.1, 0.1, -0.4, 1.0]]).unwrap(),
        );
        let z = lsr2(&x.x, 0.1).unwrap();
        let s = grouping_effect_stats(&z, &x).unwrap();
        let dup = s.pairs.iter().find(|p| p.i == 0 && p.j == 1).unwrap();
        assert!(dup.row_gap <= 1e-10);
        assert!((dup.r - 1.0).abs() < 1e-12);
        assert!(s.bound_holds);
        assert!(s.max_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn grouping_stats_anticorrelated_pair_flips() {
        let x = unit(&Matrix::from_rows(&[&[1.0, -1.0, 0.0], &[0.0, 0.0, 1.0]]).unwrap());
        let z = lsr2(&x.x, 0.3).unwrap();
        let s = grouping_effect_stats(&z, &x).unwrap();
        let pair = s.pairs.iter().find(|p| p.i == 0 && p.j == 1).unwrap();
        assert!(pair.flipped);
        assert!((pair.r - 1.0).abs() < 1e-12);
        assert!(pair.row_gap <= 1e-10);
        assert!(s.bound_holds);
    }

    #[test]
    fn grouping_stats_high_correlation_value() {
        let r: f64 = 0.99;
        let x = DataMatrix::new(Matrix::from_rows(&[&[1.0, r], &[0.0, (1.0 - r * r).sqrt()]]).unwrap());
        let z = lsr2(&x.x, 0.1).unwrap();
        let s = grouping_effect_stats(&z, &x).unwrap();
        let w = s.worst.unwrap();
        assert!((w.rhs - 10.0 * 0.02f64.sqrt()).abs() < 1e-9);
        assert!(w.lhs <= w.rhs);
    }

    #[test]
    fn grouping_stats_errors() {
        let x = DataMatrix::new(Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 1.0]]).unwrap());
        let z = Coefficients {
            z: Matrix::zeros(2, 2),
            lambda: 0.1,
            variant: Variant::Lsr2,
            diag_constrained: false,
        };
        assert!(matches!(grouping_effect_stats(&z, &x), Err(Error::UnnormalizedColumn { column: 0, .. })));
        let x = DataMatrix::new(Matrix::identity(2));
        let z0 = Coefficients { lambda: 0.0, ..z };
        assert!(matches!(grouping_effect_stats(&z0, &x), Err(Error::NonPositiveLambda(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn relabel(labels: &[usize], perm: &[usize]) -> Vec<usize> {
            labels.iter().map(|&l| perm[l]).collect()
        }

        proptest! {
            #[test]
            fn error_symmetric_under_relabeling(
                truth in proptest::collection::vec(0usize..4, 1..40),
                noise in proptest::collection::vec(0usize..4, 1..40),
                seed in any::<u64>(),
            ) {
                let n = truth.len().min(noise.len());
                let truth = Labeling::new(truth[..n].to_vec(), 4).unwrap();
                let pred = Labeling::new(noise[..n].to_vec(), 4).unwrap();
                let mut perm: Vec<usize> = (0..4).collect();
                perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let base = segmentation_error(&pred, &truth).unwrap();
                let re_pred = Labeling::new(relabel(pred.labels(), &perm), 4).unwrap();
                let re_truth = Labeling::new(relabel(truth.labels(), &perm), 4).unwrap();
                prop_assert_eq!(segmentation_error(&re_pred, &truth).unwrap(), base);
                prop_assert_eq!(segmentation_error(&pred, &re_truth).unwrap(), base);
                prop_assert_eq!(segmentation_error(&truth, &pred).unwrap(), base);
                let same = (0..n).all(|i| (0..n).all(|j| (pred.labels()[i] == pred.labels()[j]) == (truth.labels()[i] == truth.labels()[j])));
                prop_assert_eq!(base == 0.0, same);
            }
        }
    }
}
