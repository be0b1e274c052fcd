//! Synthetic unions of linear subspaces.
//!
//! A [`SubspaceSpec`] describes k subspaces of an ambient space, how many
//! samples to draw from each, whether the subspaces are merely independent or
//! mutually orthogonal, and how the samples are perturbed. [`generate`] turns a
//! spec into a labelled [`DataMatrix`] plus the [`BasisSet`] it was drawn from.
//! Every draw comes from a ChaCha stream seeded by `spec.seed`, so identical
//! specs produce bit-identical data.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{numeric_rank, Matrix, DEFAULT_RANK_TOL};
use crate::spectral::Labeling;

/// Tolerance for orthonormality and cross-block orthogonality checks.
pub const ORTHO_TOL: f64 = 1e-10;

/// Tolerance used when checking that columns are unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-10;

const MAX_BASIS_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubspaceMode {
    /// Random bases whose sum is direct.
    #[default]
    Independent,
    /// A random orthonormal frame partitioned into blocks.
    Orthogonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceSpec {
    pub ambient_dim: usize,
    pub subspace_dims: Vec<usize>,
    pub samples_per_subspace: Vec<usize>,
    #[serde(default)]
    pub mode: SubspaceMode,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Weight in `[0, 1)` pulling each subspace's samples toward a shared
    /// direction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
    #[serde(default)]
    pub normalize_columns: bool,
    #[serde(default)]
    pub seed: u64,
}

impl SubspaceSpec {
    /// `k` subspaces of equal dimension with `samples` points each.
    pub fn uniform(k: usize, dim: usize, ambient_dim: usize, samples: usize, seed: u64) -> Self {
        SubspaceSpec {
            ambient_dim,
            subspace_dims: vec![dim; k],
            samples_per_subspace: vec![samples; k],
            mode: SubspaceMode::Independent,
            noise_sigma: 0.0,
            correlation: None,
            normalize_columns: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let infeasible = |msg: String| Err(Error::SpecInfeasible(msg));
        if self.subspace_dims.is_empty() {
            return infeasible("at least one subspace is required".into());
        }
        if self.subspace_dims.len() != self.samples_per_subspace.len() {
            return infeasible(format!(
                "{} subspace dimensions but {} sample counts",
                self.subspace_dims.len(),
                self.samples_per_subspace.len()
            ));
        }
        if let Some(i) = self.subspace_dims.iter().position(|&d| d == 0) {
            return infeasible(format!("subspace {i} has dimension 0"));
        }
        if let Some(i) = self.samples_per_subspace.iter().position(|&n| n == 0) {
            return infeasible(format!("subspace {i} has no samples"));
        }
        let total: usize = self.subspace_dims.iter().sum();
        if total > self.ambient_dim {
            return infeasible(format!(
                "subspace dimensions sum to {total}, exceeding ambient dimension {}",
                self.ambient_dim
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return infeasible(format!("noise_sigma must be a nonnegative number, got {}", self.noise_sigma));
        }
        if let Some(c) = self.correlation {
            if !(0.0..1.0).contains(&c) {
                return infeasible(format!("correlation must lie in [0, 1), got {c}"));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.subspace_dims.len()
    }

    pub fn total_samples(&self) -> usize {
        self.samples_per_subspace.iter().sum()
    }

    /// Ground-truth label of every generated column.
    pub fn labels(&self) -> Vec<usize> {
        self.samples_per_subspace
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(i, n))
            .collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: SubspaceSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// A d×n sample matrix, columns are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    pub x: Matrix,
    pub labels: Option<Vec<usize>>,
    pub column_norms_unit: bool,
}

impl DataMatrix {
    pub fn new(x: Matrix) -> Self {
        DataMatrix {
            x,
            labels: None,
            column_norms_unit: false,
        }
    }

    pub fn with_labels(x: Matrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != x.cols() {
            return Err(Error::LengthMismatch {
                left: x.cols(),
                right: labels.len(),
            });
        }
        Ok(DataMatrix {
            x,
            labels: Some(labels),
            column_norms_unit: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.rows()
    }

    pub fn len(&self) -> usize {
        self.x.cols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labeling(&self) -> Option<Result<Labeling>> {
        self.labels.as_ref().map(|l| Labeling::from_labels(l.clone()))
    }

    /// Copy with every column scaled to unit ℓ² norm.
    pub fn normalized(&self) -> Result<DataMatrix> {
        let norms: Vec<f64> = (0..self.len()).map(|j| column_norm(self.x.column(j))).collect();
        if let Some(j) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::UnnormalizedColumn { column: j, norm: 0.0 });
        }
        Ok(DataMatrix {
            x: Matrix::from_fn(self.dim(), self.len(), |i, j| self.x[(i, j)] / norms[j])?,
            labels: self.labels.clone(),
            column_norms_unit: true,
        })
    }

    /// Fails with the first column whose norm is not 1 within `tol`.
    pub fn check_unit_columns(&self, tol: f64) -> Result<()> {
        check_unit_columns(&self.x, tol)
    }
}

pub(crate) fn column_norm(col: &[f64]) -> f64 {
    col.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn check_unit_columns(x: &Matrix, tol: f64) -> Result<()> {
    for j in 0..x.cols() {
        let norm = column_norm(x.column(j));
        if (norm - 1.0).abs() > tol {
            return Err(Error::UnnormalizedColumn { column: j, norm });
        }
    }
    Ok(())
}

/// Orthonormal bases, one d×dᵢ block per subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet {
    pub bases: Vec<Matrix>,
}

impl BasisSet {
    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(Matrix::cols).collect()
    }

    /// `[B₁, …, B_k]` as one d×Σdᵢ matrix.
    pub fn concatenated(&self) -> Result<Matrix> {
        let cols: Vec<Vec<f64>> = self
            .bases
            .iter()
            .flat_map(|b| (0..b.cols()).map(move |j| b.column(j).to_vec()))
            .collect();
        Matrix::from_columns(&cols)
    }
}

/// True iff the subspaces' sum is direct (rank of `[B₁, …, B_k]` is Σdᵢ).
pub fn is_independent(bases: &BasisSet) -> bool {
    let total: usize = bases.dims().iter().sum();
    match bases.concatenated().and_then(|b| numeric_rank(&b, DEFAULT_RANK_TOL)) {
        Ok(rank) => rank == total,
        Err(_) => false,
    }
}

/// True iff every cross-block inner product is at most [`ORTHO_TOL`].
pub fn is_orthogonal(bases: &BasisSet) -> bool {
    max_cross_inner_product(bases) <= ORTHO_TOL
}

pub fn max_cross_inner_product(bases: &BasisSet) -> f64 {
    let mut worst = 0.0f64;
    for (a, ba) in bases.bases.iter().enumerate() {
        for bb in &bases.bases[a + 1..] {
            for p in 0..ba.cols() {
                for q in 0..bb.cols() {
                    let dot: f64 = ba.column(p).iter().zip(bb.column(q)).map(|(x, y)| x * y).sum();
                    worst = worst.max(dot.abs());
                }
            }
        }
    }
    worst
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Mat<f64> {
    Mat::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn orthonormalize(m: &Mat<f64>) -> Mat<f64> {
    m.qr().compute_thin_Q()
}

fn draw_bases(spec: &SubspaceSpec, rng: &mut ChaCha8Rng) -> Result<BasisSet> {
    let d = spec.ambient_dim;
    let split = |frame: &Mat<f64>| -> Result<BasisSet> {
        let mut offset = 0;
        let mut bases = Vec::with_capacity(spec.k());
        for &di in &spec.subspace_dims {
            bases.push(Matrix::from_fn(d, di, |i, j| frame[(i, offset + j)])?);
            offset += di;
        }
        Ok(BasisSet { bases })
    };

    let total: usize = spec.subspace_dims.iter().sum();
    match spec.mode {
        SubspaceMode::Orthogonal => split(&orthonormalize(&gaussian(d, total, 1.0, rng))),
        SubspaceMode::Independent => {
            for _ in 0..MAX_BASIS_ATTEMPTS {
                let blocks: Vec<Mat<f64>> = spec
                    .subspace_dims
                    .iter()
                    .map(|&di| orthonormalize(&gaussian(d, di, 1.0, rng)))
                    .collect();
                let mut frame = Mat::zeros(d, total);
                let mut offset = 0;
                for b in &blocks {
                    frame.as_mut().subcols_mut(offset, b.ncols()).copy_from(b);
                    offset += b.ncols();
                }
                let set = split(&frame)?;
                if is_independent(&set) {
                    return Ok(set);
                }
            }
            Err(Error::SpecInfeasible(format!(
                "could not draw independent bases in {MAX_BASIS_ATTEMPTS} attempts"
            )))
        }
    }
}

/// Coefficient draws for every subspace, dᵢ×nᵢ each.
fn draw_coefficients(spec: &SubspaceSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Matrix>> {
    spec.subspace_dims
        .iter()
        .zip(&spec.samples_per_subspace)
        .map(|(&di, &ni)| {
            let scale = 1.0 / (di as f64).sqrt();
            let mut coeffs = gaussian(di, ni, scale, rng);
            if let Some(rho) = spec.correlation {
                let shared = gaussian(di, 1, 1.0, rng);
                let norm = shared.norm_l2();
                for j in 0..ni {
                    for i in 0..di {
                        coeffs[(i, j)] = rho * shared[(i, 0)] / norm + (1.0 - rho) * coeffs[(i, j)];
                    }
                }
            }
            Matrix::from_mat(coeffs)
        })
        .collect()
}

/// Draws a dataset from `spec`.
pub fn generate(spec: &SubspaceSpec) -> Result<(DataMatrix, BasisSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bases = draw_bases(spec, &mut rng)?;
    let coefficients = draw_coefficients(spec, &mut rng)?;
    assemble(spec, bases, &coefficients, &mut rng)
}

/// Like [`generate`] but with caller-supplied dᵢ×nᵢ coefficient blocks.
/// Bases and noise still come from the spec's seed.
pub fn generate_with_coefficients(
    spec: &SubspaceSpec,
    coefficients: &[Matrix],
) -> Result<(DataMatrix, BasisSet)> {
    spec.validate()?;
    if coefficients.len() != spec.k() {
        return Err(Error::SpecInfeasible(format!(
            "{} coefficient blocks for {} subspaces",
            coefficients.len(),
            spec.k()
        )));
    }
    for (i, c) in coefficients.iter().enumerate() {
        if c.rows() != spec.subspace_dims[i] || c.cols() != spec.samples_per_subspace[i] {
            return Err(Error::SpecInfeasible(format!(
                "coefficient block {i} is {}x{}, expected {}x{}",
                c.rows(),
                c.cols(),
                spec.subspace_dims[i],
                spec.samples_per_subspace[i]
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bases = draw_bases(spec, &mut rng)?;
    assemble(spec, bases, coefficients, &mut rng)
}

fn assemble(
    spec: &SubspaceSpec,
    bases: BasisSet,
    coefficients: &[Matrix],
    rng: &mut ChaCha8Rng,
) -> Result<(DataMatrix, BasisSet)> {
    let d = spec.ambient_dim;
    let mut columns = Vec::with_capacity(spec.total_samples());
    for (basis, coeffs) in bases.bases.iter().zip(coefficients) {
        let samples = basis.matmul(coeffs)?;
        for j in 0..samples.cols() {
            columns.push(samples.column(j).to_vec());
        }
    }
    if spec.noise_sigma > 0.0 {
        for col in &mut columns {
            for v in col.iter_mut() {
                *v += spec.noise_sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    debug_assert!(columns.iter().all(|c| c.len() == d));
    let data = DataMatrix::with_labels(Matrix::from_columns(&columns)?, spec.labels())?;
    let data = if spec.normalize_columns { data.normalized()? } else { data };
    Ok((data, bases))
}
