//! Affinity construction and Normalized-Cuts spectral clustering.
//!
//! The clustering follows the Ng–Jordan–Weiss recipe: symmetric normalized
//! Laplacian, the k eigenvectors of smallest eigenvalue, unit-normalized
//! embedding rows, then seeded k-means++ with restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{sym_eigen, Matrix};
use crate::solvers::Coefficients;

/// Eigenvalue gap below which the k-th and (k+1)-th eigenvalues count as tied.
pub const EIGEN_TIE_TOL: f64 = 1e-12;

pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_SEED: u64 = 0;
pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_REL_TOL: f64 = 1e-9;

/// Cluster assignment of n points into k clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Labeling {
    labels: Vec<usize>,
    k: usize,
}

impl Labeling {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidLabels("labeling is empty".into()));
        }
        if let Some(i) = labels.iter().position(|&l| l >= k) {
            return Err(Error::InvalidLabels(format!("label {} at index {i} is not below k={k}", labels[i])));
        }
        Ok(Labeling { labels, k })
    }

    /// Infers `k` as one more than the largest label.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        Self::new(labels, k)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<usize> {
        self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Symmetric nonnegative similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinity {
    w: Matrix,
}

impl Affinity {
    /// Accepts `w` only if it is square, exactly symmetric and nonnegative.
    pub fn new(w: Matrix) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch {
                op: "Affinity::new",
                detail: format!("{}x{} is not square", w.rows(), w.cols()),
            });
        }
        let asym = w.asymmetry().unwrap_or(0.0);
        if asym != 0.0 {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let n = w.rows();
        for j in 0..n {
            if let Some(i) = w.column(j).iter().position(|&v| v < 0.0) {
                return Err(Error::InvalidAffinity(format!("negative affinity at ({i}, {j})")));
            }
        }
        Ok(Affinity { w })
    }

    /// `(|Z| + |Zᵀ|) / 2`.
    pub fn from_coefficient_matrix(z: &Matrix) -> Result<Self> {
        if !z.is_square() {
            return Err(Error::DimensionMismatch {
                op: "build_affinity",
                detail: format!("{}x{} is not square", z.rows(), z.cols()),
            });
        }
        let w = Matrix::from_fn(z.rows(), z.cols(), |i, j| (z[(i, j)].abs() + z[(j, i)].abs()) / 2.0)?;
        Ok(Affinity { w })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.rows()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n()).map(|j| self.w.column(j).iter().sum()).collect()
    }
}

pub fn build_affinity(z: &Coefficients) -> Affinity {
    Affinity::from_coefficient_matrix(&z.z).expect("coefficient matrices are square and finite")
}

/// `I − D^{-1/2} W D^{-1/2}`, with `D^{-1/2}` set to 0 on zero-degree nodes.
pub fn normalized_laplacian(w: &Affinity) -> Matrix {
    let inv_sqrt: Vec<f64> = w
        .degrees()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = w.n();
    let m = w.matrix();
    Matrix::from_fn(n, n, |i, j| {
        let off = inv_sqrt[i] * m[(i, j)] * inv_sqrt[j];
        if i == j {
            1.0 - off
        } else {
            -off
        }
    })
    .expect("laplacian of a finite affinity is finite")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcutOptions {
    pub seed: u64,
    pub restarts: usize,
}

impl Default for NcutOptions {
    fn default() -> Self {
        NcutOptions {
            seed: DEFAULT_SEED,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcutResult {
    pub labeling: Labeling,
    /// Zero-degree nodes, assigned to the largest cluster after clustering.
    pub isolated: Vec<usize>,
    /// Set when the k-th and (k+1)-th Laplacian eigenvalues are tied.
    pub eigen_tie: bool,
    /// Set when the affinity carried no edges and labels fell back to
    /// contiguous index blocks.
    pub degenerate: bool,
    /// The smallest Laplacian eigenvalues (up to k+1 of them).
    pub leading_eigenvalues: Vec<f64>,
}

fn index_blocks(n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|i| i * k / n).collect()
}

/// Spectral clustering of `w` into `k` groups.
pub fn normalized_cuts(w: &Affinity, k: usize, opts: &NcutOptions) -> Result<NcutResult> {
    let n = w.n();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    let degrees = w.degrees();
    let (active, isolated): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| degrees[i] > 0.0);

    if k == 1 {
        return Ok(NcutResult {
            labeling: Labeling::new(vec![0; n], 1)?,
            isolated,
            eigen_tie: false,
            degenerate: false,
            leading_eigenvalues: Vec::new(),
        });
    }
    if active.is_empty() {
        return Ok(NcutResult {
            labeling: Labeling::new(index_blocks(n, k), k)?,
            isolated,
            eigen_tie: false,
            degenerate: true,
            leading_eigenvalues: Vec::new(),
        });
    }

    let sub = Affinity {
        w: w.matrix().select_principal(&active)?,
    };
    let m = active.len();
    let k_eff = k.min(m);
    let eig = sym_eigen(&normalized_laplacian(&sub))?;
    let eigen_tie = k_eff < m && (eig.values[k_eff] - eig.values[k_eff - 1]) < EIGEN_TIE_TOL;

    let embedding = Matrix::from_fn(m, k_eff, |i, j| eig.vectors[(i, j)])?;
    let embedding = row_normalized(&embedding)?;
    let clustered = kmeans(&embedding, k_eff, opts.seed, opts.restarts)?;

    let mut labels = vec![0usize; n];
    for (pos, &node) in active.iter().enumerate() {
        labels[node] = clustered.labeling.labels()[pos];
    }
    // Surplus clusters (fewer connected nodes than k) go to isolated nodes
    // one at a time; everything else isolated joins the largest cluster.
    let mut next_free = k_eff;
    let sizes = clustered.labeling.cluster_sizes();
    let largest = (0..sizes.len()).max_by(|&a, &b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a))).unwrap_or(0);
    for &node in &isolated {
        if next_free < k {
            labels[node] = next_free;
            next_free += 1;
        } else {
            labels[node] = largest;
        }
    }

    Ok(NcutResult {
        labeling: Labeling::new(labels, k)?,
        isolated,
        eigen_tie,
        degenerate: false,
        leading_eigenvalues: eig.values.iter().take(k_eff + 1).copied().collect(),
    })
}

fn row_normalized(m: &Matrix) -> Result<Matrix> {
    let norms: Vec<f64> = (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt())
        .collect();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| if norms[i] > 0.0 { m[(i, j)] / norms[i] } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labeling: Labeling,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squared distances.
    pub objective: f64,
    /// Index of the winning restart.
    pub restart: usize,
    /// Number of empty clusters re-seeded in the winning run.
    pub reseeded: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..n)].clone());
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
    }
    centroids
}

struct LloydRun {
    labels: Vec<usize>,
    centroids: Vec<Vec<f64>>,
    objective: f64,
    reseeded: usize,
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> LloydRun {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![0usize; n];
    let mut objective = f64::INFINITY;
    let mut reseeded = 0;

    for _ in 0..KMEANS_MAX_ITER {
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            labels[i] = c;
            dists[i] = d;
        }

        let mut sizes = vec![0usize; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            // farthest point from its centroid, taken from a cluster that can spare it
            let donor = (0..n)
                .filter(|&i| sizes[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                sizes[labels[i]] -= 1;
                labels[i] = c;
                sizes[c] = 1;
                dists[i] = 0.0;
                reseeded += 1;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &l) in points.iter().zip(&labels) {
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }

        let next: f64 = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centroids[l])).sum();
        let converged = next == 0.0 || (objective - next).abs() <= KMEANS_REL_TOL * objective;
        objective = next;
        if converged {
            break;
        }
    }
    LloydRun {
        labels,
        centroids,
        objective,
        reseeded,
    }
}

/// Seeded k-means++ with Lloyd refinement; rows of `points` are the samples.
///
/// The best of `restarts` runs (at least one) by within-cluster sum of squares
/// wins; ties go to the earliest restart.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, n });
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..points.cols()).map(|j| points[(i, j)]).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best: Option<(usize, LloydRun)> = None;
    for restart in 0..restarts.max(1) {
        let init = plus_plus_init(&rows, k, &mut rng);
        let run = lloyd(&rows, init);
        if best.as_ref().is_none_or(|(_, b)| run.objective < b.objective) {
            best = Some((restart, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    Ok(KMeansResult {
        labeling: Labeling::new(run.labels, k)?,
        centroids: run.centroids,
        objective: run.objective,
        restart,
        reseeded: run.reseeded,
    })
}
