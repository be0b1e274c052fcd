//! Preprocess, solve, build the affinity, cluster and score in one call.

use std::time::Instant;

use crate::datagen::DataMatrix;
use crate::error::{Error, Result};
use crate::ingest::pca;
use crate::matrix::Matrix;
use crate::metrics::{align_labels, block_diag_violation, SegmentationReport, StageTimes};
use crate::solvers::{lsr1, lsr2, lsr_constrained_with, Coefficients, ConstrainedOptions, Variant};
use crate::spectral::{build_affinity, normalized_cuts, Affinity, Labeling, NcutOptions, NcutResult};

pub const DEFAULT_LAMBDA: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOptions {
    pub solver: Variant,
    pub lambda: f64,
    /// Falls back to the number of distinct ground-truth labels.
    pub k: Option<usize>,
    pub pca_dim: Option<usize>,
    pub center: bool,
    pub normalize_columns: bool,
    /// Forces `diag(Z) = 0` for the noise-free solver.
    pub zero_diag: bool,
    pub constrained: ConstrainedOptions,
    pub ncut: NcutOptions,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            solver: Variant::Lsr1,
            lambda: DEFAULT_LAMBDA,
            k: None,
            pca_dim: None,
            center: false,
            normalize_columns: false,
            zero_diag: false,
            constrained: ConstrainedOptions::default(),
            ncut: NcutOptions::default(),
        }
    }
}

/// Runs the configured solver on `x`.
pub fn solve(x: &Matrix, opts: &SegmentOptions) -> Result<Coefficients> {
    match opts.solver {
        Variant::ConstrainedNoiseFree => lsr_constrained_with(x, opts.zero_diag, &opts.constrained),
        Variant::Lsr1 => lsr1(x, opts.lambda),
        Variant::Lsr2 => lsr2(x, opts.lambda),
    }
}

/// Applies PCA and column normalization as configured.
pub fn preprocess(data: &DataMatrix, opts: &SegmentOptions) -> Result<DataMatrix> {
    let projected = match opts.pca_dim {
        Some(t) => pca(data, t, opts.center)?.data,
        None => data.clone(),
    };
    if opts.normalize_columns {
        projected.normalized()
    } else {
        Ok(projected)
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub data: DataMatrix,
    pub coefficients: Coefficients,
    pub affinity: Affinity,
    pub ncut: NcutResult,
    pub report: SegmentationReport,
}

impl Segmentation {
    pub fn labeling(&self) -> &Labeling {
        &self.ncut.labeling
    }
}

fn distinct(labels: &[usize]) -> usize {
    let mut l = labels.to_vec();
    l.sort_unstable();
    l.dedup();
    l.len()
}

/// Full segmentation of `data`; scored when `data` carries labels.
pub fn segment(data: &DataMatrix, opts: &SegmentOptions) -> Result<Segmentation> {
    let start = Instant::now();
    let k = match (opts.k, &data.labels) {
        (Some(k), _) => k,
        (None, Some(labels)) => distinct(labels),
        (None, None) => return Err(Error::Config("cluster count unknown: pass k or labeled data".into())),
    };
    if k == 0 || k > data.len() {
        return Err(Error::InvalidClusterCount { k, n: data.len() });
    }

    let t = Instant::now();
    let data = preprocess(data, opts)?;
    let preprocess_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let coefficients = solve(&data.x, opts)?;
    let solve_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let affinity = build_affinity(&coefficients);
    let affinity_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ncut = normalized_cuts(&affinity, k, &opts.ncut)?;
    let clustering_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (error_rate, aligned_permutation, violation) = match &data.labels {
        Some(truth) => {
            let alignment = align_labels(&ncut.labeling, &Labeling::from_labels(truth.clone())?)?;
            let violation = block_diag_violation(&coefficients.z, truth)?;
            (Some(alignment.error_rate), Some(alignment.mapping), Some(violation))
        }
        None => (None, None, None),
    };
    let metrics_s = t.elapsed().as_secs_f64();

    let report = SegmentationReport {
        n: data.len(),
        k,
        labels: ncut.labeling.labels().to_vec(),
        error_rate,
        aligned_permutation,
        block_diag_violation: violation,
        isolated_nodes: ncut.isolated.clone(),
        eigen_tie: ncut.eigen_tie,
        degenerate_affinity: ncut.degenerate,
        wall_times: StageTimes {
            preprocess: preprocess_s,
            solve: solve_s,
            affinity: affinity_s,
            clustering: clustering_s,
            metrics: metrics_s,
            affinity_computation: solve_s + affinity_s,
            total: start.elapsed().as_secs_f64(),
        },
    };
    Ok(Segmentation {
        data,
        coefficients,
        affinity,
        ncut,
        report,
    })
}
