//! CSV interchange and preprocessing.
//!
//! A dataset file holds one matrix row per line and one sample per column.
//! An optional final line starting with `#labels` carries one integer label
//! per column. Blank lines and other lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::DataMatrix;
use crate::error::{Error, Result};
use crate::matrix::{thin_svd, Matrix};

pub const LABELS_MARKER: &str = "#labels";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    CsvMatrix,
    CsvWithLabels,
}

/// Where a dataset lives and how to preprocess it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub path: PathBuf,
    #[serde(default)]
    pub format: DatasetFormat,
    #[serde(default)]
    pub expected_k: Option<usize>,
    #[serde(default)]
    pub pca_dim: Option<usize>,
    /// Subtract the column mean before PCA.
    #[serde(default)]
    pub center: bool,
    /// Scale columns to unit norm after PCA.
    #[serde(default)]
    pub normalize_columns: bool,
}

impl DatasetManifest {
    pub fn new(path: impl Into<PathBuf>, format: DatasetFormat) -> Self {
        DatasetManifest {
            path: path.into(),
            format,
            expected_k: None,
            pca_dim: None,
            center: false,
            normalize_columns: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses dataset text; `line` and `col` in errors are 1-based.
pub fn parse_csv(text: &str) -> Result<DataMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Option<Vec<usize>> = None;
    let mut width = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if labels.is_some() {
            return Err(Error::Parse {
                line: line_no,
                col: 1,
                message: "content after the label row".into(),
            });
        }
        if let Some(rest) = line.strip_prefix(LABELS_MARKER) {
            let fields = rest.trim_start_matches([',', ' ']);
            let parsed = fields
                .split(',')
                .enumerate()
                .map(|(c, f)| {
                    f.trim().parse::<usize>().map_err(|e| Error::Parse {
                        line: line_no,
                        col: c + 1,
                        message: format!("label {:?}: {e}", f.trim()),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            labels = Some(parsed);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        for (c, field) in line.split(',').enumerate() {
            let field = field.trim();
            let value: f64 = field.parse().map_err(|e| Error::Parse {
                line: line_no,
                col: c + 1,
                message: format!("{field:?}: {e}"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFiniteEntry { line: line_no, col: c + 1 });
            }
            row.push(value);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::RaggedRows {
                    line: line_no,
                    expected: w,
                    found: row.len(),
                })
            }
            _ => {}
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            col: 1,
            message: "no numeric rows".into(),
        });
    }
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let x = Matrix::from_rows(&refs)?;
    match labels {
        Some(l) => DataMatrix::with_labels(x, l),
        None => Ok(DataMatrix::new(x)),
    }
}

/// Reads the manifest's file as-is, without preprocessing.
pub fn load_csv(manifest: &DatasetManifest) -> Result<DataMatrix> {
    let text = fs::read_to_string(&manifest.path)?;
    let data = parse_csv(&text)?;
    if manifest.format == DatasetFormat::CsvWithLabels && data.labels.is_none() {
        return Err(Error::MissingLabels);
    }
    Ok(data)
}

/// Loads the dataset and applies the manifest's PCA and normalization.
pub fn load_dataset(manifest: &DatasetManifest) -> Result<DataMatrix> {
    let data = load_csv(manifest)?;
    if let (Some(k), Some(labels)) = (manifest.expected_k, &data.labels) {
        let mut distinct = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() != k {
            return Err(Error::InvalidLabels(format!(
                "expected {k} clusters, label row has {}",
                distinct.len()
            )));
        }
    }
    let data = match manifest.pca_dim {
        Some(t) => pca(&data, t, manifest.center)?.data,
        None => data,
    };
    if manifest.normalize_columns {
        data.normalized()
    } else {
        Ok(data)
    }
}

/// Serializes with 17 significant digits so parsing recovers every value.
pub fn format_csv(data: &DataMatrix) -> String {
    let mut out = String::new();
    for i in 0..data.dim() {
        for j in 0..data.len() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{:.16e}", data.x[(i, j)]).expect("writing to a String");
        }
        out.push('\n');
    }
    if let Some(labels) = &data.labels {
        out.push_str(LABELS_MARKER);
        for l in labels {
            write!(out, ",{l}").expect("writing to a String");
        }
        out.push('\n');
    }
    out
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name")))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

pub fn write_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    write_atomic(path, format_csv(data).as_bytes())
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    write_csv(path, &DataMatrix::new(m.clone()))
}

/// Outcome of [`pca`].
#[derive(Debug, Clone)]
pub struct PcaProjection {
    pub data: DataMatrix,
    /// d×t orthonormal basis of the retained directions.
    pub basis: Matrix,
    /// Share of `‖X‖_F²` carried by the retained directions.
    pub captured_energy: f64,
    pub mean: Option<Vec<f64>>,
}

/// Projects onto the top `target_dim` left singular vectors; labels are kept.
pub fn pca(x: &DataMatrix, target_dim: usize, center: bool) -> Result<PcaProjection> {
    let (d, n) = (x.dim(), x.len());
    if target_dim == 0 || target_dim > d.min(n) {
        return Err(Error::DimensionError(format!(
            "pca target {target_dim} outside 1..={} for a {d}x{n} matrix",
            d.min(n)
        )));
    }
    let mean = center.then(|| {
        (0..d)
            .map(|i| (0..n).map(|j| x.x[(i, j)]).sum::<f64>() / n as f64)
            .collect::<Vec<_>>()
    });
    let src = match &mean {
        Some(m) => Matrix::from_fn(d, n, |i, j| x.x[(i, j)] - m[i])?,
        None => x.x.clone(),
    };
    let svd = thin_svd(&src)?;
    let basis = Matrix::from_fn(d, target_dim, |i, k| svd.u[(i, k)])?;
    let projected = basis.transpose().matmul(&src)?;
    let total: f64 = svd.s.iter().map(|s| s * s).sum();
    let kept: f64 = svd.s[..target_dim].iter().map(|s| s * s).sum();
    let captured_energy = if total > 0.0 { kept / total } else { 1.0 };
    Ok(PcaProjection {
        data: DataMatrix {
            x: projected,
            labels: x.labels.clone(),
            column_norms_unit: false,
        },
        basis,
        captured_energy,
        mean,
    })
}

/// [`pca`] without centering.
pub fn pca_project(x: &DataMatrix, target_dim: usize) -> Result<DataMatrix> {
    Ok(pca(x, target_dim, false)?.data)
}

/// Subspace dimension for face data: six per class.
pub fn face_pca_dim(k: usize) -> usize {
    6 * k
}
