//! One function per subcommand. Each writes its results (and the resolved
//! config) under the output directory when one is configured.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lsr_core::datagen::{generate, SubspaceMode, SubspaceSpec};
use lsr_core::ingest::{load_csv, write_atomic, write_csv, write_matrix_csv};
use lsr_core::matrix::{solve_spd, Matrix};
use lsr_core::metrics::{block_diag_violation, check_ebd, Criterion, MatrixCriterion};
use lsr_core::pipeline::{preprocess, segment, solve};
use lsr_core::solvers::{column_oracle_ridge, grouping_bound_report, lsr1, lsr2, lsr_constrained_with, Coefficients};
use lsr_core::{DataMatrix, DatasetFormat, DatasetManifest, SegmentationReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{RunConfig, RESOLVED_CONFIG_FILE};
use crate::CliError;

pub const REPORT_FILE: &str = "report.json";
pub const CHECK_FILE: &str = "check.json";
pub const BENCH_FILE: &str = "bench.csv";
pub const DATA_FILE: &str = "data.csv";
pub const SPEC_FILE: &str = "spec.toml";
pub const Z_FILE: &str = "z.csv";

fn output_dir(cfg: &RunConfig) -> Result<Option<&Path>, CliError> {
    match &cfg.output {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(lsr_core::Error::from)?;
            Ok(Some(dir.as_path()))
        }
        None => Ok(None),
    }
}

fn require_output(cfg: &RunConfig) -> Result<&Path, CliError> {
    output_dir(cfg)?.ok_or_else(|| CliError::Config(format!("{:?} needs --output", cfg.command)))
}

fn write_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    write_atomic(&dir.join(RESOLVED_CONFIG_FILE), cfg.to_toml_string()?.as_bytes())?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Config(e.to_string()))?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn load_input(cfg: &RunConfig) -> Result<DataMatrix, CliError> {
    let path = cfg
        .input
        .clone()
        .ok_or_else(|| CliError::Config(format!("{:?} needs --input", cfg.command)))?;
    Ok(load_csv(&DatasetManifest::new(path, DatasetFormat::CsvMatrix))?)
}

/// Generates a dataset and writes `data.csv` and `spec.toml`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    cfg.validate()?;
    let dir = require_output(cfg)?;
    let spec = cfg.subspace_spec()?;
    let (data, _) = generate(&spec)?;
    let path = dir.join(DATA_FILE);
    write_csv(&path, &data)?;
    write_atomic(&dir.join(SPEC_FILE), spec.to_toml_string()?.as_bytes())?;
    write_config(dir, cfg)?;
    Ok(path)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentOutput {
    pub seed: u64,
    pub report: SegmentationReport,
}

/// Segments the input and writes `report.json`.
pub fn cmd_segment(cfg: &RunConfig) -> Result<SegmentationReport, CliError> {
    cfg.validate()?;
    let data = load_input(cfg)?;
    let run = segment(&data, &cfg.segment_options())?;
    if let Some(dir) = output_dir(cfg)? {
        let out = SegmentOutput {
            seed: cfg.seed,
            report: run.report.clone(),
        };
        write_json(&dir.join(REPORT_FILE), &out)?;
        write_config(dir, cfg)?;
    }
    Ok(run.report)
}

/// Solves for the coefficient matrix and writes it to `z.csv`.
pub fn cmd_solve(cfg: &RunConfig) -> Result<Coefficients, CliError> {
    cfg.validate()?;
    let dir = require_output(cfg)?;
    let opts = cfg.segment_options();
    let data = preprocess(&load_input(cfg)?, &opts)?;
    let z = solve(&data.x, &opts)?;
    write_matrix_csv(&dir.join(Z_FILE), &z.z)?;
    write_config(dir, cfg)?;
    Ok(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckBundle {
    pub passed: bool,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl CheckBundle {
    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Built-in criterion by name.
pub fn parse_criterion(name: &str) -> Result<Criterion, CliError> {
    let all = [
        Criterion::L1,
        Criterion::FrobeniusSquared,
        Criterion::Frobenius,
        Criterion::Nuclear,
        Criterion::GramL1,
        Criterion::Rank,
    ];
    if name == "l1_plus_nuclear" {
        return Ok(Criterion::L1PlusNuclear { delta: 0.5 });
    }
    all.into_iter()
        .find(|c| c.name() == name)
        .ok_or_else(|| CliError::Config(format!("unknown criterion {name:?}")))
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0)).expect("finite entries")
}

/// `−D·diag(D)⁻¹` without zeroing the diagonal.
fn lsr1_keep_diagonal(x: &Matrix, lambda: f64) -> Result<Matrix, CliError> {
    let g = x.gram();
    let n = g.rows();
    let reg = Matrix::from_fn(n, n, |i, j| g[(i, j)] + if i == j { lambda } else { 0.0 })?;
    let d = solve_spd(&reg, &Matrix::identity(n))?;
    Ok(Matrix::from_fn(n, n, |i, j| -d[(i, j)] / d[(j, j)])?)
}

fn ebd_checks(cfg: &RunConfig) -> Result<Vec<CheckOutcome>, CliError> {
    let criteria = if cfg.check.criteria.is_empty() {
        Criterion::block_enforcing()
    } else {
        cfg.check
            .criteria
            .iter()
            .map(|n| parse_criterion(n))
            .collect::<Result<_, _>>()?
    };
    let mut out = Vec::new();
    for (i, c) in criteria.iter().enumerate() {
        let r = check_ebd(c, cfg.check.ebd_trials, cfg.seed.wrapping_add(i as u64));
        let passed = r.permutation_invariance.passed() && r.diagonal_dominance.passed();
        out.push(CheckOutcome {
            name: format!("ebd/{}", r.criterion),
            passed,
            detail: match r
                .permutation_invariance
                .witness()
                .or(r.diagonal_dominance.witness())
            {
                Some(w) => format!("trial {}: {}", w.trial, w.detail),
                None => format!(
                    "{} trials; additivity {}",
                    r.trials,
                    if r.additivity.passed() { "holds" } else { "fails" }
                ),
            },
            witness: (!passed).then(|| to_json(&r)),
        });
    }
    // rank must be caught by the dominance check
    let r = check_ebd(&Criterion::Rank, cfg.check.ebd_trials, cfg.seed);
    let caught = r.diagonal_dominance.witness().is_some();
    out.push(CheckOutcome {
        name: "ebd/rank_rejected".into(),
        passed: caught,
        detail: if caught {
            "rank fails diagonal dominance as expected".into()
        } else {
            "no dominance witness found for rank".into()
        },
        witness: (!caught).then(|| to_json(&r)),
    });
    Ok(out)
}

fn oracle_check(cfg: &RunConfig) -> Result<CheckOutcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for instance in 0..cfg.check.oracle_instances {
        let d = rng.gen_range(2..=30);
        let n = rng.gen_range(3..=100);
        let lambda = log_uniform(&mut rng, 1e-4, 10.0);
        let x = random_matrix(&mut rng, d, n);
        let z1 = if cfg.check.tamper_lsr1 {
            lsr1_keep_diagonal(&x, lambda)?
        } else {
            lsr1(&x, lambda)?.z
        };
        let pairs = [
            ("lsr1", z1, column_oracle_ridge(&x, lambda, true)?.z),
            ("lsr2", lsr2(&x, lambda)?.z, column_oracle_ridge(&x, lambda, false)?.z),
        ];
        for (variant, closed, oracle) in pairs {
            let diff = closed.max_abs_diff(&oracle).unwrap_or(f64::INFINITY);
            worst = worst.max(diff);
            if diff.is_nan() || diff > cfg.tolerances.oracle {
                return Ok(CheckOutcome {
                    name: "oracle_equivalence".into(),
                    passed: false,
                    detail: format!("{variant} differs from per-column solves by {diff:.3e}"),
                    witness: Some(json!({
                        "instance": instance, "variant": variant, "d": d, "n": n,
                        "lambda": lambda, "max_abs_diff": diff, "x": x,
                    })),
                });
            }
        }
    }
    Ok(CheckOutcome {
        name: "oracle_equivalence".into(),
        passed: true,
        detail: format!("{} instances, max difference {worst:.3e}", cfg.check.oracle_instances),
        witness: None,
    })
}

fn unit_columns(m: &Matrix) -> Matrix {
    let norms: Vec<f64> = (0..m.cols())
        .map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] / norms[j]).expect("finite entries")
}

fn grouping_check(cfg: &RunConfig) -> Result<CheckOutcome, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut min_slack = f64::INFINITY;
    let mut worst_dup = 0.0f64;
    for instance in 0..cfg.check.grouping_instances {
        let d = rng.gen_range(2..=20);
        let n = rng.gen_range(2..=30);
        let lambda = log_uniform(&mut rng, 1e-3, 10.0);
        let mut cols: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let dup = (n >= 2 && rng.gen_bool(0.5)).then(|| {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n - 1));
            let b = if b >= a { b + 1 } else { b };
            cols[b] = cols[a].clone();
            (a, b)
        });
        let x = unit_columns(&Matrix::from_columns(&cols)?);
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let report = grouping_bound_report(&x, &y, lambda)?;
        let slack = report.min_slack();
        min_slack = min_slack.min(slack);
        let dup_gap = dup.map_or(0.0, |(a, b)| (report.coefficients[a] - report.coefficients[b]).abs());
        worst_dup = worst_dup.max(dup_gap);
        if slack.is_nan() || slack < -cfg.tolerances.grouping || dup_gap.is_nan() || dup_gap > cfg.tolerances.duplicate {
            return Ok(CheckOutcome {
                name: "grouping_bound".into(),
                passed: false,
                detail: format!("instance {instance}: slack {slack:.3e}, duplicate gap {dup_gap:.3e}"),
                witness: Some(json!({ "instance": instance, "x": x, "y": y, "report": report })),
            });
        }
    }
    Ok(CheckOutcome {
        name: "grouping_bound".into(),
        passed: true,
        detail: format!(
            "{} instances, min slack {min_slack:.3e}, max duplicate gap {worst_dup:.3e}",
            cfg.check.grouping_instances
        ),
        witness: None,
    })
}

/// Specs for the block-diagonality suites: k ∈ {2,3,5}, dims in 1..=3.
pub fn block_specs(count: usize, mode: SubspaceMode, seed: u64) -> Vec<SubspaceSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|s| {
            let k = [2, 3, 5][rng.gen_range(0..3)];
            // every third orthogonal spec is undersampled: 2 samples in 3 dimensions
            let undersampled = mode == SubspaceMode::Orthogonal && s % 3 == 0;
            let dims: Vec<usize> = if undersampled {
                vec![3; k]
            } else {
                (0..k).map(|_| rng.gen_range(1..=3)).collect()
            };
            let samples = match mode {
                SubspaceMode::Independent => dims.iter().map(|d| d + 3).collect(),
                _ if undersampled => vec![2; k],
                SubspaceMode::Orthogonal => dims.iter().map(|&d| (d + rng.gen_range(0..4)).max(2)).collect(),
            };
            SubspaceSpec {
                ambient_dim: dims.iter().sum::<usize>() + rng.gen_range(0..5),
                subspace_dims: dims,
                samples_per_subspace: samples,
                mode,
                noise_sigma: 0.0,
                correlation: None,
                normalize_columns: false,
                seed: seed.wrapping_mul(1000).wrapping_add(s as u64),
            }
        })
        .collect()
}

fn block_checks(cfg: &RunConfig) -> Result<Vec<CheckOutcome>, CliError> {
    let mut out = Vec::new();
    let opts = cfg.segment_options().constrained;

    let mut worst = 0.0f64;
    let mut failure = None;
    for spec in block_specs(cfg.check.block_specs, SubspaceMode::Independent, cfg.seed) {
        let (data, _) = generate(&spec)?;
        let z = lsr_constrained_with(&data.x, false, &opts)?;
        let v = block_diag_violation(&z.z, data.labels.as_deref().unwrap_or_default())?;
        worst = worst.max(v);
        if (v.is_nan() || v > cfg.tolerances.block) && failure.is_none() {
            failure = Some(json!({ "spec": spec, "violation": v }));
        }
    }
    out.push(CheckOutcome {
        name: "block_diagonal/independent".into(),
        passed: failure.is_none(),
        detail: format!("{} specs, worst violation {worst:.3e}", cfg.check.block_specs),
        witness: failure,
    });

    let mut worst = 0.0f64;
    let mut failure = None;
    for spec in block_specs(cfg.check.block_specs, SubspaceMode::Orthogonal, cfg.seed) {
        let (data, _) = generate(&spec)?;
        let labels = data.labels.as_deref().unwrap_or_default();
        for z in [lsr1(&data.x, cfg.lambda)?, lsr2(&data.x, cfg.lambda)?] {
            let v = block_diag_violation(&z.z, labels)?;
            worst = worst.max(v);
            if (v.is_nan() || v > cfg.tolerances.block_orthogonal) && failure.is_none() {
                failure = Some(json!({ "spec": spec, "variant": z.variant, "violation": v }));
            }
        }
    }
    out.push(CheckOutcome {
        name: "block_diagonal/orthogonal".into(),
        passed: failure.is_none(),
        detail: format!("{} specs, worst violation {worst:.3e}", cfg.check.block_specs),
        witness: failure,
    });
    Ok(out)
}

/// Runs every diagnostic suite without writing anything.
pub fn run_checks(cfg: &RunConfig) -> Result<CheckBundle, CliError> {
    cfg.validate()?;
    let mut checks = ebd_checks(cfg)?;
    checks.push(oracle_check(cfg)?);
    checks.push(grouping_check(cfg)?);
    checks.extend(block_checks(cfg)?);
    Ok(CheckBundle {
        passed: checks.iter().all(|c| c.passed),
        seed: cfg.seed,
        checks,
    })
}

/// Runs the diagnostics, writes `check.json`, and fails with the first
/// failing check's witness.
pub fn cmd_check(cfg: &RunConfig) -> Result<CheckBundle, CliError> {
    let bundle = run_checks(cfg)?;
    if let Some(dir) = output_dir(cfg)? {
        write_json(&dir.join(CHECK_FILE), &bundle)?;
        write_config(dir, cfg)?;
    }
    match bundle.first_failure() {
        Some(f) => Err(CliError::CheckFailed {
            name: f.name.clone(),
            detail: f.detail.clone(),
            witness: f.witness.clone().unwrap_or(serde_json::Value::Null),
        }),
        None => Ok(bundle),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub lsr1_s: f64,
    pub lsr2_s: f64,
    pub oracle_s: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

fn time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let out = f();
    (out, t.elapsed().as_secs_f64())
}

/// Median wall times of the closed forms and the per-column reference.
pub fn bench_rows(cfg: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.bench.sizes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(n as u64));
        let x = random_matrix(&mut rng, cfg.bench.dim, n);
        let (mut t1, mut t2, mut to) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..cfg.bench.repetitions {
            let (r, s) = time(|| lsr1(&x, cfg.lambda));
            r?;
            t1.push(s);
            let (r, s) = time(|| lsr2(&x, cfg.lambda));
            r?;
            t2.push(s);
            let (r, s) = time(|| column_oracle_ridge(&x, cfg.lambda, true));
            r?;
            to.push(s);
        }
        rows.push(BenchRow {
            n,
            d: cfg.bench.dim,
            lsr1_s: median(t1),
            lsr2_s: median(t2),
            oracle_s: median(to),
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("n,d,lsr1_median_s,lsr2_median_s,oracle_median_s,oracle_over_lsr1,oracle_over_lsr2\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6e},{:.6e},{:.6e},{:.3},{:.3}\n",
            r.n,
            r.d,
            r.lsr1_s,
            r.lsr2_s,
            r.oracle_s,
            r.oracle_s / r.lsr1_s,
            r.oracle_s / r.lsr2_s
        ));
    }
    out
}

/// Times the solvers and writes `bench.csv`.
pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<BenchRow>, CliError> {
    let rows = bench_rows(cfg)?;
    if let Some(dir) = output_dir(cfg)? {
        write_atomic(&dir.join(BENCH_FILE), bench_csv(&rows).as_bytes())?;
        write_config(dir, cfg)?;
    }
    Ok(rows)
}
