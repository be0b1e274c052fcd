use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lsr_core::datagen::{generate, SubspaceSpec};
use lsr_core::ingest::{parse_csv, write_csv};
use lsrseg::commands::{bench_rows, cmd_check, cmd_segment, cmd_solve, run_checks, SegmentOutput, REPORT_FILE, Z_FILE};
use lsrseg::config::{CommandKind, RunConfig, SolverChoice, RESOLVED_CONFIG_FILE};
use lsrseg::CliError;

fn lsrseg(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lsrseg"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_dataset(dir: &Path, spec: &SubspaceSpec) -> String {
    let (data, _) = generate(spec).unwrap();
    let path = dir.join("data.csv");
    write_csv(&path, &data).unwrap();
    path.to_string_lossy().into_owned()
}

fn small_check_config() -> RunConfig {
    let mut cfg = RunConfig {
        command: CommandKind::Check,
        ..RunConfig::default()
    };
    cfg.check.ebd_trials = 40;
    cfg.check.oracle_instances = 10;
    cfg.check.grouping_instances = 100;
    cfg.check.block_specs = 10;
    cfg
}

#[test]
fn synth_then_segment_recovers_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn");
    let out = lsrseg(&["synth", "--output", syn.to_str().unwrap(), "--seed", "4"], &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let data = syn.join("data.csv");
    let seg = dir.path().join("seg");
    let out = lsrseg(
        &["segment", "--input", data.to_str().unwrap(), "--output", seg.to_str().unwrap(), "--lambda", "1e-3"],
        &[],
    );
    assert!(out.status.success());
    let report: SegmentOutput = serde_json::from_str(&fs::read_to_string(seg.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(report.report.error_rate, Some(0.0));
    assert_eq!(report.seed, 0);
    let cfg = RunConfig::from_file(&seg.join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!(cfg.lambda, 1e-3);
}

#[test]
fn rerun_from_resolved_config_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(
        dir.path(),
        &SubspaceSpec {
            noise_sigma: 0.05,
            ..SubspaceSpec::uniform(3, 2, 10, 15, 8)
        },
    );
    let first = RunConfig {
        input: Some(input.into()),
        output: Some(dir.path().join("a")),
        seed: 17,
        normalize_columns: true,
        ..RunConfig::default()
    };
    let a = cmd_segment(&first).unwrap();
    let mut second = RunConfig::from_file(&dir.path().join("a").join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!(second, first);
    second.output = Some(dir.path().join("b"));
    let b = cmd_segment(&second).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.error_rate, b.error_rate);
    assert_eq!(a.block_diag_violation, b.block_diag_violation);
}

#[test]
fn single_cluster_run() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), &SubspaceSpec::uniform(1, 2, 5, 7, 1));
    let cfg = RunConfig {
        input: Some(input.into()),
        k: Some(1),
        ..RunConfig::default()
    };
    let report = cmd_segment(&cfg).unwrap();
    assert!(report.labels.iter().all(|&l| l == 0));
    assert_eq!(report.error_rate, Some(0.0));
}

#[test]
fn solve_writes_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), &SubspaceSpec::uniform(2, 2, 6, 5, 2));
    let cfg = RunConfig {
        command: CommandKind::Solve,
        input: Some(input.into()),
        output: Some(dir.path().join("out")),
        solver: SolverChoice::Constrained,
        ..RunConfig::default()
    };
    let z = cmd_solve(&cfg).unwrap();
    let written = parse_csv(&fs::read_to_string(dir.path().join("out").join(Z_FILE)).unwrap()).unwrap();
    assert_eq!(written.x, z.z);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = lsrseg(&["segment", "--input", missing.to_str().unwrap()], &[]);
    assert_eq!(out.status.code(), Some(1));

    let input = write_dataset(dir.path(), &SubspaceSpec::uniform(2, 2, 6, 5, 2));
    let out = lsrseg(&["segment", "--input", &input, "--lambda", "0"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = lsrseg(&["segment", "--input", &input, "--solver", "bogus"], &[]);
    assert_eq!(out.status.code(), Some(2));

    // a nonzero-norm requirement: a zero column cannot be normalized
    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "1,0\n1,0\n").unwrap();
    let out = lsrseg(
        &["segment", "--input", zero.to_str().unwrap(), "--k", "1", "--normalize-columns"],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));

    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    let out = lsrseg(&["segment", "--input", ragged.to_str().unwrap(), "--k", "1"], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn environment_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), &SubspaceSpec::uniform(2, 2, 6, 5, 3));
    let out_dir = dir.path().join("env");
    let out = lsrseg(
        &["segment"],
        &[
            ("LSRSEG_INPUT", &input),
            ("LSRSEG_OUTPUT", out_dir.to_str().unwrap()),
            ("LSRSEG_LAMBDA", "0.25"),
            ("LSRSEG_SEED", "9"),
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = RunConfig::from_file(&out_dir.join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!((cfg.lambda, cfg.seed), (0.25, 9));
}

#[test]
fn preset_sets_parameters_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_dataset(dir.path(), &SubspaceSpec::uniform(2, 3, 20, 10, 3));
    let out_dir = dir.path().join("p");
    let out = lsrseg(
        &["segment", "--input", &input, "--output", out_dir.to_str().unwrap(), "--preset", "hopkins-lsr1", "--seed", "2"],
        &[],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = RunConfig::from_file(&out_dir.join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!((cfg.lambda, cfg.pca_dim, cfg.seed), (4.8e-3, Some(12), 2));
    let out = lsrseg(
        &["segment", "--input", &input, "--output", out_dir.to_str().unwrap(), "--preset", "hopkins-lsr2", "--lambda", "0.1"],
        &[],
    );
    assert!(out.status.success());
    let cfg = RunConfig::from_file(&out_dir.join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!((cfg.solver, cfg.lambda), (SolverChoice::Lsr2, 0.1));
}

#[test]
fn default_checks_pass() {
    let bundle = run_checks(&small_check_config()).unwrap();
    assert!(bundle.passed, "{:?}", bundle.first_failure());
    assert!(bundle.checks.iter().any(|c| c.name == "ebd/rank_rejected" && c.passed));
}

#[test]
fn injected_rank_criterion_fails_with_witness() {
    let mut cfg = small_check_config();
    cfg.check.criteria = vec!["rank".into()];
    match cmd_check(&cfg) {
        Err(e @ CliError::CheckFailed { .. }) => {
            assert_eq!(e.exit_code(), 4);
            let CliError::CheckFailed { name, witness, .. } = e else { unreachable!() };
            assert_eq!(name, "ebd/rank");
            assert_eq!(witness["diagonal_dominance"]["status"], "fail");
            assert!(witness["diagonal_dominance"]["witness"]["z"].is_object());
        }
        other => panic!("expected a check failure, got {other:?}"),
    }
}

#[test]
fn tampered_lsr1_is_caught() {
    let mut cfg = small_check_config();
    cfg.check.tamper_lsr1 = true;
    match cmd_check(&cfg) {
        Err(CliError::CheckFailed { name, .. }) => assert_eq!(name, "oracle_equivalence"),
        other => panic!("expected a check failure, got {other:?}"),
    }
}

#[test]
fn check_failure_exit_code_from_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = lsrseg(
        &["check", "--criterion", "rank", "--ebd-trials", "10", "--output", dir.path().to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diagonal_dominance"));
    assert!(dir.path().join("check.json").exists());
}

#[test]
fn bench_handles_tiny_sizes_and_is_deterministic() {
    let mut cfg = RunConfig {
        command: CommandKind::Bench,
        ..RunConfig::default()
    };
    cfg.bench.sizes = vec![1, 3];
    cfg.bench.repetitions = 3;
    let rows = bench_rows(&cfg).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.lsr1_s >= 0.0 && r.oracle_s >= 0.0));
}

#[test]
fn help_lists_subcommands() {
    let out = lsrseg(&["--help"], &[]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "segment", "check", "bench", "solve"] {
        assert!(text.contains(sub));
    }
}
