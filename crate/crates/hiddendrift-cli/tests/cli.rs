//! End-to-end tests of the compiled binary: every subcommand, every exit
//! code, and byte-level reproducibility across reruns and worker counts.
//! Each test runs the real executable against a config file in a scratch
//! directory, so these cover argument parsing, config loading, dispatch,
//! and file output exactly as a user sees them.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

/// Linear benchmark parameters shrunk to a fast grid.
const LINEAR_SMALL: &str = "\
model = linear
n_steps = 60
n_paths = 50
checkpoints = 5
n_inner = 3
filter_n = 60
";

/// CIR benchmark parameters shrunk to a fast grid.
const CIR_SMALL: &str = "\
model = cir
n_steps = 120
checkpoints = 5
n_inner = 3
filter_n = 60
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hiddendrift"))
}

/// Writes `text` as `config.txt` under `dir` and returns its path.
fn write_config(dir: &TempDir, text: &str) -> std::path::PathBuf {
    let path = dir.path().join("config.txt");
    std::fs::write(&path, text).expect("scratch config is writable");
    path
}

/// Runs a subcommand against a config string in its own scratch dir,
/// returning the output plus the `--out` directory used.
fn run_in(dir: &TempDir, args: &[&str], config: &str) -> (Output, std::path::PathBuf) {
    let cfg = write_config(dir, config);
    let out_dir = dir.path().join("out");
    let output = bin()
        .arg(args[0])
        .args(&args[1..])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .expect("binary spawns");
    (output, out_dir)
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("expected output file {}: {e}", path.display()))
}

#[test]
fn test_cli_help_exits_zero_and_documents_interface() {
    let output = bin().arg("--help").output().expect("binary spawns");
    assert_eq!(output.status.code(), Some(0));
    let text = stdout_of(&output);
    for sub in [
        "simulate", "filter", "riccati", "xi", "fig1", "fig2", "checks",
    ] {
        assert!(text.contains(sub), "--help must list `{sub}`:\n{text}");
    }
    assert!(
        text.contains("EXIT CODES"),
        "long help must document exit codes"
    );
    assert!(
        text.contains("key = value"),
        "long help must document the config format"
    );

    let sub = bin()
        .arg("simulate")
        .arg("--help")
        .output()
        .expect("binary spawns");
    assert_eq!(sub.status.code(), Some(0));
    assert!(
        stdout_of(&sub).contains("--config"),
        "subcommand help must show --config"
    );
}

#[test]
fn test_cli_simulate_writes_csv_and_config_echo() {
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["simulate"], LINEAR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&output)
    );

    let csv = read(&out_dir.join("simulate.csv"));
    assert!(!csv.contains('\r'), "CSV must use LF line endings only");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "t,S,Y,yhat,G_partial,G_full,G_diff,pi_myopic,pi_hedge,xi,xi_stderr,G_stderr"
    );
    assert_eq!(lines.len(), 62, "header plus one row per grid time");
    // Undefined columns stay empty; t and the path columns are populated.
    let first = lines[1].split(',').collect::<Vec<_>>();
    assert_eq!(first.len(), 12);
    assert_eq!(first[0], "0.0000000000000000e0");
    assert!(!first[1].is_empty() && !first[2].is_empty());
    assert!(
        first[3..].iter().all(|f| f.is_empty()),
        "filter/value columns are not simulated here"
    );

    let echo = read(&out_dir.join("config_echo.txt"));
    assert!(echo.contains("model = linear"));
    assert!(
        echo.contains("# assumed"),
        "defaulted state keys are marked as assumptions"
    );
}

#[test]
fn test_cli_filter_runs_on_both_models() {
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["filter"], LINEAR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&output)
    );
    assert!(stdout_of(&output).contains("kalman"));
    let csv = read(&out_dir.join("filter.csv"));
    let row = csv.lines().nth(5).unwrap().split(',').collect::<Vec<_>>();
    assert!(!row[3].is_empty(), "yhat column must be populated");

    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["filter"], CIR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&output)
    );
    assert!(stdout_of(&output).contains("grid"));
    let csv = read(&out_dir.join("filter.csv"));
    let row = csv.lines().nth(5).unwrap().split(',').collect::<Vec<_>>();
    assert!(!row[3].is_empty(), "grid filter mean must be populated");
}

#[test]
fn test_cli_riccati_leaves_partial_columns_empty_for_cir() {
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["riccati"], CIR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&output)
    );
    let csv = read(&out_dir.join("riccati.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,A_full,H_full,A_partial,H_partial");
    assert!(
        lines[1].ends_with(",,"),
        "no partial-information closed form exists for CIR"
    );

    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["riccati"], LINEAR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&output)
    );
    let csv = read(&out_dir.join("riccati.csv"));
    let last = csv.lines().last().unwrap().split(',').collect::<Vec<_>>();
    // A(T) = H(T) = 0 in both regimes.
    for field in &last[1..] {
        assert_eq!(
            *field, "0.0000000000000000e0",
            "terminal condition row: {last:?}"
        );
    }
}

#[test]
fn test_cli_unknown_key_is_rejected_with_line_number() {
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["simulate"], "model = linear\nkapa = 2\n");
    assert_eq!(output.status.code(), Some(2));
    let err = stderr_of(&output);
    assert!(err.contains("configuration error"), "stderr: {err}");
    assert!(err.contains("line 2: unknown key `kapa`"), "stderr: {err}");
    assert!(
        !out_dir.exists(),
        "a rejected config must not create output"
    );
}

#[test]
fn test_cli_duplicate_key_cites_both_lines() {
    let dir = TempDir::new().unwrap();
    let (output, _) = run_in(&dir, &["checks"], "model = linear\ngamma = 2\ngamma = 3\n");
    assert_eq!(output.status.code(), Some(2));
    let err = stderr_of(&output);
    assert!(
        err.contains("line 3: duplicate key `gamma` (first set on line 2)"),
        "stderr: {err}"
    );
}

#[test]
fn test_cli_missing_config_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let output = bin()
        .arg("simulate")
        .arg("--config")
        .arg(dir.path().join("no_such_file.txt"))
        .output()
        .expect("binary spawns");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("cannot read config file"));
}

#[test]
fn test_cli_bad_flag_value_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, LINEAR_SMALL);
    let output = bin()
        .arg("simulate")
        .arg("--config")
        .arg(&cfg)
        .arg("--seed")
        .arg("not-a-number")
        .output()
        .expect("binary spawns");
    assert_eq!(
        output.status.code(),
        Some(2),
        "clap parse failures share the config exit code"
    );

    let output = bin()
        .arg("xi")
        .arg("--config")
        .arg(&cfg)
        .arg("--n-inner")
        .arg("1")
        .output()
        .expect("binary spawns");
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("--n-inner must be ≥ 2"));
}

#[test]
fn test_cli_riccati_nirvana_aborts_with_stability_report() {
    // 2κρ + a/σ = 12.8 + 2 > 0 with γ < 1: finite-time blow-up inside T=1.
    let dir = TempDir::new().unwrap();
    let config = "model = linear\ngamma = 0.05\nrho = 0.8\n";
    let (output, out_dir) = run_in(&dir, &["riccati"], config);
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        stderr_of(&output)
    );
    let err = stderr_of(&output);
    assert!(err.contains("stability_full = false"), "stderr: {err}");
    assert!(err.contains("nirvana blow-up at t ="), "stderr: {err}");
    assert!(
        !out_dir.join("riccati.csv").exists(),
        "an aborted run must not write CSV"
    );

    // The same parameters are diagnostics, not an error, under `checks`.
    let (output, _) = run_in(&dir, &["checks"], config);
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout_of(&output).contains("stability_full = false"));
}

#[test]
fn test_cli_fig2_novikov_failure_aborts_before_any_output() {
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["fig2", "--sigma", "0.001"], CIR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(3),
        "stderr: {}",
        stderr_of(&output)
    );
    let err = stderr_of(&output);
    assert!(
        err.contains("Novikov condition fails at sigma = 0.001"),
        "stderr: {err}"
    );
    assert!(err.contains("sigma is too low"), "stderr: {err}");
    assert!(
        !out_dir.exists(),
        "the gate runs before any file is written"
    );
}

#[test]
fn test_cli_fig2_low_sigma_benchmark_warns_but_runs() {
    // σ = 0.026 violates the sufficient MGF bound yet satisfies Novikov;
    // the run must complete with a visible warning rather than abort.
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["fig2", "--sigma", "0.026"], CIR_SMALL);
    assert_eq!(
        output.status.code(),
        Some(0),
        "stderr: {}",
        stderr_of(&output)
    );
    let text = stdout_of(&output);
    assert!(text.contains("warning: MGF sufficient condition fails at sigma = 0.026"));
    assert!(text.contains("proceeding because the Novikov bound holds"));
    assert!(out_dir.join("fig2_sigma_0.026.csv").exists());
    let summary = read(&out_dir.join("fig2_summary.txt"));
    assert!(summary.contains("novikov:") && summary.contains("-> true"));
    assert!(summary.contains("warning: MGF sufficient condition"));
}

#[test]
fn test_cli_xi_numeric_overflow_exits_four() {
    // Near-log utility with an enormous Sharpe ratio: the dual-density
    // exponent overflows, the branch resamples once, then fails hard.
    let dir = TempDir::new().unwrap();
    let config = "\
model = linear
gamma = 0.02
mu = 10
sigma = 0.1
n_steps = 50
checkpoints = 2
n_inner = 2
";
    let (output, _) = run_in(&dir, &["xi"], config);
    assert_eq!(
        output.status.code(),
        Some(4),
        "stderr: {}",
        stderr_of(&output)
    );
    let err = stderr_of(&output);
    assert!(err.contains("numeric failure"), "stderr: {err}");
    assert!(err.contains("branch weight degenerate"), "stderr: {err}");
}

#[test]
fn test_cli_seed_and_out_overrides_take_effect() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, LINEAR_SMALL);
    let run = |seed: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let output = bin()
            .args(["simulate", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(&out_dir)
            .output()
            .expect("binary spawns");
        assert_eq!(
            output.status.code(),
            Some(0),
            "stderr: {}",
            stderr_of(&output)
        );
        read(&out_dir.join("simulate.csv"))
    };
    let base = run("1", "a");
    let same = run("1", "b");
    let other = run("7", "c");
    assert_eq!(base, same, "same seed must reproduce bytes");
    assert_ne!(base, other, "a different seed must change the path");
    let echo = read(&dir.path().join("c").join("config_echo.txt"));
    assert!(
        echo.contains("seed = 7"),
        "overrides must appear in the echo"
    );
}

#[test]
fn test_cli_runs_reproduce_byte_identical_across_worker_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, CIR_SMALL);
    let run = |threads: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let output = bin()
            .args(["xi", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .expect("binary spawns");
        assert_eq!(
            output.status.code(),
            Some(0),
            "stderr: {}",
            stderr_of(&output)
        );
        read(&out_dir.join("xi.csv"))
    };
    let serial = run("1", "serial");
    let parallel = run("4", "parallel");
    assert_eq!(
        serial, parallel,
        "worker count must not leak into the output bytes"
    );
}

#[test]
fn test_cli_checks_reports_and_always_exits_zero() {
    let dir = TempDir::new().unwrap();
    let (output, out_dir) = run_in(&dir, &["checks"], LINEAR_SMALL);
    assert_eq!(output.status.code(), Some(0));
    let text = stdout_of(&output);
    assert!(text.contains("stability_full = true"));
    assert!(text.contains("stability_partial = true"));
    assert!(text.contains("novikov: n/a (linear model)"));
    assert!(
        !out_dir.exists(),
        "checks is report-only and writes nothing"
    );

    // γ = 2 makes the MGF exponent vanish: trivially satisfied.
    let (output, _) = run_in(&dir, &["checks"], "model = cir\ngamma = 2\n");
    assert_eq!(output.status.code(), Some(0));
    let text = stdout_of(&output);
    assert!(text.contains("feller:"));
    assert!(
        text.contains("(trivially: the exponent vanishes)"),
        "stdout: {text}"
    );
}
