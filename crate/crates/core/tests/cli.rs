use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use kam_core::transcript::{read_transcript, HEADER};

fn kam(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kam"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("KAM_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn siegel_golden_writes_eight_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = kam(&["siegel", "--theta", "golden", "--degree", "64", "--steps", "8"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("transcript.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), HEADER.join(","));
    let rows = read_transcript(&dir.path().join("transcript.csv")).unwrap();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.all_bounds_hold()));
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    assert!(summary.contains("status = pass"));
}

#[test]
fn bruno_of_the_standard_example_is_four() {
    let dir = tempfile::tempdir().unwrap();
    let o = kam(&["bruno", "--model", "e^(1.5^n)"], dir.path());
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("bruno_sum = 4\n"));
}

#[test]
fn non_tamed_schedule_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = kam(&["schedule", "--p", "non-tamed"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not tamed"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = kam(&["siegel", "--no-such-flag", "3"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(code(&kam(&["siegel", "--degree", "4"], dir.path())), 2);
    assert_eq!(code(&kam(&["schedule", "--A", "2.5"], dir.path())), 2);
    assert_eq!(code(&kam(&["siegel", "--theta", "pi"], dir.path())), 2);
}

#[test]
fn unwritable_output_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&kam(&["bruno"], &blocker.join("sub"))), 2);
}

#[test]
fn zero_perturbation_has_zero_norms_and_true_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let o = kam(&["siegel", "--coeff", "0", "--degree", "16", "--steps", "4"], dir.path());
    assert_eq!(code(&o), 0);
    for r in read_transcript(&dir.path().join("transcript.csv")).unwrap() {
        // norm_alpha, norm_beta, norm_gamma, N1_u, nu
        assert!(r.values[4..].iter().all(|v| v.is_zero()), "{r:?}");
        assert!(r.all_bounds_hold());
    }
}

#[test]
fn exit_one_exactly_when_a_bound_column_fails() {
    for inflate in ["0.5", "1.0", "2.0", "10"] {
        let dir = tempfile::tempdir().unwrap();
        let o = kam(&["siegel", "--degree", "24", "--steps", "3", "--inflate-beta", inflate], dir.path());
        let rows = read_transcript(&dir.path().join("transcript.csv")).unwrap();
        let any_false = rows.iter().any(|r| !r.all_bounds_hold());
        assert_eq!(code(&o) == 1, any_false, "inflate {inflate}");
        assert!(code(&o) <= 1);
    }
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "theta = \"silver\"\ndegree = 24\nsteps = 5\nA = 1.5\n").unwrap();
    let o = kam(&["siegel", "--config", cfg.to_str().unwrap(), "--steps", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(summary.contains("theta = 0.41421356237309"));
    assert!(summary.contains("degree = 24") && summary.contains("steps = 3"));

    fs::write(&cfg, "colour = 3\n").unwrap();
    assert_eq!(code(&kam(&["siegel", "--config", cfg.to_str().unwrap()], dir.path())), 2);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_kam"))
        .args(["bruno", "--model", "ones"])
        .env("KAM_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn other_subcommands_pass() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["schedule", "--p", "golden", "--horizon", "40"][..],
        &["exp-demo", "--seed", "9", "--samples", "20"],
        &["product", "--factors", "40"],
    ] {
        let o = kam(args, dir.path());
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn rational_rotation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = kam(&["siegel", "--theta", "0.5", "--degree", "16"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("resonance"));
}
