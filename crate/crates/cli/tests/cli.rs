use assert_cmd::Command;
use predicates::prelude::*;
use std::fs;
use tempfile::TempDir;

fn cylfbm() -> Command {
    let mut c = Command::cargo_bin("cylfbm").unwrap();
    c.env_remove("CYLFBM_SEED");
    c
}

fn step_csv(dir: &TempDir) -> std::path::PathBuf {
    let p = dir.path().join("f.csv");
    let mut s = String::from("t,v_0\n");
    for j in 0..=8 {
        s += &format!("{},{}\n", j as f64 / 8.0, if j < 4 { 1.0 } else { -0.5 });
    }
    fs::write(&p, s).unwrap();
    p
}

#[test]
fn heat_check_verdicts() {
    cylfbm()
        .args(["heat", "check", "--hurst", "0.3"])
        .assert()
        .success()
        .stdout(predicate::str::contains("verdict: exists"));
    cylfbm()
        .args(["heat", "check", "--hurst", "0.2"])
        .assert()
        .success()
        .stdout(predicate::str::contains("verdict: diverges"));
    cylfbm()
        .args(["heat", "check", "--hurst", "0.2", "--dim", "1", "--weight-power", "-0.5"])
        .assert()
        .success()
        .stdout(predicate::str::contains("verdict: exists"));
}

#[test]
fn usage_errors_exit_2() {
    cylfbm().args(["heat", "check"]).assert().code(2);
    cylfbm().args(["heat", "check", "--hurst", "0.3", "--bogus"]).assert().code(2);
    cylfbm().args(["fbm", "sample", "--hurst", "0.5"]).assert().code(2);
    cylfbm().args(["cyl", "genuine", "--config", "/nonexistent.toml"]).assert().code(2);
}

#[test]
fn fbm_sample_is_deterministic() {
    let run = |seed: &str| {
        cylfbm()
            .args(["fbm", "sample", "--hurst", "0.7", "--grid-n", "16", "--paths", "3", "--seed", seed])
            .output()
            .unwrap()
            .stdout
    };
    let a = run("9");
    assert_eq!(a, run("9"));
    assert_ne!(a, run("10"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 18);
    assert!(text.starts_with("t,path_0,path_1,path_2\n"));
}

#[test]
fn seed_env_fallback_and_flag_precedence() {
    let base = ["fbm", "sample", "--hurst", "0.3", "--grid-n", "8", "--paths", "2"];
    let flag = cylfbm().args(base).args(["--seed", "42"]).output().unwrap().stdout;
    let env = cylfbm().args(base).env("CYLFBM_SEED", "42").output().unwrap().stdout;
    let both = cylfbm().args(base).args(["--seed", "7"]).env("CYLFBM_SEED", "42").output().unwrap().stdout;
    let seven = cylfbm().args(base).args(["--seed", "7"]).output().unwrap().stdout;
    assert_eq!(flag, env);
    assert_eq!(both, seven);
    assert_ne!(both, env);
}

#[test]
fn emit_config_prints_toml() {
    cylfbm()
        .args(["--emit-config", "heat", "check", "--hurst", "0.3"])
        .assert()
        .success()
        .stderr(predicate::str::contains("verb = \"heat check\"").and(predicate::str::contains("hurst = 0.3")));
}

#[test]
fn frac_roundtrip_and_kstar() {
    let dir = TempDir::new().unwrap();
    let f = step_csv(&dir);
    let out = dir.path().join("i.csv");
    cylfbm().args(["frac", "integral", "--alpha", "0.4", "--in"]).arg(&f).arg("--out").arg(&out).assert().success();
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 10);
    // the right-sided integral vanishes at the horizon
    assert!(text.lines().last().unwrap().ends_with(",0.0000000000000000e0"));
    cylfbm()
        .args(["frac", "kstar", "--hurst", "0.3"])
        .write_stdin(fs::read_to_string(&f).unwrap())
        .assert()
        .success()
        .stderr(predicate::str::contains("m_norm="));
}

#[test]
fn wiener_moment_check() {
    let dir = TempDir::new().unwrap();
    let f = step_csv(&dir);
    cylfbm()
        .args(["wiener", "--hurst", "0.7", "--paths", "4000", "--seed", "5", "--integrand"])
        .arg(&f)
        .assert()
        .success()
        .stdout(predicate::str::starts_with("path,v_0\n"))
        .stderr(predicate::str::contains("\"exact_var\""));
    // an impossible tolerance must fail the embedded check
    cylfbm()
        .args(["wiener", "--hurst", "0.7", "--paths", "4000", "--seed", "5", "--z", "0", "--integrand"])
        .arg(&f)
        .assert()
        .code(1);
}

#[test]
fn cyl_apply_and_genuine() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("e.toml");
    fs::write(&spec, "kind = \"diagonal\"\nweights = \"k^-1\"\nmodes = 6\nhurst = 0.7\nseed = 4\n").unwrap();
    let out = dir.path().join("a.csv");
    cylfbm()
        .args(["cyl", "apply", "--functional", "1,-1,0,0,0,0", "--paths", "50", "--config"])
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .assert()
        .success();
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 51);
    cylfbm()
        .args(["cyl", "genuine", "--config"])
        .arg(&spec)
        .assert()
        .success()
        .stdout(predicate::str::contains("verdict: genuine"));
    fs::write(&spec, "kind = \"diagonal\"\nweights = \"k^0\"\nmodes = 64\n").unwrap();
    cylfbm()
        .args(["cyl", "genuine", "--config"])
        .arg(&spec)
        .assert()
        .success()
        .stdout(predicate::str::contains("verdict: cylindrical-only"));
}

#[test]
fn integrate_writes_samples_and_covariance() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("p.toml");
    fs::write(&spec, "kind = \"linear\"\na0 = [[1.0, 0.0], [0.0, 2.0]]\nT = 1.0\nn = 16\n").unwrap();
    let cov = dir.path().join("c.csv");
    cylfbm()
        .args(["integrate", "--hurst", "0.7", "--paths", "200", "--psi-spec"])
        .arg(&spec)
        .arg("--cov-out")
        .arg(&cov)
        .assert()
        .success()
        .stderr(predicate::str::contains("hs_verdict"));
    let text = fs::read_to_string(&cov).unwrap();
    assert_eq!(text.lines().count(), 5);
    // a constant identity-like integrand gives Q = diag(1, 4)·T^{2H}
    let diag: Vec<f64> = text
        .lines()
        .skip(1)
        .filter(|l| l.starts_with("0,0,") || l.starts_with("1,1,"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!((diag[0] - 1.0).abs() < 1e-5 && (diag[1] / 4.0 - 1.0).abs() < 1e-5, "{diag:?}");
}

#[test]
fn heat_bounds_hold() {
    cylfbm()
        .args(["heat", "bounds", "--hurst", "0.3", "--lambda", "1,10"])
        .assert()
        .success()
        .stdout(predicate::str::contains("verdict=violated").not());
}
