use std::path::Path;
use std::process::{Command, Output};

fn mitosim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mitosim")).args(args).current_dir(dir).output().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn eigen_is_normalized() {
    let dir = tempfile::tempdir().unwrap();
    let out = mitosim(&["eigen", "--rate", "monomial:K=1,r=2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let u = rows(&dir.path().join("U.csv"));
    // ∫ x U dx = ∫ x² U d(log x), trapezoid on the log-uniform nodes
    let h = (u[1][0] / u[0][0]).ln();
    let v: Vec<f64> = u.iter().map(|r| r[0] * r[0] * r[1]).collect();
    let integral = h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]));
    assert!((integral - 1.0).abs() <= 1e-8, "{integral}");
}

#[test]
fn malformed_rate_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    for (spec, key) in [("monomial:K=abc,r=2", "rate.K"), ("monomial:K=1,q=2", "rate.q"), ("cubic:K=1", "rate.kind")] {
        let out = mitosim(&["eigen", "--rate", spec], dir.path());
        assert_eq!(out.status.code(), Some(2), "{spec}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(key), "{spec}: {err}");
    }
    let out = mitosim(&["mc", "--replicas", "many"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = mitosim(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = mitosim(&["acceptance", "--profile", "laptop"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_enumerates_keys() {
    let out = mitosim(&["dual", "--help"], Path::new("."));
    assert!(out.status.success());
    let help = String::from_utf8_lossy(&out.stdout);
    for k in ["rate.K", "grid.m", "picard_tol", "replicas", "omega", "criterion"] {
        assert!(help.contains(k), "{k}");
    }
    assert!(help.contains("default 64"));
}

#[test]
fn mc_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_mitosim"))
            .args(["mc", "--rate", "monomial:K=1,r=1", "--replicas", "500", "--seed", "42", "--out", name])
            .env("MITOSIM_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(name)).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("3", "b.csv");
    assert_eq!(a, b);
    let r = rows(&dir.path().join("a.csv"));
    assert_eq!(r.len(), 500);
    assert!(r.iter().all(|row| row[2] >= 1.0));
    let out = Command::new(env!("CARGO_BIN_EXE_mitosim")).args(["mc"]).env("MITOSIM_THREADS", "zero").current_dir(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_and_dual_output() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "rate = monomial:K=1,r=1\nf = phi\nt = 1.0\ncheckpoints = 2\ngrid.x_min = 0.001\ngrid.octaves = 16\n").unwrap();
    let out = mitosim(&["dual", "--config", "run.cfg"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(&dir.path().join("traj.csv"));
    let times: Vec<f64> = r.iter().map(|row| row[0]).collect();
    assert!(times.contains(&0.5) && times.contains(&1.0));
    // M_t φ = e^t φ
    for row in &r {
        assert!((row[2] / (row[0].exp() * row[1]) - 1.0).abs() < 1e-8);
    }
    // horizon beyond the grid is a configuration error
    let out = mitosim(&["dual", "--config", "run.cfg", "--t", "40"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn measure_project_entropy_harris_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = mitosim(&["measure", "--init", "dirac:x0=1", "--t", "2.0794415416798357"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = rows(&dir.path().join("comb.csv"));
    let phi: f64 = c.iter().map(|r| r[1] * r[2]).sum();
    assert!((phi / 8.0 - 1.0).abs() < 1e-7);

    let out = mitosim(&["project", "--mu", "dirac:x0=1", "--N", "16", "--t", "0.2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rho_t(phi) = 1.0"));

    let out = mitosim(&["entropy", "--f", "bump:c=1,w=0.6", "--H", "square", "--t", "1.0", "--checkpoints", "4"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e = rows(&dir.path().join("ent.csv"));
    assert!(e.windows(2).all(|w| w[1][1] <= w[0][1] + 1e-12));

    let out = mitosim(&["harris", "--periods", "10"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = std::fs::read_to_string(dir.path().join("cert.txt")).unwrap();
    assert!(cert.contains("n0"));
    let v = std::fs::read_to_string(dir.path().join("validation.csv")).unwrap();
    assert!(v.starts_with("m,measured,bound"));
    assert_eq!(v.lines().count(), 12);
}

#[test]
fn acceptance_single_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let out = mitosim(&["acceptance", "--profile", "desk", "--criterion", "2"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[PASS]  2"));
    let out = mitosim(&["acceptance", "--criterion", "11"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
