use std::path::Path;
use std::process::{Command, Output};

fn swe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swe")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "mesh.nx=4\nmesh.ny=4\nmesh.p=2\ntime.n_steps=2\nupwind.scheme=supg\n";

#[test]
fn check_operators_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mesh.nx=6\nmesh.ny=5\n");
    let out = swe(&["check-operators", "--config", &cfg]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}");
    assert!(text.contains("PASS"));
    let line = text.lines().find(|l| l.contains("DIV·PERP")).unwrap();
    let v: f64 = line.split('=').nth(1).unwrap().trim().parse().unwrap();
    assert!(v <= 1e-13);
}

#[test]
fn zero_step_run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mesh.nx=4\nmesh.ny=4\nmesh.p=2\ntime.n_steps=0\n");
    let out_dir = dir.path().join("out");
    let out = swe(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.starts_with("step,t,energy,enstrophy,mass,vorticity,newton_iters,residual_u,residual_h\n"));
    assert!(out_dir.join("spectrum.csv").exists());
}

#[test]
fn runs_are_byte_identical_and_spectrum_recomputes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = swe(&["run", "--config", &cfg, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["diagnostics.csv", "spectrum.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let manifest = a.join("snapshot_000002.manifest");
    let spec = dir.path().join("again.csv");
    let out = swe(&["spectrum", "--snapshot", manifest.to_str().unwrap(), "--out", spec.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read(&spec).unwrap(), std::fs::read(a.join("spectrum.csv")).unwrap());
    let bad = swe(&["spectrum", "--snapshot", manifest.to_str().unwrap(), "--out", spec.to_str().unwrap(), "--n", "12"]);
    assert!(!bad.status.success());
}

#[test]
fn invalid_config_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mesh.p=0\n");
    let out = swe(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("mesh.p") && err.contains("line 1"), "{err}");
    let missing = swe(&["check-operators", "--config", dir.path().join("nope.cfg").to_str().unwrap()]);
    assert!(!missing.status.success());
}
