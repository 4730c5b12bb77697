use std::process::Command;

fn plaquette(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_plaquette")).args(args).env_remove("PLAQ_P").output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn anomaly_command() {
    let (code, out) = plaquette(&["anomaly", "--k", "2", "--q", "2"]);
    assert_eq!(code, 0);
    assert!(out.contains("V_γ(Z)=false"), "{out}");
    assert!(out.contains("V_γ(2)=true"), "{out}");
}

#[test]
fn verify_on_a_small_box() {
    let (code, out) = plaquette(&["verify", "--box", "2,2,1", "--q", "3", "--p", "0.4", "--suite", "all"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(out.lines().filter(|l| l.contains(": PASS")).count(), 6, "{out}");
}

#[test]
fn bad_arguments_exit_two() {
    assert_eq!(plaquette(&["sample", "--p", "1.5"]).0, 2);
    assert_eq!(plaquette(&["frobnicate"]).0, 2);
    assert_eq!(plaquette(&["sample", "--config", "/nonexistent/plaquette.toml"]).0, 2);
}

#[test]
fn env_is_read_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let status = Command::new(env!("CARGO_BIN_EXE_plaquette"))
        .args(["sample", "--box", "2,2,2", "--sweeps", "5", "--burn-in", "0", "--q", "1", "--out"])
        .arg(&out)
        .env("PLAQ_P", "0.0")
        .env("PLAQ_SEED", "3")
        .output()
        .unwrap();
    assert!(status.status.success());
    let cfg = std::fs::read_to_string(out.join("run.toml")).unwrap();
    assert!(cfg.contains("p = 0.0") && cfg.contains("seed = 3"), "{cfg}");
}
