use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_micromaser"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("micromaser-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write(name: &str, text: &str) -> String {
    let p = scratch(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn walls_json_lists_839() {
    let out = run(&["walls", "--m1", "13", "--k1", "1", "--count", "3"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ms: Vec<String> = v["result"]["walls"].as_array().unwrap().iter().map(|w| w["m"].to_string()).collect();
    assert_eq!(ms, ["13", "839", "48733"]);
    assert_eq!(v["header"]["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn bad_configs_exit_with_two() {
    let both = write("both.toml", "[model]\nphi = 1.0\nm = 20\nk = 5\n");
    let out = run(&["steady", "--config", &both]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.phi"));

    let unknown = write("unknown.toml", "[model]\nphi = 1.0\n\n[noise]\nkapa = 0.1\n");
    let out = run(&["steady", "--config", &unknown]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 5"));

    let seedless = write("seedless.toml", "[model]\nphi = 1.0\n[noise]\nbeam_sigma = 0.01\nbeam_samples = 10\n");
    assert_eq!(run(&["steady", "--config", &seedless]).status.code(), Some(2));

    assert_eq!(run(&["steady", "--config", "/nonexistent/run.toml"]).status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    // no wall and a wide state: the stationary recurrence does not fit
    let cfg = write("trunc.toml", "[model]\nc_e = 0.6\nphi = 0.1\nn_max = 10\n[run.wigner]\nstate = \"plus\"\n");
    assert_eq!(run(&["wigner", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn steady_reports_both_parities() {
    let cfg = write("steady.toml", "[model]\nc_e = 0.65\nm = 20\nk = 5\nn_max = 24\n");
    let out = run(&["steady", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let mean = v["result"]["plus"]["mean_n"].as_f64().unwrap();
    assert!((mean - 5.58).abs() < 0.01, "{mean}");
    assert!(v["result"]["walls"].as_array().unwrap().iter().any(|w| w["m"] == 20));
}

#[test]
fn evolve_csv_has_full_precision_rows() {
    let cfg = write("evolve.toml", "[model]\nc_e = 0.3\nphi = 1.0\nn_max = 20\n[run]\natoms = [0, 5, 50]\n");
    let out = run(&["evolve", "--config", &cfg, "--format", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t,trace,purity,mean_n,parity,fidelity");
    assert_eq!(rows.len(), 4);
    let trace: f64 = rows[3].split(',').nth(1).unwrap().parse().unwrap();
    assert!((trace - 1.0).abs() < 1e-12);
}

#[test]
fn sweep_is_resumable_and_deterministic() {
    let cfg = write(
        "sweep.toml",
        "[model]\nn_max = 24\n[run.sweep]\nm = 20\nc_e = [0.2, 0.65]\nk = [1, 5]\ncheckpoints = [10, 100]\n",
    );
    let out_a = scratch("a.csv");
    let out_b = scratch("b.csv");
    let _ = std::fs::remove_file(&out_a);
    let _ = std::fs::remove_file(&out_b);
    assert!(run(&["sweep", "--config", &cfg, "--out", out_a.to_str().unwrap(), "--jobs", "3"]).status.success());
    assert!(run(&["sweep", "--config", &cfg, "--out", out_b.to_str().unwrap(), "--jobs", "1"]).status.success());
    let a = std::fs::read_to_string(&out_a).unwrap();
    assert_eq!(a, std::fs::read_to_string(&out_b).unwrap());
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2 * 2);

    // drop the last row and resume
    let truncated: String = a.lines().take(a.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    std::fs::write(&out_a, truncated).unwrap();
    assert!(run(&["sweep", "--config", &cfg, "--out", out_a.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read_to_string(&out_a).unwrap(), a);
}

#[test]
fn empty_sweep_writes_header_only() {
    let cfg = write("empty.toml", "[run.sweep]\nm = 20\nc_e = []\nk = [1]\ncheckpoints = [10]\n");
    let out = run(&["sweep", "--config", &cfg]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["c_e,K,k,mean_n,var_n,qfi,enhancement,purity"]);
}

#[test]
fn metastable_weak_coupling_is_classical() {
    let cfg = write("meta.toml", "[model]\nc_e = 0.1\nphi = 0.1\nn_max = 24\n[noise]\nkappa = 1e-6\n");
    let out = run(&["metastable", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["result"]["eta"].as_f64().unwrap() - 1.0).abs() < 0.01);
    assert_eq!(v["result"]["classical_flag"], true);
}
