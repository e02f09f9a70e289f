use std::path::Path;
use std::process::{Command, Output};

fn nqr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nqr")).args(args).output().expect("spawn nqr")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen_small(dir: &Path, name: &str) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    ok(&nqr(&["gen", "--out", &p, "--f0", "0", "--regime", "high", "--seed", "5", "--train", "16", "--val", "4", "--test", "4"]));
    p
}

#[test]
fn preset_is_valid_json() {
    let text = ok(&nqr(&["preset", "--scale", "desk"]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["datasets"].as_array().unwrap().len(), 8);
    assert_eq!(v["models"].as_array().unwrap().len(), 8);
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_small(dir.path(), "a.nqr");
    let b = gen_small(dir.path(), "b.nqr");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn baseline_reports_row_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "d.nqr");
    let params = dir.path().join("p.csv");
    let out = ok(&nqr(&["baseline", "--method", "dc", "--data", &data, "--limit", "2", "--params-csv", params.to_str().unwrap()]));
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("DC,"));
    let csv = std::fs::read_to_string(params).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let out = ok(&nqr(&["baseline", "--method", "wavelet", "--data", &data]));
    assert!(out.lines().nth(1).unwrap().starts_with("W,"));
}

#[test]
fn params_csv_rejected_for_non_dc() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "d.nqr");
    let out = nqr(&["baseline", "--method", "ssa", "--data", &data, "--params-csv", "/dev/null"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dc"));
}

#[test]
fn train_then_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_small(dir.path(), "d.nqr");
    let ckpt = dir.path().join("ckpt");
    let c = ckpt.to_str().unwrap();
    let trained = ok(&nqr(&["train", "--data", &data, "--arch", "ae", "--mode", "DualReal1C", "--epochs", "2", "--seeds", "0,1", "--out", c]));
    assert!(ckpt.join("seed-0.nqr").exists() && ckpt.join("seed-1.nqr").exists());
    let plot = dir.path().join("plot.csv");
    let evald = ok(&nqr(&["eval", "--data", &data, "--checkpoint", c, "--plot", plot.to_str().unwrap()]));
    assert_eq!(trained, evald);
    assert!(std::fs::read_to_string(plot).unwrap().starts_with("example,t,"));
}

#[test]
fn denoise_csv_with_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    let mut text = String::from("re,im\n");
    for k in 0..256 {
        let t = k as f64 * 1.8e-5;
        text.push_str(&format!("{},{}\n", (-t / 2e-3).exp(), 0.1 * (k as f64).sin()));
    }
    std::fs::write(&input, text).unwrap();
    let out = dir.path().join("out.csv");
    ok(&nqr(&["denoise", input.to_str().unwrap(), "--method", "wavelet", "--out", out.to_str().unwrap()]));
    let written = std::fs::read_to_string(out).unwrap();
    assert_eq!(written.lines().count(), 257);
}

#[test]
fn missing_dataset_fails_cleanly() {
    let out = nqr(&["baseline", "--method", "ssa", "--data", "/nonexistent/x.nqr"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&nqr(&["gradcheck", "--configs", "1"]));
    assert!(out.lines().count() > 1);
    assert!(!out.contains("FAIL"));
}
