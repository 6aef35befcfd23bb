use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const UNIT: &str = r#"{"k": 1, "sizes": [50], "q2": [[1.0]], "q3": [[0.0]], "q4": [[0.0]]}"#;
const SBM: &str = r#"{"k": 2, "sizes": [20, 30], "ptilde": [[0.5, 0.3], [0.3, 0.5]]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-clt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| {
            let mut fields = Vec::new();
            let mut rest = l;
            while !rest.is_empty() {
                if let Some(stripped) = rest.strip_prefix('"') {
                    let end = stripped.find('"').unwrap();
                    fields.push(stripped[..end].to_string());
                    rest = stripped[end + 1..].trim_start_matches(',');
                } else {
                    let end = rest.find(',').unwrap_or(rest.len());
                    fields.push(rest[..end].to_string());
                    rest = rest[end..].trim_start_matches(',');
                }
            }
            fields
        })
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn theory_unit_model_rows() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "unit.json", UNIT);
    let out = stdout(&run(&[
        "theory",
        "--model",
        model.to_str().unwrap(),
        "--f",
        "poly:0,0,1",
        "--f",
        "poly:0,1",
        "--nodes",
        "128",
    ]));
    assert!(out.starts_with("# spectral-clt v1\n"));
    let rows = data_rows(&out);
    assert_eq!(rows[0][0], "poly:0,0,1");
    assert!((num(&rows[0][1]) + 1.0).abs() < 1e-6);
    assert!((num(&rows[0][2]) - 4.0).abs() < 1e-5);
    assert!((num(&rows[0][3]) - 1.0).abs() < 1e-8);
    for v in &rows[1][1..4] {
        assert!(num(v).abs() < 1e-8);
    }
}

#[test]
fn theory_exp_stable_under_node_doubling() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "unit.json", UNIT);
    let at = |nodes: &str| {
        let out = stdout(&run(&["theory", "--model", model.to_str().unwrap(), "--f", "exp", "--nodes", nodes]));
        data_rows(&out)[0][1..4].iter().map(|s| num(s)).collect::<Vec<f64>>()
    };
    let (a, b) = (at("256"), at("512"));
    for (x, y) in a.iter().zip(&b) {
        assert!(x.is_finite() && (x - y).abs() <= 1e-6);
    }
}

#[test]
fn theory_json_and_kernel_dump() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "sbm.json", SBM);
    let dump = dir.path().join("kernels.csv");
    let out = stdout(&run(&[
        "theory",
        "--model",
        model.to_str().unwrap(),
        "--f",
        "poly:0,0,1",
        "--nodes",
        "64",
        "--out",
        "json",
        "--dump-kernels",
        dump.to_str().unwrap(),
    ]));
    assert!(out.contains("\"nodes_used\""));
    let kernels = fs::read_to_string(dump).unwrap();
    let mut lines = kernels.lines();
    assert_eq!(lines.next(), Some("# spectral-clt v1"));
    assert_eq!(lines.next(), Some("z1_re,z1_im,z2_re,z2_im,mean_re,mean_im,cov_re,cov_im"));
    assert!(lines.count() >= 64 * 64);
}

#[test]
fn simulate_compare_qq_pipeline() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "sbm.json", SBM);
    let m = model.to_str().unwrap();
    let samples = dir.path().join("samples.csv");
    let theory = dir.path().join("theory.csv");
    let s = samples.to_str().unwrap();
    let args = ["simulate", "--model", m, "--f", "poly:0,0,1", "--nr", "40", "--seed", "5", "--which", "empirical", "--out", s];
    stdout(&run(&args));
    let first = fs::read(&samples).unwrap();
    stdout(&run(&args));
    assert_eq!(first, fs::read(&samples).unwrap(), "simulate is reproducible");
    let text = String::from_utf8(first).unwrap();
    assert!(text.contains("replicate,value\n0,"));

    stdout(&run(&["theory", "--model", m, "--f", "poly:0,0,1", "--nodes", "64", "--output", theory.to_str().unwrap()]));
    let qq = dir.path().join("qq.csv");
    let cmp = stdout(&run(&[
        "compare",
        "--theory",
        theory.to_str().unwrap(),
        "--samples",
        s,
        "--qq",
        qq.to_str().unwrap(),
    ]));
    let row = &data_rows(&cmp)[0];
    assert_eq!(row.len(), 8);
    // E Σλ² ≈ n∫x² + M(x²), a few units at n = 50
    assert!(num(&row[4]) < 3.0, "mean diff {}", row[4]);
    assert_eq!(data_rows(&fs::read_to_string(&qq).unwrap()).len(), 40);

    let self_qq = stdout(&run(&["qq", "--samples", s, "--against", s]));
    for r in data_rows(&self_qq) {
        assert_eq!(r[0], r[1]);
    }
    let one = stdout(&run(&["qq", "--samples", s]));
    assert!(one.contains("theoretical_quantile,sample_quantile"));
}

#[test]
fn grid_is_deterministic() {
    let args = [
        "grid", "--sizes", "10,10,20", "--p", "0.5,0.7", "--q", "0.3", "--f", "poly:0,0,1", "--nr", "6", "--seed", "2",
        "--nodes", "64",
    ];
    let a = stdout(&run(&args));
    let b = stdout(&run(&args));
    assert_eq!(a, b);
    assert!(a.contains("p,q,theory_mean,emp_mean,theory_var,emp_var,abs_diff_mean,abs_diff_var"));
    assert_eq!(data_rows(&a).len(), 2);
    let c = bin().args(args).env("SPECTRAL_CLT_THREADS", "1").output().unwrap();
    assert_eq!(stdout(&c), a);
    let alpha = stdout(&run(&[
        "grid", "--alpha", "0.25,0.25,0.5", "--n", "40", "--p", "0.5,0.7", "--q", "0.3", "--f", "poly:0,0,1", "--nr",
        "6", "--seed", "2", "--nodes", "64",
    ]));
    assert_eq!(alpha, a);
}

#[test]
fn oracle_command() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "unit.json", UNIT);
    let out = stdout(&run(&["oracle", "--model", model.to_str().unwrap(), "--n", "10", "--k", "2"]));
    let row = &data_rows(&out)[0];
    assert!((num(&row[2]) - 9.0).abs() < 1e-12);
    assert!((num(&row[3]) - 3.6).abs() < 1e-12);
}

#[test]
fn lsd_density_and_integral() {
    let dir = TempDir::new().unwrap();
    let model = write(dir.path(), "unit.json", UNIT);
    let m = model.to_str().unwrap();
    let out = stdout(&run(&["lsd", "--model", m, "--points", "11"]));
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 11);
    let mid = num(&rows[5][1]);
    assert!((mid - 1.0 / std::f64::consts::PI).abs() < 1e-6);
    let out = stdout(&run(&["lsd", "--model", m, "--f", "poly:0,0,1", "--nodes", "64"]));
    assert!((num(&data_rows(&out)[0][1]) - 1.0).abs() < 1e-8);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let unit = write(dir.path(), "unit.json", UNIT);
    let u = unit.to_str().unwrap();
    let bad = write(dir.path(), "bad.json", r#"{"k": 1, "sizes": [5], "q2": [[-1.0]], "q3": [[0.0]], "q4": [[0.0]]}"#);

    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(run(&["theory", "--model", bad.to_str().unwrap(), "--f", "exp"])), 2);
    assert_eq!(code(run(&["theory", "--model", u, "--f", "x^2"])), 2);
    assert_eq!(code(run(&["theory", "--model", u, "--f", "fn:sin"])), 2);
    assert_eq!(code(run(&["theory", "--model", u, "--f", "exp", "--nodes", "100"])), 2);
    assert_eq!(code(run(&["simulate", "--model", u, "--f", "exp", "--nr", "4", "--seed", "1"])), 2);
    assert_eq!(code(run(&["theory", "--model", "/nonexistent/model.json", "--f", "exp"])), 4);
    assert_eq!(code(run(&["oracle", "--model", u, "--n", "10", "--k", "6"])), 2);
    assert_eq!(code(run(&["frobnicate"])), 2);
    let threads = bin().args(["oracle", "--model", u, "--n", "10", "--k", "2"]).env("SPECTRAL_CLT_THREADS", "zero").output().unwrap();
    assert_eq!(code(threads), 2);
}
