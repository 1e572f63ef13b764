use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str], config: &str) -> Output {
    let cfg = dir.join("run.conf");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_lqgraphon"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn col(rows: &[Vec<String>], c: usize) -> Vec<f64> {
    rows.iter().map(|r| r[c].parse().unwrap()).collect()
}

#[test]
fn cosine_spectrum_has_two_half_eigenvalues() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.csv");
    let o = run(dir.path(), &["spectrum", "--out", out.to_str().unwrap()], "N = 16\ngraphon = cosine\n");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    assert_eq!(r.len(), 2);
    for v in col(&r, 2) {
        assert!((v - 0.5).abs() < 1e-12);
    }
    assert_eq!(rows(&dir.path().join("spec_vectors.csv")).len(), 32);
}

#[test]
fn zero_graphon_has_empty_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spec.csv");
    let o = run(dir.path(), &["spectrum", "--out", out.to_str().unwrap()], "graphon = zero\n");
    assert!(o.status.success());
    assert!(rows(&out).is_empty());
}

#[test]
fn malformed_matrix_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.txt"), "2\n0 0.5\n0.5 oops\n").unwrap();
    let o = run(dir.path(), &["spectrum"], "graphon = m.txt\n");
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("m.txt:3:"), "{err}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["spectrum"], "N = 4\nbogus = 1\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run.conf:2:"));
    let o = run(dir.path(), &["converge"], "correlation = identity\nlimit_q = constant-kernel\nd = 2\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gap_ladder_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gap.csv");
    let o = run(dir.path(), &["gap", "--out", out.to_str().unwrap()], "N = 8, 16\n");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let gaps = col(&rows(&out), 3);
    assert_eq!(gaps.len(), 2);
    assert!(gaps[1] < gaps[0]);
}

#[test]
fn costless_problem_has_zero_gap() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gap.csv");
    let o = run(dir.path(), &["gap", "--out", out.to_str().unwrap()], "Q = 0\nQ_T = 0\nN = 4 8\ndt = 0.01\n");
    assert_eq!(o.status.code(), Some(0));
    assert!(col(&rows(&out), 3).iter().all(|g| *g == 0.0));
}

#[test]
fn single_size_gap_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gap.csv");
    let o = run(dir.path(), &["gap", "--out", out.to_str().unwrap(), "--dt", "0.01"], "N = 4\n");
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(rows(&out).len(), 1);
}

#[test]
fn converge_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conv.csv");
    let o = run(dir.path(), &["converge", "--out", out.to_str().unwrap()], "N = 8 16 32\n");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    for (n, t1) in col(&r, 0).iter().zip(col(&r, 2)) {
        assert!(t1 <= 2.0 * std::f64::consts::PI.powi(2) / (n * n));
    }
    let op = col(&r, 1);
    assert!(op[2] < op[0]);

    let out = dir.path().join("dc.csv");
    let cfg = "N = 8 16\ncorrelation = double-constant\nlimit_q = constant-kernel\nd = 1\n";
    let o = run(dir.path(), &["converge", "--out", out.to_str().unwrap()], cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    for (n, t2) in col(&r, 0).iter().zip(col(&r, 3)) {
        let expect = (n - 1.0) / (2.0 * n * n);
        assert!((t2 - expect).abs() <= 1e-12 * expect);
    }
}

#[test]
fn riccati_table_shape_and_ladder_rejection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ric.csv");
    let o = run(dir.path(), &["riccati", "--out", out.to_str().unwrap(), "--dt", "0.01"], "N = 8\n");
    assert!(o.status.success());
    let mut rdr = csv::Reader::from_path(&out).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "perp", "mode_1", "mode_2"]);
    assert_eq!(rdr.records().count(), 101);
    let o = run(dir.path(), &["riccati"], "N = 8 16\n");
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "N = 6\ndt = 0.01\nreplicas = 40\nlaw = decentralized\ntrajectories = true\n";
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let o = run(dir.path(), &["simulate", "--seed", "7"], cfg);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            o.stdout
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.contains("# agents") && text.contains("# trajectories"));
    let other = run(dir.path(), &["simulate", "--seed", "8"], cfg).stdout;
    assert_ne!(other, outputs[0]);
}
