use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn misclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_misclust"))
        .args(args)
        .output()
        .expect("run misclust")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

// two well separated blobs, deterministic, with a binary outcome and a label column
fn blobs_csv(dir: &Path, with_event: bool) -> PathBuf {
    let mut s = String::from(if with_event { "x1,x2,y,time,event,label\n" } else { "x1,x2,y,time,label\n" });
    for i in 0..120 {
        let class = i % 2;
        let cx = if class == 0 { -4.0 } else { 4.0 };
        let jitter = ((i * 37) % 11) as f64 / 11.0 - 0.5;
        let y = u8::from((i * 7) % 5 < 2 + class * 2);
        let time = 1.0 + ((i * 13) % 17) as f64 / (1.0 + class as f64);
        write!(s, "{},{},{},{}", cx + jitter, jitter * 0.7, y, time).unwrap();
        if with_event {
            write!(s, ",{}", u8::from(i % 4 != 0)).unwrap();
        }
        writeln!(s, ",{}", class + 1).unwrap();
    }
    let p = dir.join("data.csv");
    fs::write(&p, s).unwrap();
    p
}

#[test]
fn cluster_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = blobs_csv(dir.path(), true);
    let out = dir.path().join("out");
    let o = misclust(&["cluster", "--input", path_str(&input), "--m", "2", "--seed", "4", "--output-dir", path_str(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["model.txt", "labels.csv", "report.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let labels = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 121);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.is_object());
}

#[test]
fn cluster_is_deterministic_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let input = blobs_csv(dir.path(), true);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = misclust(&["cluster", "--input", path_str(&input), "--m", "2", "--method", "kmeans", "--seed", "9", "--output-dir", path_str(&out)]);
        assert!(o.status.success());
        (fs::read_to_string(out.join("labels.csv")).unwrap(), fs::read_to_string(out.join("model.txt")).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn zero_components_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = blobs_csv(dir.path(), true);
    let o = misclust(&["cluster", "--input", path_str(&input), "--m", "0", "--output-dir", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn correct_with_identity_pi_returns_naive() {
    let dir = tempfile::tempdir().unwrap();
    let input = blobs_csv(dir.path(), true);
    let pi = dir.path().join("pi.csv");
    fs::write(&pi, "col_1,col_2\n1,0\n0,1\n").unwrap();
    let out = dir.path().join("out");
    let o = misclust(&[
        "correct", "--input", path_str(&input), "--pi", path_str(&pi), "--family", "logistic", "--B", "5",
        "--output-dir", path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let naive = report["naive"]["coefficients"].as_array().unwrap();
    let corrected = report["corrected"].as_array().unwrap();
    for (a, b) in naive.iter().zip(corrected) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-8);
    }
    assert!(out.join("curve.csv").exists());
}

#[test]
fn cox_without_event_column_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let input = blobs_csv(dir.path(), false);
    let pi = dir.path().join("pi.csv");
    fs::write(&pi, "col_1,col_2\n0.9,0.1\n0.1,0.9\n").unwrap();
    let o = misclust(&[
        "correct", "--input", path_str(&input), "--pi", path_str(&pi), "--family", "cox", "--output-dir",
        path_str(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("'event'"));
}

#[test]
fn bench_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = misclust(&[
        "bench", "--scenario", "table3_cox", "--replications", "2", "--B", "5", "--n", "100", "--output-dir",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("scenario_id,method,coefficient,bias,mse,coverage,mc_se,n_reps"));
    // three misclassification rates times three methods
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(out.join("metrics.txt").exists());
}

#[test]
fn bench_rejects_unknown_config_key() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "name = bad\nfamily = cox\nn = 100\nreplications = 2\nwobble = 3\n").unwrap();
    let o = misclust(&["bench", "--scenario", path_str(&conf), "--output-dir", path_str(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("wobble"));
}
