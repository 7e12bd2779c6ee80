//! End-to-end checks of the `gksg` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gksg::experiment::ExperimentResult;
use gksg::io::{read_matrix_file, DatasetMeta, EstimateRecord};
use serde_json::Value;

fn gksg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gksg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn gksg_threads(threads: &str, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gksg"))
        .env("GKSG_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn record(o: &Output) -> EstimateRecord {
    assert_eq!(code(o), 0, "{}", stderr(o));
    serde_json::from_slice(&o.stdout).expect("estimate record")
}

#[test]
fn gen_writes_dataset_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sphere.csv");
    let o = gksg(&["gen", "sphere", "--n", "50", "--noise-dims", "20", "--seed", "4", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let (names, data) = read_matrix_file(&out).unwrap();
    assert_eq!((data.n_rows(), data.n_cols()), (50, 25));
    assert_eq!(names.iter().filter(|n| n.starts_with('x')).count(), 12);
    assert_eq!(names.iter().filter(|n| n.starts_with('y')).count(), 13);

    let meta: DatasetMeta =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sphere.csv.meta.json")).unwrap()).unwrap();
    assert_eq!((meta.x_cols.len(), meta.y_cols.len(), meta.n), (12, 13, 50));
    assert_eq!(meta.generator.seed, 4);
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = gksg(&["gen", "uniform-linear", "--n", "300", "--seed", "9", "--out", path_str(p)]);
        assert_eq!(code(&o), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let stdout = gksg(&["gen", "uniform-linear", "--n", "300", "--seed", "9"]);
    assert_eq!(stdout.stdout, fs::read(&a).unwrap());
    let other = gksg(&["gen", "uniform-linear", "--n", "300", "--seed", "10"]);
    assert_ne!(other.stdout, stdout.stdout);
}

#[test]
fn gen_rejects_bad_arguments() {
    assert_eq!(code(&gksg(&["gen", "gaussian", "--n", "100", "--rho", "1.5"])), 1);
    assert_eq!(code(&gksg(&["gen", "gaussian", "--n", "100", "--noise-dims", "3"])), 1);
    assert_eq!(code(&gksg(&["gen", "torus", "--n", "100"])), 1);
    assert_eq!(code(&gksg(&["gen", "gaussian"])), 1);
    assert_eq!(code(&gksg(&["--help"])), 0);
}

#[test]
fn estimate_prints_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g.csv");
    assert_eq!(code(&gksg(&["gen", "gaussian", "--n", "400", "--seed", "2", "--out", path_str(&data)])), 0);

    let ksg = record(&gksg(&["estimate", "--in", path_str(&data), "--method", "ksg"]));
    assert_eq!((ksg.k, ksg.n, ksg.d_x, ksg.d_y, ksg.seed), (5, 400, 1, 1, None));
    assert!((ksg.estimate_nats - 0.8304).abs() < 0.3);

    let explicit = record(&gksg(&[
        "estimate", "--in", path_str(&data), "--method", "ksg", "--x-cols", "x0", "--y-cols", "1",
    ]));
    assert_eq!(explicit.estimate_nats, ksg.estimate_nats);

    let g = record(&gksg(&["estimate", "--in", path_str(&data), "--trees", "50", "--seed", "3"]));
    assert_eq!(g.seed, Some(3));
    assert!(g.estimate_nats.is_finite());

    let raw: Value = serde_json::from_slice(&gksg(&["estimate", "--in", path_str(&data), "--method", "ksg"]).stdout).unwrap();
    for key in ["method", "k", "n", "d_x", "d_y", "estimate_nats", "mean_n_x", "mean_n_y", "seed", "elapsed_seconds"] {
        assert!(raw.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn estimate_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("u.csv");
    assert_eq!(code(&gksg(&["gen", "uniform-linear", "--n", "300", "--seed", "5", "--out", path_str(&data)])), 0);
    let args = ["estimate", "--in", path_str(&data), "--trees", "40", "--seed", "8"];
    let runs: Vec<EstimateRecord> = ["1", "3", "1"]
        .iter()
        .map(|t| {
            let mut r = record(&gksg_threads(t, &args));
            r.elapsed_seconds = 0.0;
            r
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    assert_eq!(code(&gksg_threads("0", &args)), 1);
}

#[test]
fn forest_cache_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("h.csv");
    let cache = dir.path().join("forest.json");
    assert_eq!(code(&gksg(&["gen", "helix", "--n", "200", "--seed", "1", "--out", path_str(&data)])), 0);
    let args = ["estimate", "--in", path_str(&data), "--trees", "20", "--forest-cache", path_str(&cache)];
    let mut first = record(&gksg(&args));
    assert!(cache.exists());
    let mut second = record(&gksg(&args));
    first.elapsed_seconds = 0.0;
    second.elapsed_seconds = 0.0;
    assert_eq!(first, second);

    let other = dir.path().join("other.csv");
    assert_eq!(code(&gksg(&["gen", "helix", "--n", "150", "--seed", "1", "--out", path_str(&other)])), 0);
    let o = gksg(&["estimate", "--in", path_str(&other), "--forest-cache", path_str(&cache)]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn estimate_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g.csv");
    assert_eq!(code(&gksg(&["gen", "gaussian", "--n", "50", "--out", path_str(&data)])), 0);

    let overlap = gksg(&["estimate", "--in", path_str(&data), "--x-cols", "0", "--y-cols", "0,1"]);
    assert_eq!(code(&overlap), 1);
    assert!(stderr(&overlap).contains("overlap"));
    assert_eq!(code(&gksg(&["estimate", "--in", path_str(&data), "--x-cols", "0"])), 1);
    assert_eq!(code(&gksg(&["estimate", "--in", path_str(&data), "--k", "0"])), 1);
    assert_eq!(code(&gksg(&["estimate", "--in", path_str(&data), "--k", "50"])), 1);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "x0,y0\n1.0,2.0\n3.0,oops\n").unwrap();
    assert_eq!(code(&gksg(&["estimate", "--in", path_str(&bad)])), 2);
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "x0,y0\n1.0,2.0\n3.0\n").unwrap();
    assert_eq!(code(&gksg(&["estimate", "--in", path_str(&ragged)])), 2);

    let constant = dir.path().join("const.csv");
    fs::write(&constant, format!("x0,y0\n{}", "1.5,-2\n".repeat(30))).unwrap();
    for method in ["ksg", "gksg"] {
        let o = gksg(&["estimate", "--in", path_str(&constant), "--method", method, "--trees", "5"]);
        assert_eq!(code(&o), 3, "{method}: {}", stderr(&o));
    }

    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&gksg(&["estimate", "--in", path_str(&missing)])), 4);
}

const SMALL_BENCH: &str = r#"
n = [60]
noise_dims = [0, 2]
k = [3]
methods = ["ksg", "gksg"]
repetitions = 2
master_seed = 3

[[families]]
family = "gaussian"
rho = 0.5

[[families]]
family = "uniform-linear"

[forest]
trees = 10
"#;

#[test]
fn bench_csv_and_json_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(&cfg, SMALL_BENCH).unwrap();
    let csv_out = dir.path().join("out.csv");
    let json_out = dir.path().join("out.json");
    assert_eq!(code(&gksg(&["bench", "--config", path_str(&cfg), "--out", path_str(&csv_out)])), 0);
    assert_eq!(
        code(&gksg(&["bench", "--config", path_str(&cfg), "--format", "json", "--out", path_str(&json_out)])),
        0
    );
    let from_csv = ExperimentResult::read_csv(fs::File::open(&csv_out).unwrap()).unwrap();
    let from_json: ExperimentResult = serde_json::from_str(&fs::read_to_string(&json_out).unwrap()).unwrap();
    assert_eq!(from_csv.rows.len(), 8);
    for (a, b) in from_csv.rows.iter().zip(&from_json.rows) {
        assert_eq!(
            (&a.family, a.n, a.d_noise, a.method, a.k, a.mean, a.stddev, a.mse, a.truth, a.failures),
            (&b.family, b.n, b.d_noise, b.method, b.k, b.mean, b.stddev, b.mse, b.truth, b.failures)
        );
    }
}

#[test]
fn bench_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");

    fs::write(&cfg, SMALL_BENCH.replace("n = [60]", "n = []")).unwrap();
    let o = gksg(&["bench", "--config", path_str(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("`n`"), "{}", stderr(&o));

    fs::write(&cfg, SMALL_BENCH.replace("methods = [\"ksg\", \"gksg\"]", "methods = []")).unwrap();
    let o = gksg(&["bench", "--config", path_str(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("methods"), "{}", stderr(&o));

    fs::write(&cfg, format!("{SMALL_BENCH}\nunknown_key = 1\n").replacen("[forest]\ntrees = 10\n", "", 1)).unwrap();
    assert_eq!(code(&gksg(&["bench", "--config", path_str(&cfg)])), 1);

    assert_eq!(code(&gksg(&["bench", "--config", path_str(&dir.path().join("none.toml"))])), 4);
}
