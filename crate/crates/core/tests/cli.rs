mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use subsplit::data::{read_labels_csv, read_points_csv};
use subsplit::eval::{read_trace_csv, Difficulty};
use subsplit::sampler::split_log_hastings;
use subsplit::st::{StMeta, StWeights};
use tempfile::TempDir;

fn subsplit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subsplit")).args(args).output().unwrap()
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn gen_k3(dir: &TempDir) -> (String, String) {
    let (data, labels) = (p(dir, "d.csv"), p(dir, "l.csv"));
    let out = subsplit(&[
        "gen",
        "--k",
        "3",
        "--d",
        "2",
        "--n",
        "600",
        "--seed",
        "4",
        "--out-data",
        &data,
        "--out-labels",
        &labels,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    (data, labels)
}

#[test]
fn fit_writes_labels_and_trace() {
    let dir = TempDir::new().unwrap();
    let (data, gt) = gen_k3(&dir);
    let (labels, trace) = (p(&dir, "out.csv"), p(&dir, "trace.csv"));
    let out = subsplit(&[
        "fit",
        "--data",
        &data,
        "--alpha",
        "1",
        "--iters",
        "200",
        "--split-init",
        "kmeans",
        "--seed",
        "7",
        "--out-labels",
        &labels,
        "--trace",
        &trace,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_labels_csv(Path::new(&labels)).unwrap().len(), 600);
    let rows = read_trace_csv(Path::new(&trace)).unwrap();
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r.nmi.is_none()));

    // ground truth adds the agreement columns
    let out = subsplit(&["fit", "--data", &data, "--iters", "20", "--gt-labels", &gt, "--trace", &trace]);
    assert_eq!(out.status.code(), Some(0));
    let rows = read_trace_csv(Path::new(&trace)).unwrap();
    assert!(rows.iter().all(|r| r.nmi.is_some() && r.ari.is_some() && r.k_mae.is_some()));
}

#[test]
fn fit_is_deterministic_with_one_thread() {
    let dir = TempDir::new().unwrap();
    let (data, _) = gen_k3(&dir);
    let run = |name: &str| {
        let labels = p(&dir, name);
        let out = subsplit(&[
            "fit",
            "--data",
            &data,
            "--iters",
            "30",
            "--seed",
            "3",
            "--threads",
            "1",
            "--out-labels",
            &labels,
        ]);
        assert_eq!(out.status.code(), Some(0));
        (fs::read(&labels).unwrap(), out.stdout)
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn missing_data_is_a_usage_error() {
    let out = subsplit(&["fit", "--iters", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn splitnet_needs_weights() {
    let dir = TempDir::new().unwrap();
    let (data, _) = gen_k3(&dir);
    let out = subsplit(&["fit", "--data", &data, "--split-init", "splitnet"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_strategy_and_bad_values_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let (data, _) = gen_k3(&dir);
    assert_eq!(subsplit(&["fit", "--data", &data, "--split-init", "bogus"]).status.code(), Some(2));
    assert_eq!(subsplit(&["fit", "--data", &data, "--alpha", "-1"]).status.code(), Some(2));
    assert_eq!(subsplit(&["fit", "--data", &data, "--split-period", "0"]).status.code(), Some(2));
    assert_eq!(subsplit(&["fit", "--data", &data, "--prior-nu", "0.5"]).status.code(), Some(2));
}

#[test]
fn data_problems_exit_3() {
    let dir = TempDir::new().unwrap();
    assert_eq!(subsplit(&["fit", "--data", &p(&dir, "missing.csv")]).status.code(), Some(3));
    let bad = p(&dir, "bad.csv");
    fs::write(&bad, "1.0,2.0\n3.0,oops\n").unwrap();
    assert_eq!(subsplit(&["fit", "--data", &bad]).status.code(), Some(3));
    let ragged = p(&dir, "ragged.csv");
    fs::write(&ragged, "1.0,2.0\n3.0\n").unwrap();
    assert_eq!(subsplit(&["fit", "--data", &ragged]).status.code(), Some(3));
    let (data, _) = gen_k3(&dir);
    let short = p(&dir, "short.csv");
    fs::write(&short, "0\n1\n").unwrap();
    assert_eq!(subsplit(&["fit", "--data", &data, "--gt-labels", &short]).status.code(), Some(3));
}

#[test]
fn numerical_failure_exits_4() {
    let dir = TempDir::new().unwrap();
    let huge = p(&dir, "huge.csv");
    fs::write(&huge, "1e155,0\n-1e155,1\n3e154,2\n5,5\n").unwrap();
    let out = subsplit(&["fit", "--data", &huge, "--iters", "3"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical failure"));
}

#[test]
fn splitnet_weights_drive_the_fit() {
    let dir = TempDir::new().unwrap();
    let (data, _) = gen_k3(&dir);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w2 = p(&dir, "w2.bin");
    StWeights::random(StMeta::default_for_dim(2), &mut rng, 1.0).unwrap().save(Path::new(&w2)).unwrap();
    let out = subsplit(&[
        "fit",
        "--data",
        &data,
        "--iters",
        "10",
        "--split-init",
        "splitnet",
        "--splitnet-weights",
        &w2,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let w3 = p(&dir, "w3.bin");
    StWeights::random(StMeta::default_for_dim(3), &mut rng, 1.0).unwrap().save(Path::new(&w3)).unwrap();
    let out = subsplit(&[
        "fit",
        "--data",
        &data,
        "--iters",
        "10",
        "--split-init",
        "splitnet",
        "--splitnet-weights",
        &w3,
    ]);
    assert_eq!(out.status.code(), Some(3));

    let junk = p(&dir, "junk.bin");
    fs::write(&junk, b"not a weight file").unwrap();
    let out = subsplit(&["fit", "--data", &data, "--split-init", "splitnet", "--splitnet-weights", &junk]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn gen_single_component_and_determinism() {
    let dir = TempDir::new().unwrap();
    let run = |tag: &str, seed: &str| {
        let (d, l) = (p(&dir, &format!("d{tag}.csv")), p(&dir, &format!("l{tag}.csv")));
        let out = subsplit(&[
            "gen",
            "--k",
            "1",
            "--d",
            "3",
            "--n",
            "50",
            "--seed",
            seed,
            "--out-data",
            &d,
            "--out-labels",
            &l,
        ]);
        assert_eq!(out.status.code(), Some(0));
        (fs::read(d).unwrap(), fs::read(l).unwrap())
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a.0, run("c", "6").0);
    let points = read_points_csv(&dir.path().join("da.csv")).unwrap();
    assert_eq!((points.n(), points.dim()), (50, 3));
    assert!(read_labels_csv(&dir.path().join("la.csv")).unwrap().iter().all(|&l| l == 0));
}

#[test]
fn gen_rejects_invalid_specs() {
    let dir = TempDir::new().unwrap();
    let d = p(&dir, "d.csv");
    assert_eq!(subsplit(&["gen", "--k", "5", "--n", "3", "--out-data", &d]).status.code(), Some(2));
    assert_eq!(subsplit(&["gen", "--k", "0", "--out-data", &d]).status.code(), Some(2));
    assert_eq!(subsplit(&["gen", "--alpha-dir", "0", "--out-data", &d]).status.code(), Some(2));
}

#[test]
fn gen_splittable_pair_passes_the_filter() {
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        let (d, l) = (p(&dir, "pd.csv"), p(&dir, "pl.csv"));
        let out = subsplit(&[
            "gen",
            "--splittable-pair",
            "--difficulty",
            "medium",
            "--d",
            "2",
            "--n",
            "120",
            "--alpha-dir",
            "1",
            "--seed",
            &seed.to_string(),
            "--out-data",
            &d,
            "--out-labels",
            &l,
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let points = read_points_csv(Path::new(&d)).unwrap();
        let labels = read_labels_csv(Path::new(&l)).unwrap();
        let left = common::stats_where(&points, |i| labels[i] == 0);
        let right = common::stats_where(&points, |i| labels[i] == 1);
        let prior = Difficulty::Medium.niw(2);
        assert!(split_log_hastings(&(&left + &right), &left, &right, 1.0, &prior).unwrap() > 1.0);
    }
}

fn eval_split_rows(args: &[&str]) -> Vec<(String, f64)> {
    let out = subsplit(args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["pair", "strategy", "n", "accuracy", "log_h"]
    );
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[1].to_string(), r[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn eval_split_easy_pairs() {
    let rows = eval_split_rows(&["eval-split", "--difficulty", "easy", "--pairs", "40", "--seed", "2"]);
    assert_eq!(rows.len(), 80);
    let acc = |name: &str| common::median(rows.iter().filter(|r| r.0 == name).map(|r| r.1).collect());
    assert!(acc("kmeans") >= 0.95, "kmeans {}", acc("kmeans"));
    let random = acc("random");
    assert!((0.5..0.6).contains(&random), "random {random}");
}

#[test]
fn eval_split_writes_one_row_per_pair() {
    let dir = TempDir::new().unwrap();
    let out_path = p(&dir, "split.csv");
    let out = subsplit(&["eval-split", "--pairs", "7", "--strategies", "kmeans", "--out", &out_path]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(out_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 7);
    let out = subsplit(&["eval-split", "--strategies", "splitnet"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_writes_traces() {
    let dir = TempDir::new().unwrap();
    let suite = p(&dir, "suite.toml");
    fs::write(
        &suite,
        r#"
iters = 8
seeds = [1, 2, 3]
strategies = ["random", "kmeans"]

[[dataset]]
name = "small"
k = 3
d = 2
n = 300
"#,
    )
    .unwrap();
    let out_dir = p(&dir, "out");
    let out = subsplit(&["bench", "--suite", &suite, "--out-dir", &out_dir]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let traces = fs::read_dir(Path::new(&out_dir).join("traces")).unwrap().count();
    assert_eq!(traces, 6);
    assert!(Path::new(&out_dir).join("summary.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("small kmeans"));

    assert_eq!(
        subsplit(&["bench", "--suite", &p(&dir, "nope.toml"), "--out-dir", &out_dir]).status.code(),
        Some(2)
    );
    fs::write(&suite, "iters = \"many\"\n").unwrap();
    assert_eq!(subsplit(&["bench", "--suite", &suite, "--out-dir", &out_dir]).status.code(), Some(2));
}

#[test]
fn help_exits_cleanly() {
    let out = subsplit(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for cmd in ["fit", "gen", "eval-split", "bench"] {
        assert!(String::from_utf8_lossy(&out.stdout).contains(cmd));
    }
}
