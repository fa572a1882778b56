use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aefrc::eval::ExperimentReport;
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn aefrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aefrc"))
        .args(args)
        .env_remove("AEFRC_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn iris_config(dir: &Path) -> PathBuf {
    write_config(
        dir,
        &format!(
            "[data]\npath = {:?}\n[cv]\nk = 3\nseed = 5\n[pipeline]\nhidden = [3]\nseed = 2\n[pipeline.ae]\nrho = 0.3\n[output]\ndir = {:?}\n",
            data("iris.csv"),
            dir.join("out")
        ),
    )
}

fn run_ok(args: &[&str]) -> Output {
    let o = aefrc(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    o
}

#[test]
fn run_writes_report_model_and_listing() {
    let dir = TempDir::new().unwrap();
    let cfg = iris_config(dir.path());
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--trace"]);
    let out = dir.path().join("out");
    for f in ["run.toml", "experiment.json", "report.json", "model.json", "rules.json", "rules.txt", "trace.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = ExperimentReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.dataset, "iris");
    assert_eq!(report.folds.len(), 3);
    assert_eq!(report.summary.valid_folds, 3);
    assert_eq!(report.architecture, vec![4, 3]);
    let listing = fs::read_to_string(out.join("rules.txt")).unwrap();
    assert!(listing.contains("R1: IF h1 is MF"));
    assert!(fs::read_to_string(out.join("trace.csv")).unwrap().starts_with("iteration,cost"));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let cfg = iris_config(dir.path());
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--rho", "0.6", "--seed", "9"]);
    let out = dir.path().join("out");
    let first = ExperimentReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(first.rho, 0.6);
    assert_eq!(first.config.seed, 9);

    let again = dir.path().join("again");
    run_ok(&[
        "run",
        "--config",
        out.join("run.toml").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
        "--jobs",
        "1",
    ]);
    let second = ExperimentReport::from_json(&fs::read_to_string(again.join("report.json")).unwrap()).unwrap();
    assert_eq!(first.without_timings(), second.without_timings());
    assert_eq!(
        fs::read_to_string(out.join("model.json")).unwrap(),
        fs::read_to_string(again.join("model.json")).unwrap()
    );
}

#[test]
fn sweep_reports_every_target() {
    let dir = TempDir::new().unwrap();
    let cfg = iris_config(dir.path());
    let o = run_ok(&["run", "--config", cfg.to_str().unwrap(), "--rho-grid", "0.2,0.8"]);
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("rho ")).count(), 2);
    let exp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/experiment.json")).unwrap()).unwrap();
    assert_eq!(exp["reports"].as_array().unwrap().len(), 2);
    assert!(exp["best_rho"].is_number());
    assert_eq!(exp["config"]["cv"]["rho_grid"], serde_json::json!([0.2, 0.8]));
}

#[test]
fn expert_knowledge_switches_preprocessing() {
    let dir = TempDir::new().unwrap();
    let cfg = iris_config(dir.path());
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--expert",
        data("iris_expert.toml").to_str().unwrap(),
    ]);
    let report = ExperimentReport::from_json(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert!(report.expert);
    assert_eq!(report.architecture, vec![13, 3]);
}

#[test]
fn missing_dataset_is_a_data_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "[data]\npath = \"no_such_file.csv\"\n");
    let o = aefrc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no_such_file.csv"), "{}", stderr(&o));
}

#[test]
fn data_dir_resolves_relative_paths() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "[data]\npath = \"iris.csv\"\n[cv]\nk = 2\n[pipeline]\nhidden = [2]\n[output]\ndir = {:?}\n",
            dir.path().join("out")
        ),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_aefrc"))
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("AEFRC_DATA_DIR", data(""))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn invalid_config_lists_every_violation() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "[data]\npath = \"x.csv\"\nlabl = 1\n[cv]\nk = 1\n[pipeline]\nhidden = [0]\nstrategy = \"ft4\"\n[pipeline.ae]\nrho = 2.0\n[pipeline.ft4]\nzeta = -1.0\n",
    );
    let o = aefrc(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    for needle in ["data.labl", "cv.k", "pipeline.hidden", "pipeline.ae.rho", "pipeline.ft4.zeta"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(aefrc(&["run"]).status.code(), Some(1));
    assert_eq!(aefrc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(aefrc(&["--help"]).status.code(), Some(0));
    let dir = TempDir::new().unwrap();
    let cfg = iris_config(dir.path());
    let o = aefrc(&["run", "--config", cfg.to_str().unwrap(), "--strategy", "ft9"]);
    assert_eq!(o.status.code(), Some(1));
}

/// Cross-validates with a stored fold plan so the best fold's training rows
/// are known, then checks that predicting them reproduces the stored
/// training accuracy.
#[test]
fn predict_on_training_rows_matches_stored_accuracy() {
    let dir = TempDir::new().unwrap();
    let folds = dir.path().join("folds.txt");
    run_ok(&[
        "folds",
        "export",
        "--data",
        data("iris.csv").to_str().unwrap(),
        "--k",
        "3",
        "--seed",
        "5",
        "--out",
        folds.to_str().unwrap(),
    ]);
    let cfg = iris_config(dir.path());
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--fold-file", folds.to_str().unwrap()]);
    let out = dir.path().join("out");
    let report = ExperimentReport::from_json(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let best = report
        .folds
        .iter()
        .fold(None::<(usize, f64)>, |b, f| match (b, f.accuracy) {
            (Some((_, ba)), Some(a)) if a <= ba => b,
            (_, Some(a)) => Some((f.fold, a)),
            (b, None) => b,
        })
        .unwrap()
        .0;

    let assignments: Vec<usize> = fs::read_to_string(&folds)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.trim().parse().unwrap())
        .collect();
    let iris = fs::read_to_string(data("iris.csv")).unwrap();
    let mut lines = iris.lines();
    let mut train = format!("{}\n", lines.next().unwrap());
    for (line, &f) in lines.zip(&assignments) {
        if f != best {
            train.push_str(line);
            train.push('\n');
        }
    }
    let train_path = dir.path().join("train.csv");
    fs::write(&train_path, train).unwrap();

    let o = run_ok(&[
        "predict",
        "--model",
        out.join("model.json").to_str().unwrap(),
        "--rules",
        out.join("rules.json").to_str().unwrap(),
        "--input",
        train_path.to_str().unwrap(),
        "--label",
        "class",
    ]);
    let stored = report.folds[best].train_accuracy.unwrap();
    let line = stderr(&o);
    let printed: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((printed - stored).abs() < 5e-5, "{line} vs {stored}");
    assert_eq!(stdout(&o).lines().count(), 1 + assignments.iter().filter(|&&f| f != best).count());
}

fn trained_model(dir: &Path) -> (PathBuf, PathBuf) {
    let cfg = iris_config(dir);
    run_ok(&["run", "--config", cfg.to_str().unwrap(), "--k", "2"]);
    (dir.join("out/model.json"), dir.join("out/rules.json"))
}

#[test]
fn predict_empty_input_prints_only_the_header() {
    let dir = TempDir::new().unwrap();
    let (model, rules) = trained_model(dir.path());
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = run_ok(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
        "--input",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(stdout(&o), "row,class,score_setosa,score_versicolor,score_virginica,tie\n");
}

#[test]
fn corrupted_model_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (model, rules) = trained_model(dir.path());
    let text = fs::read_to_string(&model).unwrap();
    fs::write(&model, &text[..text.len() / 2]).unwrap();
    let o = aefrc(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
        "--input",
        data("iris.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("format"), "{}", stderr(&o));

    fs::write(&model, text.replace("\"version\": 1", "\"version\": 7")).unwrap();
    let o = aefrc(&[
        "predict",
        "--model",
        model.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
        "--input",
        data("iris.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("version"), "{}", stderr(&o));
}

#[test]
fn stats_on_the_bundled_error_table() {
    let o = run_ok(&["stats", data("classifier_errors.csv").to_str().unwrap()]);
    let text = stdout(&o);
    assert!(text.contains("from ranks rounded to 2 decimals: 25.9242"), "{text}");
    assert!(text.contains("CD = 1.3822"), "{text}");
    assert!(text.contains("Proposed vs IVTURS"), "{text}");

    let o = run_ok(&["stats", data("classifier_errors.csv").to_str().unwrap(), "--json", "--q", "2.498"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["q"], 2.498);
    assert_eq!(v["control"], "Proposed");
}

#[test]
fn stats_handles_small_and_incomplete_tables() {
    let dir = TempDir::new().unwrap();
    let small = dir.path().join("small.csv");
    fs::write(&small, "dataset,a,b\nd1,0.1,0.2\nd2,0.3,0.2\n").unwrap();
    let o = run_ok(&["stats", small.to_str().unwrap()]);
    assert!(stdout(&o).contains("df = 1"), "{}", stdout(&o));

    let na = dir.path().join("na.csv");
    fs::write(&na, "dataset,a,b,c\nd1,0.1,0.2,0.3\nd2,0.3,NA,0.1\nd3,0.2,0.1,0.3\n").unwrap();
    let o = run_ok(&["stats", na.to_str().unwrap(), "--control", "a"]);
    assert!(stdout(&o).contains("d2,2,NA,1"), "{}", stdout(&o));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "dataset,a,b\nd1,0.1,oops\n").unwrap();
    let o = aefrc(&["stats", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn folds_round_trip() {
    let dir = TempDir::new().unwrap();
    let folds = dir.path().join("folds.txt");
    run_ok(&[
        "folds",
        "export",
        "--data",
        data("iris.csv").to_str().unwrap(),
        "--k",
        "5",
        "--out",
        folds.to_str().unwrap(),
    ]);
    let o = run_ok(&[
        "folds",
        "import",
        "--data",
        data("iris.csv").to_str().unwrap(),
        "--folds",
        folds.to_str().unwrap(),
        "--k",
        "5",
    ]);
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "fold,size,setosa,versicolor,virginica");
    assert!(text.lines().skip(1).all(|l| l.ends_with(",30,10,10,10")), "{text}");

    let o = aefrc(&[
        "folds",
        "import",
        "--data",
        data("breast_cancer.csv").to_str().unwrap(),
        "--folds",
        folds.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
