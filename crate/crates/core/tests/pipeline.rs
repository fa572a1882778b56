use std::path::{Path, PathBuf};

use aefrc::dataset::{self, load_csv, stratified_kfold, CsvSchema, FoldPlan};
use aefrc::eval;
use aefrc::mf::ExpertKnowledge;
use aefrc::pipeline::{self, Model, PipelineConfig, Strategy};
use aefrc::stats::RankTable;
use aefrc::{Dataset, Execution, OptimizerConfig};
use tempfile::TempDir;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn iris() -> Dataset {
    load_csv(data("iris.csv"), &CsvSchema::default()).unwrap()
}

fn quick(strategy: Strategy) -> PipelineConfig {
    PipelineConfig {
        hidden: vec![3],
        strategy,
        optimizer: OptimizerConfig {
            max_iters: 80,
            ..OptimizerConfig::default()
        },
        seed: 4,
        ..PipelineConfig::default()
    }
}

#[test]
fn stored_model_classifies_like_the_trained_one() {
    let ds = iris();
    let trained = pipeline::train(&ds, &quick(Strategy::Ft1), None).unwrap();
    let dir = TempDir::new().unwrap();
    let (m, r) = (dir.path().join("model.json"), dir.path().join("rules.json"));
    trained.model.save(&m, &r).unwrap();
    let loaded = Model::load(&m, &r).unwrap();
    assert_eq!(loaded, trained.model);
    assert_eq!(loaded.classify(ds.features()).unwrap(), trained.model.classify(ds.features()).unwrap());
    assert_eq!(loaded.accuracy(&ds).unwrap(), trained.model.train_accuracy);
}

#[test]
fn model_and_rule_base_from_different_runs_are_rejected() {
    let ds = iris();
    let a = pipeline::train(&ds, &quick(Strategy::Ft1), None).unwrap().model;
    let cfg = PipelineConfig {
        hidden: vec![2],
        ..quick(Strategy::Ft1)
    };
    let b = pipeline::train(&ds, &cfg, None).unwrap().model;
    assert!(Model::from_json(&a.model_json(), &b.rule_base_json()).is_err());
}

#[test]
fn cross_validation_is_identical_sequentially_and_in_parallel() {
    let ds = iris();
    let plan = stratified_kfold(&ds, 4, 3, false).unwrap();
    let cfg = quick(Strategy::Ft1);
    let seq = eval::run_cv(&ds, &plan, &cfg, None, Execution::Sequential).unwrap();
    let par = eval::run_cv(&ds, &plan, &cfg, None, Execution::Parallel).unwrap();
    assert_eq!(seq.report.without_timings(), par.report.without_timings());
    assert_eq!(seq.models, par.models);
}

#[test]
fn search_strategies_are_identical_sequentially_and_in_parallel() {
    let ds = iris().first_per_class(10);
    let mut cfg = quick(Strategy::Ft2);
    cfg.cmaes.max_evals = 60;
    let seq = {
        let mut c = cfg.clone();
        c.cmaes.execution = Execution::Sequential;
        pipeline::train(&ds, &c, None).unwrap().model
    };
    let par = pipeline::train(&ds, &cfg, None).unwrap().model;
    assert_eq!(seq, par);
}

#[test]
fn stored_folds_reproduce_the_generated_ones() {
    let ds = iris();
    let plan = stratified_kfold(&ds, 5, 9, false).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("folds.txt");
    plan.save(&path).unwrap();
    let back = FoldPlan::load(&path, Some(5)).unwrap();
    back.check_against(&ds).unwrap();
    assert_eq!(back.assignments(), plan.assignments());
    for f in 0..5 {
        let (train, test) = dataset::split(&ds, &back, f).unwrap();
        assert_eq!(test.class_counts(), vec![10, 10, 10]);
        assert_eq!(train.sample_count(), 120);
    }
}

#[test]
fn expert_pipeline_appends_expert_samples() {
    let ds = iris().first_per_class(15);
    let ek = ExpertKnowledge::load(data("iris_expert.toml")).unwrap();
    let trained = pipeline::train(&ds, &quick(Strategy::Ft1), Some(&ek)).unwrap();
    assert_eq!(trained.preprocessed.sample_count(), 90);
    assert_eq!(trained.preprocessed.feature_count(), 13);
    assert_eq!(trained.model.encoder.input_width(), 13);
    let full = iris();
    let acc = trained.model.accuracy(&full).unwrap();
    assert!(acc > 0.5, "{acc}");
}

#[test]
fn expert_file_survives_a_round_trip() {
    let ek = ExpertKnowledge::load(data("iris_expert.toml")).unwrap();
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("expert.toml");
    std::fs::write(&path, ek.to_toml()).unwrap();
    assert_eq!(ExpertKnowledge::load(&path).unwrap(), ek);
}

#[test]
fn every_strategy_trains_end_to_end() {
    let ds = iris().first_per_class(12);
    for strategy in [Strategy::None, Strategy::Ft1, Strategy::Ft2, Strategy::Ft3, Strategy::Ft4] {
        let mut cfg = quick(strategy);
        cfg.cmaes.max_evals = 40;
        cfg.ft3_inner.max_iters = 10;
        let t = pipeline::train(&ds, &cfg, None).unwrap();
        assert!(t.model.rule_base.rule_count() >= 1, "{strategy:?}");
        assert!((0.0..=1.0).contains(&t.model.train_accuracy), "{strategy:?}");
    }
}

#[test]
fn rank_table_file_loads() {
    let t = RankTable::load(data("classifier_errors.csv")).unwrap();
    assert_eq!(t.method_count(), 5);
    assert_eq!(t.dataset_count(), 15);
    assert_eq!(t.ranks.iter().flatten().filter(|r| r.is_none()).count(), 1);
}
