//! Sequential against data-parallel execution for the two hot loops: the
//! FT-II candidate population and cross-validation folds.

use std::hint::black_box;
use std::path::Path;

use aefrc::dataset::{load_csv, stratified_kfold, CsvSchema};
use aefrc::eval;
use aefrc::finetune;
use aefrc::mf;
use aefrc::network;
use aefrc::pipeline::{PipelineConfig, Strategy};
use aefrc::{CmaesConfig, Dataset, Execution, OptimizerConfig, RuleBaseOptions};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn iris() -> Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
    load_csv(path, &CsvSchema::default()).expect("bundled dataset")
}

fn ft2_population(c: &mut Criterion) {
    let ds = iris();
    let xp = mf::preprocess(&ds, &mf::fit_ramp_spec(&ds).unwrap()).unwrap();
    let opt = OptimizerConfig {
        max_iters: 100,
        ..OptimizerConfig::default()
    };
    let net = network::stack(xp.features(), &[4], &Default::default(), &opt, 3).unwrap();
    let mut group = c.benchmark_group("ft2_population");
    group.sample_size(10);
    for (name, execution) in MODES {
        let cma = CmaesConfig {
            population: Some(16),
            max_evals: 160,
            tol_fitness: 0.0,
            execution,
            ..CmaesConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &cma, |b, cma| {
            b.iter(|| {
                finetune::ft2(&net, xp.features(), xp.labels(), xp.class_count(), RuleBaseOptions::default(), cma)
                    .unwrap()
            })
        });
    }
    group.finish();
}

fn cross_validation(c: &mut Criterion) {
    let ds = iris();
    let plan = stratified_kfold(&ds, 5, 7, false).unwrap();
    let cfg = PipelineConfig {
        strategy: Strategy::Ft1,
        optimizer: OptimizerConfig {
            max_iters: 100,
            ..OptimizerConfig::default()
        },
        ..PipelineConfig::default()
    };
    let mut group = c.benchmark_group("run_cv");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(eval::run_cv(&ds, &plan, &cfg, None, exec).unwrap().report.summary.mean_accuracy))
        });
    }
    group.finish();
}

criterion_group!(benches, ft2_population, cross_validation);
criterion_main!(benches);
