use std::fs;
use std::path::{Path, PathBuf};

use aefrc::dataset::{self, FoldPlan};
use aefrc::eval::{self, CvRun, ExperimentReport};
use aefrc::mf::ExpertKnowledge;
use aefrc::pipeline::{self, Strategy};
use aefrc::Execution;
use clap::Args;
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::Failure;

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; 1 runs sequentially [default: available cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for relative data paths.
    #[arg(long, env = config::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    expert: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// Comma-separated hidden layer widths.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Single sparsity target; disables the sweep.
    #[arg(long, conflicts_with = "rho_grid")]
    rho: Option<f64>,
    /// Comma-separated sparsity targets to sweep.
    #[arg(long, value_delimiter = ',')]
    rho_grid: Option<Vec<f64>>,
    /// Root seed of the pipeline.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    fold_seed: Option<u64>,
    #[arg(long)]
    fold_file: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the fine-tuning trace of the best fold.
    #[arg(long)]
    trace: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.data {
            cfg.data.path = v.clone();
        }
        if let Some(v) = &self.expert {
            cfg.data.expert = Some(v.clone());
        }
        if let Some(v) = self.strategy {
            cfg.pipeline.strategy = v;
        }
        if let Some(v) = &self.hidden {
            cfg.pipeline.hidden = v.clone();
        }
        if let Some(v) = self.rho {
            cfg.pipeline.ae.rho = v;
            cfg.cv.rho_grid = None;
        }
        if let Some(v) = &self.rho_grid {
            cfg.cv.rho_grid = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.pipeline.seed = v;
        }
        if let Some(v) = self.k {
            cfg.cv.k = v;
        }
        if let Some(v) = self.fold_seed {
            cfg.cv.seed = v;
        }
        if let Some(v) = &self.fold_file {
            cfg.cv.fold_file = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.output.dir = v.clone();
        }
        if self.trace {
            cfg.output.trace = true;
        }
    }
}

/// Everything a run produced, with the resolved configuration that
/// reproduces it.
#[derive(Debug, Serialize)]
struct Experiment<'a> {
    config: &'a RunConfig,
    best_rho: Option<f64>,
    reports: Vec<&'a ExperimentReport>,
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config).map_err(|e| io_err(&args.config, e))?;
    let (mut cfg, unknown) = RunConfig::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", args.config.display())))?;
    args.apply(&mut cfg);
    let mut errors: Vec<String> = unknown.iter().map(|k| format!("unknown key {k}")).collect();
    errors.extend(cfg.validate());
    if args.jobs == Some(0) {
        errors.push("--jobs must be >= 1".into());
    }
    if !errors.is_empty() {
        return Err(Failure::Usage(format!(
            "invalid configuration {}:\n  {}",
            args.config.display(),
            errors.join("\n  ")
        )));
    }
    let config_dir = config::absolute(args.config.parent().unwrap_or(Path::new(".")));
    cfg.resolve_paths(&config_dir, args.data_dir.as_deref());

    let exec = configure_pool(args.jobs)?;
    let ds = dataset::load_csv(&cfg.data.path, &cfg.data.schema())?;
    let expert = cfg.data.expert.as_ref().map(ExpertKnowledge::load).transpose()?;
    let plan = match &cfg.cv.fold_file {
        Some(path) => FoldPlan::load(path, None)?,
        None => dataset::stratified_kfold(&ds, cfg.cv.k, cfg.cv.seed, cfg.cv.best_effort)?,
    };
    if cfg.cv.fold_file.is_some() {
        cfg.cv.k = plan.k();
    }
    let name = cfg
        .data
        .path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());

    let (mut runs, best) = match &cfg.cv.rho_grid {
        Some(grid) => {
            let sweep = eval::sweep_rho(&ds, &plan, &cfg.pipeline, grid, expert.as_ref(), exec)?;
            (sweep.runs, sweep.best)
        }
        None => {
            let run = eval::run_cv(&ds, &plan, &cfg.pipeline, expert.as_ref(), exec)?;
            let best = run.report.summary.mean_accuracy.map(|_| 0);
            (vec![run], best)
        }
    };
    for r in &mut runs {
        r.report.dataset = name.clone();
    }
    for r in &runs {
        let s = &r.report.summary;
        println!(
            "rho {}: accuracy {} +- {}, rules {} +- {}, {} of {} folds",
            r.report.rho,
            pct(s.mean_accuracy_pct),
            pct(s.std_accuracy_pct),
            pct(s.mean_rules),
            pct(s.std_rules),
            s.valid_folds,
            r.report.folds.len()
        );
    }

    let out = &cfg.output.dir;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write(&out.join("run.toml"), &cfg.to_toml())?;
    let experiment = Experiment {
        config: &cfg,
        best_rho: best.map(|b| runs[b].report.rho),
        reports: runs.iter().map(|r| &r.report).collect(),
    };
    write(
        &out.join("experiment.json"),
        &serde_json::to_string_pretty(&experiment).expect("plain data serializes"),
    )?;

    let Some(best) = best else {
        let errors: Vec<String> = runs
            .iter()
            .flat_map(|r| r.report.folds.iter().filter_map(|f| f.error.clone()))
            .collect();
        return Err(Failure::Numerical(format!("no fold produced a model: {}", errors.join("; "))));
    };
    let run = &runs[best];
    write(&out.join("report.json"), &run.report.to_json())?;
    write_best_model(run, out)?;
    if cfg.output.trace {
        write_trace(run, &ds, &plan, expert.as_ref(), out)?;
    }
    println!("best rho {}; wrote {}", run.report.rho, out.display());
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
}

fn write_best_model(run: &CvRun, out: &Path) -> Result<(), Failure> {
    let fold = run.best_fold().expect("a valid run has a valid fold");
    let model = run.models[fold].as_ref().expect("valid folds keep their model");
    model.save(out.join("model.json"), out.join("rules.json"))?;
    let header = format!(
        "# fold {fold}: test accuracy {:.4}, {} rules\n",
        run.report.folds[fold].accuracy.unwrap_or(f64::NAN),
        model.rule_base.rule_count()
    );
    write(&out.join("rules.txt"), &(header + &model.listing()))
}

/// Retrains the best fold to recover its fine-tuning trace. Training is
/// deterministic per seed, so this is the same model that was stored.
fn write_trace(
    run: &CvRun,
    ds: &aefrc::Dataset,
    plan: &FoldPlan,
    expert: Option<&ExpertKnowledge>,
    out: &Path,
) -> Result<(), Failure> {
    let fold = run.best_fold().expect("a valid run has a valid fold");
    let (train, _) = dataset::split(ds, plan, fold)?;
    let fold_cfg = aefrc::pipeline::PipelineConfig {
        seed: run.report.folds[fold].seed,
        ..run.report.config.clone()
    };
    let trained = pipeline::train(&train, &fold_cfg, expert)?;
    write(&out.join("trace.csv"), &trained.trace.to_text())
}

fn configure_pool(jobs: Option<usize>) -> Result<Execution, Failure> {
    match jobs {
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Usage(format!("--jobs {n}: {e}")))?;
            Ok(Execution::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Execution::Sequential),
        None => Ok(Execution::Parallel),
    }
}
