//! Cross-validation, the sparsity sweep and experiment reports.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::mf::ExpertKnowledge;
use crate::par::{self, Execution};
use crate::pipeline::{self, Model, PipelineConfig, Strategy};
use crate::seed;

pub const REPORT_FORMAT: &str = "aefrc-report";
pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    /// Test accuracy as a fraction; absent when the fold failed.
    pub accuracy: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub rule_count: Option<usize>,
    pub error: Option<String>,
    pub seconds: f64,
}

/// Aggregates over the valid folds. Standard deviations use `n - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub valid_folds: usize,
    pub mean_accuracy: Option<f64>,
    pub std_accuracy: Option<f64>,
    /// Mean accuracy in percent.
    pub mean_accuracy_pct: Option<f64>,
    pub std_accuracy_pct: Option<f64>,
    pub mean_rules: Option<f64>,
    pub std_rules: Option<f64>,
}

fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

impl Summary {
    pub fn from_folds(folds: &[FoldOutcome]) -> Summary {
        let acc: Vec<f64> = folds.iter().filter_map(|f| f.accuracy).collect();
        let rules: Vec<f64> = folds
            .iter()
            .filter(|f| f.accuracy.is_some())
            .filter_map(|f| f.rule_count.map(|r| r as f64))
            .collect();
        let (mean_accuracy, std_accuracy) = mean_std(&acc);
        let (mean_rules, std_rules) = mean_std(&rules);
        Summary {
            valid_folds: acc.len(),
            mean_accuracy,
            std_accuracy,
            mean_accuracy_pct: mean_accuracy.map(|v| 100.0 * v),
            std_accuracy_pct: std_accuracy.map(|v| 100.0 * v),
            mean_rules,
            std_rules,
        }
    }

    fn agrees_with(&self, other: &Summary) -> bool {
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
            (None, None) => true,
            _ => false,
        };
        self.valid_folds == other.valid_folds
            && close(self.mean_accuracy, other.mean_accuracy)
            && close(self.std_accuracy, other.std_accuracy)
            && close(self.mean_accuracy_pct, other.mean_accuracy_pct)
            && close(self.std_accuracy_pct, other.std_accuracy_pct)
            && close(self.mean_rules, other.mean_rules)
            && close(self.std_rules, other.std_rules)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub dataset: String,
    pub strategy: Strategy,
    /// Layer widths from the preprocessed input to the last hidden layer.
    pub architecture: Vec<usize>,
    pub rho: f64,
    pub expert: bool,
    pub fold_seed: u64,
    pub config: PipelineConfig,
    pub folds: Vec<FoldOutcome>,
    pub summary: Summary,
    pub wall_seconds: f64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Parses a report and checks its aggregates against the folds.
    pub fn from_json(text: &str) -> Result<Self> {
        let r: ExperimentReport = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<()> {
        if self.format != REPORT_FORMAT || self.version != REPORT_VERSION {
            return Err(Error::Format(format!(
                "unsupported report {} version {}",
                self.format, self.version
            )));
        }
        if !self.summary.agrees_with(&Summary::from_folds(&self.folds)) {
            return Err(Error::Format("report aggregates do not match its folds".into()));
        }
        Ok(())
    }

    /// Copy with every timing zeroed, for comparing reruns.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        r.wall_seconds = 0.0;
        r.folds.iter_mut().for_each(|f| f.seconds = 0.0);
        r
    }
}

/// A cross-validation run with the model trained on each valid fold.
#[derive(Debug, Clone)]
pub struct CvRun {
    pub report: ExperimentReport,
    pub models: Vec<Option<Model>>,
}

impl CvRun {
    /// Fold with the highest test accuracy, lowest index on ties.
    pub fn best_fold(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for f in &self.report.folds {
            if let Some(a) = f.accuracy {
                if best.is_none_or(|(_, b)| a > b) {
                    best = Some((f.fold, a));
                }
            }
        }
        best.map(|(f, _)| f)
    }
}

fn fold_seed(cfg: &PipelineConfig, fold: usize) -> u64 {
    seed::derive(cfg.seed, "fold", fold as u64)
}

fn run_fold(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &PipelineConfig,
    expert: Option<&ExpertKnowledge>,
    fold: usize,
) -> (FoldOutcome, Option<Model>) {
    let start = Instant::now();
    let fold_cfg = PipelineConfig {
        seed: fold_seed(cfg, fold),
        ..cfg.clone()
    };
    let mut out = FoldOutcome {
        fold,
        seed: fold_cfg.seed,
        train_size: 0,
        test_size: 0,
        accuracy: None,
        train_accuracy: None,
        rule_count: None,
        error: None,
        seconds: 0.0,
    };
    let result = dataset::split(ds, plan, fold).and_then(|(train, test)| {
        out.train_size = train.sample_count();
        out.test_size = test.sample_count();
        let trained = pipeline::train(&train, &fold_cfg, expert)?;
        let acc = trained.model.accuracy(&test)?;
        Ok((trained.model, acc))
    });
    let model = match result {
        Ok((model, acc)) => {
            out.accuracy = Some(acc);
            out.train_accuracy = Some(model.train_accuracy);
            out.rule_count = Some(model.rule_base.rule_count());
            Some(model)
        }
        Err(e) => {
            log::warn!("fold {fold} failed: {e}");
            out.error = Some(e.to_string());
            None
        }
    };
    out.seconds = start.elapsed().as_secs_f64();
    (out, model)
}

fn assemble(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &PipelineConfig,
    expert: Option<&ExpertKnowledge>,
    results: Vec<(FoldOutcome, Option<Model>)>,
    wall_seconds: f64,
) -> CvRun {
    let (folds, models): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let input = match expert {
        Some(ek) => ek.spec().map(|s| s.output_count()).unwrap_or(ds.feature_count()),
        None => ds.feature_count(),
    };
    let mut architecture = vec![input];
    architecture.extend(&cfg.hidden);
    let summary = Summary::from_folds(&folds);
    CvRun {
        report: ExperimentReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            dataset: String::new(),
            strategy: cfg.strategy,
            architecture,
            rho: cfg.ae.rho,
            expert: expert.is_some(),
            fold_seed: plan.seed(),
            config: cfg.clone(),
            folds,
            summary,
            wall_seconds,
        },
        models,
    }
}

/// k-fold cross-validation of the pipeline. Each fold fits its own
/// preprocessing on the training part only; a failing fold is recorded
/// and left out of the aggregates.
pub fn run_cv(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &PipelineConfig,
    expert: Option<&ExpertKnowledge>,
    exec: Execution,
) -> Result<CvRun> {
    cfg.check()?;
    plan.check_against(ds)?;
    let start = Instant::now();
    let results = par::map_range(exec, plan.k(), |f| run_fold(ds, plan, cfg, expert, f));
    Ok(assemble(ds, plan, cfg, expert, results, start.elapsed().as_secs_f64()))
}

/// Index of the report with the best mean accuracy; ties go to the lower
/// sparsity target.
pub fn select_best(reports: &[ExperimentReport]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in reports.iter().enumerate() {
        let Some(acc) = r.summary.mean_accuracy else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = reports[b].summary.mean_accuracy.expect("valid best");
                if acc > cur || (acc == cur && r.rho < reports[b].rho) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub runs: Vec<CvRun>,
    /// Index into `runs` of the selected sparsity target.
    pub best: Option<usize>,
}

impl Sweep {
    pub fn best_rho(&self) -> Option<f64> {
        self.best.map(|b| self.runs[b].report.rho)
    }

    pub fn best_run(&self) -> Option<&CvRun> {
        self.best.map(|b| &self.runs[b])
    }
}

/// The default sparsity grid, 0.1 to 0.9.
pub fn rho_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

/// Cross-validates every sparsity target in `grid` on the same folds. All
/// (target, fold) cells are scheduled together.
pub fn sweep_rho(
    ds: &Dataset,
    plan: &FoldPlan,
    cfg: &PipelineConfig,
    grid: &[f64],
    expert: Option<&ExpertKnowledge>,
    exec: Execution,
) -> Result<Sweep> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sparsity grid is empty".into()));
    }
    let cfgs: Vec<PipelineConfig> = grid
        .iter()
        .map(|&rho| {
            let mut c = cfg.clone();
            c.ae.rho = rho;
            c
        })
        .collect();
    for c in &cfgs {
        c.check()?;
    }
    plan.check_against(ds)?;
    let k = plan.k();
    let start = Instant::now();
    let mut cells = par::map_range(exec, cfgs.len() * k, |cell| run_fold(ds, plan, &cfgs[cell / k], expert, cell % k)).into_iter();
    let wall = start.elapsed().as_secs_f64();
    let runs: Vec<CvRun> = cfgs
        .iter()
        .map(|c| {
            let results: Vec<_> = cells.by_ref().take(k).collect();
            let seconds = results.iter().map(|(f, _)| f.seconds).sum::<f64>();
            assemble(ds, plan, c, expert, results, seconds.min(wall))
        })
        .collect();
    let reports: Vec<ExperimentReport> = runs.iter().map(|r| r.report.clone()).collect();
    let best = select_best(&reports);
    Ok(Sweep { runs, best })
}

#[derive(Debug, Clone)]
pub struct Holdout {
    pub model: Model,
    pub accuracy: f64,
}

/// Trains on `train` and scores on `test`.
pub fn holdout(train: &Dataset, test: &Dataset, cfg: &PipelineConfig, expert: Option<&ExpertKnowledge>) -> Result<Holdout> {
    let trained = pipeline::train(train, cfg, expert)?;
    let accuracy = trained.model.accuracy(test)?;
    Ok(Holdout {
        model: trained.model,
        accuracy,
    })
}
