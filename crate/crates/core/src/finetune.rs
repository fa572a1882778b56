//! Fine-tuning strategies for a pretrained encoder.
//!
//! FT-I pulls every sample's last-layer code toward its class median.
//! FT-II searches all encoder parameters with CMA-ES against the rule-base
//! fitness. FT-III searches the per-class target points instead and
//! retrains toward each candidate. FT-IV optimizes the target points for
//! compactness and separation, then trains toward them as in FT-I.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frc::{self, RuleBaseOptions};
use crate::network::Network;
use crate::optim::{self, CmaesConfig, CmaesResult, GenerationRow, OptimizerConfig, TraceRow};

/// Per-class target vectors in the last hidden layer (`P x n'`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoints {
    points: Array2<f64>,
}

impl ConvergencePoints {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::Shape("convergence points need at least one class and one unit".into()));
        }
        Ok(ConvergencePoints { points })
    }

    pub fn from_flat(class_count: usize, width: usize, flat: &[f64]) -> Result<Self> {
        let points = Array2::from_shape_vec((class_count, width), flat.to_vec())
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(points)
    }

    pub fn class_count(&self) -> usize {
        self.points.nrows()
    }

    pub fn width(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, class: usize) -> ArrayView1<'_, f64> {
        self.points.row(class)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.points.iter().copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Target matrix holding each sample's class point.
    pub fn targets_for(&self, labels: &[usize]) -> Array2<f64> {
        let mut t = Array2::zeros((labels.len(), self.width()));
        for (mut row, &y) in t.rows_mut().into_iter().zip(labels) {
            row.assign(&self.points.row(y));
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Center {
    #[default]
    Median,
    Mean,
}

fn check_labels(rows: usize, labels: &[usize], class_count: usize) -> Result<Vec<usize>> {
    if rows != labels.len() {
        return Err(Error::Shape("label count differs from row count".into()));
    }
    let mut counts = vec![0; class_count];
    for &y in labels {
        if y >= class_count {
            return Err(Error::OutOfRange(format!("label {y} with {class_count} classes")));
        }
        counts[y] += 1;
    }
    if let Some(p) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(p));
    }
    Ok(counts)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Per-class median (or mean) of every hidden unit.
pub fn class_targets(h: &Array2<f64>, labels: &[usize], class_count: usize, center: Center) -> Result<ConvergencePoints> {
    check_labels(h.nrows(), labels, class_count)?;
    let mut points = Array2::zeros((class_count, h.ncols()));
    for (k, col) in h.columns().into_iter().enumerate() {
        let mut per_class = vec![Vec::new(); class_count];
        for (&v, &y) in col.iter().zip(labels) {
            per_class[y].push(v);
        }
        for (p, vals) in per_class.iter_mut().enumerate() {
            points[[p, k]] = match center {
                Center::Median => median(vals),
                Center::Mean => vals.iter().sum::<f64>() / vals.len() as f64,
            };
        }
    }
    ConvergencePoints::new(points)
}

pub fn class_targets_median(h: &Array2<f64>, labels: &[usize], class_count: usize) -> Result<ConvergencePoints> {
    class_targets(h, labels, class_count, Center::Median)
}

/// Backpropagation toward the class targets, without weight decay.
pub fn converge_to_targets_traced(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    targets: &ConvergencePoints,
    opt: &OptimizerConfig,
) -> Result<(Network, optim::Minimum)> {
    if targets.width() != net.output_width() {
        return Err(Error::Shape(format!(
            "targets have width {}, network output is {}",
            targets.width(),
            net.output_width()
        )));
    }
    check_labels(x.nrows(), labels, targets.class_count())?;
    let t = targets.targets_for(labels);
    let mut scratch = net.clone();
    let objective = |flat: &[f64], grad: &mut [f64]| -> f64 {
        scratch.set_flat(flat);
        match scratch.target_cost_grad(x, &t) {
            Ok((c, g)) => {
                grad.copy_from_slice(&g);
                c
            }
            Err(_) => f64::NAN,
        }
    };
    let min = optim::minimize(objective, &net.to_flat(), opt)?;
    Ok((net.with_flat(&min.x), min))
}

pub fn converge_to_targets(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    targets: &ConvergencePoints,
    opt: &OptimizerConfig,
) -> Result<Network> {
    converge_to_targets_traced(net, x, labels, targets, opt).map(|(n, _)| n)
}

/// Rule-base quality of a network's codes: training accuracy, rule count
/// and consequent coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub t_acc: f64,
    pub g_d: usize,
    pub p_consequent: usize,
    pub sample_count: usize,
    pub class_count: usize,
    pub fitness: f64,
}

impl FitnessReport {
    /// `fitness = -t_acc + g_d/m - p_consequent/P`.
    pub fn new(t_acc: f64, g_d: usize, p_consequent: usize, sample_count: usize, class_count: usize) -> Self {
        assert!((0.0..=1.0).contains(&t_acc), "training accuracy {t_acc} outside [0, 1]");
        assert!(p_consequent <= class_count, "more consequent classes than classes");
        assert!(sample_count > 0 && class_count > 0, "empty fitness inputs");
        let fitness = -t_acc + g_d as f64 / sample_count as f64 - p_consequent as f64 / class_count as f64;
        FitnessReport {
            t_acc,
            g_d,
            p_consequent,
            sample_count,
            class_count,
            fitness,
        }
    }
}

/// Trains a rule base on the network's codes of `x` and scores it on the
/// same samples.
pub fn frc_fitness(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    rules: RuleBaseOptions,
) -> Result<FitnessReport> {
    check_labels(x.nrows(), labels, class_count)?;
    let h = net.encode(x)?;
    let bank = frc::fit_mf_bank(&h, labels, class_count)?;
    let rb = frc::generate_rules(&h, labels, &bank, rules)?;
    let acc = rb.accuracy(&h, labels)?;
    Ok(FitnessReport::new(acc, rb.rule_count(), rb.consequent_classes(), labels.len(), class_count))
}

/// Optimizer record of a fine-tuning run.
#[derive(Debug, Clone, Default)]
pub enum FineTuneTrace {
    #[default]
    None,
    Gradient(Vec<TraceRow>),
    Search {
        generations: Vec<GenerationRow>,
        best: Option<FitnessReport>,
    },
}

impl FineTuneTrace {
    fn search(res: &CmaesResult, best: Option<FitnessReport>) -> Self {
        FineTuneTrace::Search {
            generations: res.trace.clone(),
            best,
        }
    }

    /// Comma-delimited text: iterations for gradient strategies, and
    /// generations followed by the best candidate's fitness terms for
    /// search strategies.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self {
            FineTuneTrace::None => {}
            FineTuneTrace::Gradient(rows) => {
                s.push_str("iteration,cost,step_norm\n");
                for r in rows {
                    let _ = writeln!(s, "{},{:e},{:e}", r.iteration, r.cost, r.step_norm);
                }
            }
            FineTuneTrace::Search { generations, best } => {
                s.push_str("generation,evaluations,best_fitness,generation_best,sigma\n");
                for r in generations {
                    let _ = writeln!(
                        s,
                        "{},{},{:e},{:e},{:e}",
                        r.generation, r.evaluations, r.best_fitness, r.generation_best, r.sigma
                    );
                }
                if let Some(b) = best {
                    let _ = writeln!(
                        s,
                        "# best: t_acc={} g_d={} p_consequent={} fitness={}",
                        b.t_acc, b.g_d, b.p_consequent, b.fitness
                    );
                }
            }
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct FineTuned {
    pub network: Network,
    /// Target points the network was trained toward (FT-I, FT-III, FT-IV).
    pub targets: Option<ConvergencePoints>,
    pub trace: FineTuneTrace,
}

pub fn ft1(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    center: Center,
    opt: &OptimizerConfig,
) -> Result<FineTuned> {
    let h = net.encode(x)?;
    let targets = class_targets(&h, labels, class_count, center)?;
    let (network, min) = converge_to_targets_traced(net, x, labels, &targets, opt)?;
    Ok(FineTuned {
        network,
        targets: Some(targets),
        trace: FineTuneTrace::Gradient(min.trace),
    })
}

/// Default FT-II step size: a tenth of the parameters' root mean square.
pub fn ft2_sigma0(net: &Network) -> f64 {
    let flat = net.to_flat();
    let rms = (flat.iter().map(|v| v * v).sum::<f64>() / flat.len() as f64).sqrt();
    if rms > 0.0 {
        0.1 * rms
    } else {
        0.1
    }
}

pub const FT3_SIGMA0: f64 = 0.1;

fn fitness_or_nan(r: Result<FitnessReport>) -> f64 {
    r.map_or(f64::NAN, |r| r.fitness)
}

/// CMA-ES over every encoder parameter, starting from `net`. A failed
/// search returns `net` unchanged.
pub fn ft2(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    rules: RuleBaseOptions,
    cma: &CmaesConfig,
) -> Result<FineTuned> {
    check_labels(x.nrows(), labels, class_count)?;
    let mut cfg = *cma;
    cfg.sigma0 = Some(cma.sigma0.unwrap_or_else(|| ft2_sigma0(net)));
    let fitness = |flat: &[f64]| fitness_or_nan(frc_fitness(&net.with_flat(flat), x, labels, class_count, rules));
    match optim::cmaes(fitness, &net.to_flat(), &cfg) {
        Ok(res) => {
            let network = net.with_flat(&res.x);
            let best = frc_fitness(&network, x, labels, class_count, rules).ok();
            Ok(FineTuned {
                network,
                targets: None,
                trace: FineTuneTrace::search(&res, best),
            })
        }
        Err(e) => {
            log::warn!("FT-II search failed ({e}); keeping the pretrained network");
            Ok(FineTuned {
                network: net.clone(),
                targets: None,
                trace: FineTuneTrace::None,
            })
        }
    }
}

/// CMA-ES over the `P x n'` target points, starting at the class medians.
/// Every candidate retrains the pretrained network toward its points with
/// `inner` and is scored by [`frc_fitness`]; the result is the network
/// retrained toward the best points.
pub fn ft3(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    rules: RuleBaseOptions,
    cma: &CmaesConfig,
    inner: &OptimizerConfig,
) -> Result<FineTuned> {
    let h = net.encode(x)?;
    let start = class_targets_median(&h, labels, class_count)?;
    let width = start.width();
    let mut cfg = *cma;
    cfg.sigma0 = Some(cma.sigma0.unwrap_or(FT3_SIGMA0));
    let fitness = |flat: &[f64]| {
        let Ok(points) = ConvergencePoints::from_flat(class_count, width, flat) else {
            return f64::NAN;
        };
        match converge_to_targets(net, x, labels, &points, inner) {
            Ok(tuned) => fitness_or_nan(frc_fitness(&tuned, x, labels, class_count, rules)),
            Err(_) => f64::NAN,
        }
    };
    let res = match optim::cmaes(fitness, &start.to_flat(), &cfg) {
        Ok(res) => res,
        Err(e) => {
            log::warn!("FT-III search failed ({e}); keeping the pretrained network");
            return Ok(FineTuned {
                network: net.clone(),
                targets: None,
                trace: FineTuneTrace::None,
            });
        }
    };
    let points = ConvergencePoints::from_flat(class_count, width, &res.x)?;
    let network = converge_to_targets(net, x, labels, &points, inner)?;
    let best = frc_fitness(&network, x, labels, class_count, rules).ok();
    Ok(FineTuned {
        network,
        targets: Some(points),
        trace: FineTuneTrace::search(&res, best),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FtIvConfig {
    /// Separation weight used when `beta_grid` is empty.
    pub beta_sep: f64,
    pub zeta: f64,
    /// Candidate separation weights; the largest one whose points respect
    /// `c_abs_cap` is used.
    pub beta_grid: Vec<f64>,
    pub c_abs_cap: f64,
}

impl Default for FtIvConfig {
    fn default() -> Self {
        FtIvConfig {
            beta_sep: 0.1,
            zeta: 0.05,
            beta_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
            c_abs_cap: 10.0,
        }
    }
}

impl FtIvConfig {
    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.zeta >= 0.0) {
            errors.push(format!("{ctx}.zeta must be >= 0"));
        }
        if !(self.beta_sep > 0.0) {
            errors.push(format!("{ctx}.beta_sep must be > 0"));
        }
        if self.beta_grid.iter().any(|b| !(*b > 0.0)) {
            errors.push(format!("{ctx}.beta_grid values must be > 0"));
        }
        if !(self.c_abs_cap > 0.0) {
            errors.push(format!("{ctx}.c_abs_cap must be > 0"));
        }
    }
}

/// Compactness/separation objective over target points, held at fixed codes.
///
/// `J(C) = 1/2 sum_j sum_{i in j} ||h_i - C_j||^2 / m_j
///        - beta / (2(P-1)) sum_j sum_{l != j} ||C_j - C_l||^2
///        + zeta / (2P) sum_j ||C_j||^2`
///
/// The first term only needs each class's mean code and mean squared norm.
#[derive(Debug, Clone)]
pub struct TargetObjective {
    means: Array2<f64>,
    mean_sq: Vec<f64>,
    pub beta: f64,
    pub zeta: f64,
}

impl TargetObjective {
    pub fn new(h: &Array2<f64>, labels: &[usize], class_count: usize, beta: f64, zeta: f64) -> Result<Self> {
        let counts = check_labels(h.nrows(), labels, class_count)?;
        let mut means = Array2::zeros((class_count, h.ncols()));
        let mut mean_sq = vec![0.0; class_count];
        for (row, &y) in h.outer_iter().zip(labels) {
            let mut m = means.row_mut(y);
            m += &row;
            mean_sq[y] += row.dot(&row);
        }
        for (p, &c) in counts.iter().enumerate() {
            means.row_mut(p).mapv_inplace(|v| v / c as f64);
            mean_sq[p] /= c as f64;
        }
        Ok(TargetObjective { means, mean_sq, beta, zeta })
    }

    pub fn class_means(&self) -> &Array2<f64> {
        &self.means
    }

    /// Cost and gradient at flattened points (`P x n'`, row-major).
    pub fn cost_grad(&self, flat: &[f64], grad: &mut [f64]) -> f64 {
        let (p, w) = self.means.dim();
        let c = |j: usize, k: usize| flat[j * w + k];
        let sep = if p > 1 { self.beta / (p - 1) as f64 } else { 0.0 };
        let mut sum = vec![0.0; w];
        for j in 0..p {
            for k in 0..w {
                sum[k] += c(j, k);
            }
        }
        let mut cost = 0.0;
        for j in 0..p {
            let mut fit = self.mean_sq[j];
            let mut norm = 0.0;
            for k in 0..w {
                let v = c(j, k);
                fit += v * v - 2.0 * v * self.means[[j, k]];
                norm += v * v;
                // sum_{l != j} (C_j - C_l) = P C_j - sum_l C_l
                let spread = p as f64 * v - sum[k];
                grad[j * w + k] = (v - self.means[[j, k]]) - 2.0 * sep * spread + self.zeta * v / p as f64;
            }
            cost += 0.5 * fit + self.zeta / (2.0 * p as f64) * norm;
        }
        // sum_j sum_{l != j} ||C_j - C_l||^2 = 2 (P sum_j ||C_j||^2 - ||sum_j C_j||^2)
        if p > 1 {
            let total_sq: f64 = flat.iter().map(|v| v * v).sum();
            let sum_sq: f64 = sum.iter().map(|v| v * v).sum();
            cost -= sep * (p as f64 * total_sq - sum_sq);
        }
        cost
    }

    /// Whether the objective has a finite minimum: the separation term's
    /// negative curvature must not overcome the fit and shrinkage terms.
    pub fn is_bounded(&self) -> bool {
        let p = self.means.nrows();
        if p < 2 {
            return true;
        }
        let curvature = 1.0 + self.zeta / p as f64 - 2.0 * self.beta * p as f64 / (p - 1) as f64;
        curvature > 0.0
    }

    pub fn minimize(&self, opt: &OptimizerConfig) -> Result<ConvergencePoints> {
        let x0: Vec<f64> = self.means.iter().copied().collect();
        let min = optim::minimize(|x, g| self.cost_grad(x, g), &x0, opt)?;
        ConvergencePoints::from_flat(self.means.nrows(), self.means.ncols(), &min.x)
    }
}

#[derive(Debug, Clone)]
pub struct FtIvTargets {
    pub points: ConvergencePoints,
    pub beta: f64,
    /// No grid value respected the cap; the smallest one was used.
    pub fallback: bool,
}

/// Target points from the compactness/separation objective, choosing the
/// separation weight from the grid.
pub fn ft4_targets(h: &Array2<f64>, labels: &[usize], class_count: usize, cfg: &FtIvConfig, opt: &OptimizerConfig) -> Result<FtIvTargets> {
    let mut grid = cfg.beta_grid.clone();
    if grid.is_empty() {
        grid.push(cfg.beta_sep);
    }
    grid.sort_by(f64::total_cmp);
    let mut objective = TargetObjective::new(h, labels, class_count, grid[0], cfg.zeta)?;
    for &beta in grid.iter().rev() {
        objective.beta = beta;
        if !objective.is_bounded() {
            continue;
        }
        let points = objective.minimize(opt)?;
        let m = points.max_abs();
        if m.is_finite() && m <= cfg.c_abs_cap {
            return Ok(FtIvTargets {
                points,
                beta,
                fallback: false,
            });
        }
    }
    log::warn!("no separation weight kept the target points within {}; using {}", cfg.c_abs_cap, grid[0]);
    objective.beta = grid[0];
    Ok(FtIvTargets {
        points: objective.minimize(opt)?,
        beta: grid[0],
        fallback: true,
    })
}

pub fn ft4(
    net: &Network,
    x: &Array2<f64>,
    labels: &[usize],
    class_count: usize,
    cfg: &FtIvConfig,
    opt: &OptimizerConfig,
) -> Result<FineTuned> {
    let h = net.encode(x)?;
    let chosen = ft4_targets(&h, labels, class_count, cfg, opt)?;
    log::debug!("FT-IV separation weight {}", chosen.beta);
    let (network, min) = converge_to_targets_traced(net, x, labels, &chosen.points, opt)?;
    Ok(FineTuned {
        network,
        targets: Some(chosen.points),
        trace: FineTuneTrace::Gradient(min.trace),
    })
}
