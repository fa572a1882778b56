//! Limited-memory BFGS for smooth costs and CMA-ES for black-box fitness.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub tol: f64,
    /// Number of curvature pairs kept.
    pub history: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 400,
            tol: 1e-6,
            history: 10,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if self.max_iters == 0 {
            errors.push(format!("{ctx}.max_iters must be >= 1"));
        }
        if !(self.tol > 0.0) {
            errors.push(format!("{ctx}.tol must be > 0"));
        }
        if self.history == 0 {
            errors.push(format!("{ctx}.history must be >= 1"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    CostTolerance,
    MaxIterations,
    /// No step satisfying sufficient decrease was found; the best point so
    /// far is returned.
    LineSearchFailed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub cost: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Cost at the start point followed by the cost after each accepted step.
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub evaluations: usize,
    pub stop: StopReason,
}

impl Minimum {
    pub fn trace_text(&self) -> String {
        let mut s = String::from("iteration,cost,step_norm\n");
        for r in &self.trace {
            let _ = writeln!(s, "{},{:e},{:e}", r.iteration, r.cost, r.step_norm);
        }
        s
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 30;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe {
    alpha: f64,
    cost: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
    slope: f64,
}

struct LineSearch<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    cost0: f64,
    slope0: f64,
    evals: usize,
    /// Best point satisfying sufficient decrease, if any.
    fallback: Option<Probe>,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> LineSearch<'_, F> {
    fn probe(&mut self, alpha: f64) -> Probe {
        let x: Vec<f64> = self.x.iter().zip(self.dir).map(|(x, d)| x + alpha * d).collect();
        let mut grad = vec![0.0; x.len()];
        let cost = (self.f)(&x, &mut grad);
        self.evals += 1;
        let cost = if cost.is_finite() && grad.iter().all(|g| g.is_finite()) {
            cost
        } else {
            f64::INFINITY
        };
        let slope = dot(&grad, self.dir);
        let p = Probe {
            alpha,
            cost,
            x,
            grad,
            slope,
        };
        if p.cost <= self.cost0 + C1 * alpha * self.slope0
            && self.fallback.as_ref().is_none_or(|b| p.cost < b.cost)
        {
            self.fallback = Some(Probe {
                alpha: p.alpha,
                cost: p.cost,
                x: p.x.clone(),
                grad: p.grad.clone(),
                slope: p.slope,
            });
        }
        p
    }

    fn armijo(&self, p: &Probe) -> bool {
        p.cost <= self.cost0 + C1 * p.alpha * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -C2 * self.slope0
    }

    /// Strong-Wolfe search with bracketing and cubic interpolation.
    fn run(mut self, alpha0: f64) -> (Option<Probe>, usize) {
        let mut prev = Probe {
            alpha: 0.0,
            cost: self.cost0,
            x: self.x.to_vec(),
            grad: Vec::new(),
            slope: self.slope0,
        };
        let mut alpha = alpha0;
        for i in 0..MAX_LINE_EVALS {
            let p = self.probe(alpha);
            if !self.armijo(&p) || (i > 0 && p.cost >= prev.cost) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return (Some(p), self.evals);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            alpha = (2.0 * alpha).min(alpha + 1e3 * alpha.max(1.0));
            prev = p;
        }
        let evals = self.evals;
        (self.fallback, evals)
    }

    fn zoom(mut self, mut lo: Probe, mut hi: Probe) -> (Option<Probe>, usize) {
        while self.evals < MAX_LINE_EVALS {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = (b - a).abs();
            if width < 1e-16 * a.abs().max(b.abs()).max(1.0) {
                break;
            }
            let lower = a.min(b) + 0.1 * width;
            let upper = a.max(b) - 0.1 * width;
            let alpha = cubic_min(&lo, &hi)
                .filter(|t| t.is_finite() && *t >= lower && *t <= upper)
                .unwrap_or(0.5 * (a + b));
            let p = self.probe(alpha);
            if !self.armijo(&p) || p.cost >= lo.cost {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return (Some(p), self.evals);
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
        }
        let evals = self.evals;
        (self.fallback, evals)
    }
}

/// Minimizer of the cubic through two points with known slopes.
fn cubic_min(p: &Probe, q: &Probe) -> Option<f64> {
    if !(p.cost.is_finite() && q.cost.is_finite()) {
        return None;
    }
    let (a, b) = (p.alpha, q.alpha);
    let d1 = p.slope + q.slope - 3.0 * (p.cost - q.cost) / (a - b);
    let disc = d1 * d1 - p.slope * q.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    Some(b - (b - a) * (q.slope + d2 - d1) / (q.slope - p.slope + 2.0 * d2))
}

/// Minimizes a smooth cost with L-BFGS and a strong-Wolfe line search.
///
/// `f(x, grad)` returns the cost and writes the gradient. Stops when the
/// gradient infinity norm or the relative cost change drops below `tol`, or
/// after `max_iters` accepted steps. Every accepted step decreases the cost,
/// so the result is never worse than `x0`.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &OptimizerConfig) -> Result<Minimum>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut grad = vec![0.0; n];
    let mut cost = f(&x, &mut grad);
    let mut evaluations = 1;
    if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite cost or gradient at start point".into()));
    }
    let mut trace = vec![TraceRow {
        iteration: 0,
        cost,
        step_norm: 0.0,
    }];
    let done = |x: Vec<f64>, cost, trace, iterations, evaluations, stop| {
        Ok(Minimum {
            x,
            cost,
            trace,
            iterations,
            evaluations,
            stop,
        })
    };
    if norm_inf(&grad) < cfg.tol {
        return done(x, cost, trace, 0, evaluations, StopReason::GradientTolerance);
    }

    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history);
    let mut dir = vec![0.0; n];
    let mut alpha_buf = vec![0.0; cfg.history];
    let mut retried = false;
    let mut iter = 0;
    while iter < cfg.max_iters {
        // Two-loop recursion.
        dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
        for (k, (s, y, rho)) in pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &dir);
            alpha_buf[k] = a;
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for (k, (s, y, rho)) in pairs.iter().enumerate() {
            let b = rho * dot(y, &dir);
            let a = alpha_buf[k];
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            pairs.clear();
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            slope = dot(&grad, &dir);
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / grad.iter().map(|g| g.abs()).sum::<f64>()).min(1.0)
        } else {
            1.0
        };
        let search = LineSearch {
            f: &mut f,
            x: &x,
            dir: &dir,
            cost0: cost,
            slope0: slope,
            evals: 0,
            fallback: None,
        };
        let (probe, used) = search.run(alpha0);
        evaluations += used;
        let Some(p) = probe else {
            if !pairs.is_empty() && !retried {
                pairs.clear();
                retried = true;
                continue;
            }
            return done(x, cost, trace, iter, evaluations, StopReason::LineSearchFailed);
        };
        retried = false;
        iter += 1;

        let s: Vec<f64> = p.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let step_norm = dot(&s, &s).sqrt();
        if sy > 1e-10 * step_norm * dot(&y, &y).sqrt() {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let prev_cost = cost;
        x = p.x;
        grad = p.grad;
        cost = p.cost;
        trace.push(TraceRow {
            iteration: iter,
            cost,
            step_norm,
        });

        if norm_inf(&grad) < cfg.tol {
            return done(x, cost, trace, iter, evaluations, StopReason::GradientTolerance);
        }
        let scale = prev_cost.abs().max(cost.abs());
        if scale == 0.0 || (prev_cost - cost).abs() / scale < cfg.tol {
            return done(x, cost, trace, iter, evaluations, StopReason::CostTolerance);
        }
    }
    done(x, cost, trace, iter, evaluations, StopReason::MaxIterations)
}

pub const DEFAULT_SIGMA0: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaesConfig {
    /// Offspring per generation; `None` uses `4 + floor(3 ln d)`.
    pub population: Option<usize>,
    /// Initial step size; `None` uses the caller's default, or
    /// [`DEFAULT_SIGMA0`] when calling [`cmaes`] directly.
    pub sigma0: Option<f64>,
    pub max_evals: usize,
    pub seed: u64,
    /// Stop once the fitness range over the current generation and recent
    /// best values falls below this. Zero disables the check.
    pub tol_fitness: f64,
    pub execution: Execution,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            population: None,
            sigma0: None,
            max_evals: 2000,
            seed: 1,
            tol_fitness: 1e-12,
            execution: Execution::Parallel,
        }
    }
}

impl CmaesConfig {
    pub fn population_for(&self, dim: usize) -> usize {
        self.population
            .unwrap_or_else(|| 4 + (3.0 * (dim.max(1) as f64).ln()).floor() as usize)
    }

    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if self.population.is_some_and(|p| p < 4) {
            errors.push(format!("{ctx}.population must be >= 4"));
        }
        if self.sigma0.is_some_and(|s| !(s > 0.0)) {
            errors.push(format!("{ctx}.sigma0 must be > 0"));
        }
        if self.max_evals == 0 {
            errors.push(format!("{ctx}.max_evals must be >= 1"));
        }
        if !(self.tol_fitness >= 0.0) {
            errors.push(format!("{ctx}.tol_fitness must be >= 0"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CmaesStop {
    EvaluationBudget,
    FitnessTolerance,
    StepTolerance,
    /// Three consecutive generations without a finite fitness.
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRow {
    pub generation: usize,
    pub evaluations: usize,
    pub best_fitness: f64,
    pub generation_best: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct CmaesResult {
    pub x: Vec<f64>,
    pub fitness: f64,
    /// One for the start point plus `generations * population`.
    pub evaluations: usize,
    pub generations: usize,
    pub population: usize,
    pub stop: CmaesStop,
    pub trace: Vec<GenerationRow>,
}

impl CmaesResult {
    pub fn trace_text(&self) -> String {
        let mut s = String::from("generation,evaluations,best_fitness,generation_best,sigma\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e}",
                r.generation, r.evaluations, r.best_fitness, r.generation_best, r.sigma
            );
        }
        s
    }
}

/// (mu/mu_w, lambda)-CMA-ES minimizing `f`.
///
/// The start point is evaluated first, so the returned best-ever fitness is
/// never worse than `f(x0)`. Candidates are sampled serially from the seeded
/// generator and evaluated through [`par::map_slice`], so the result does not
/// depend on the execution mode. Ranking ties fall to the lower candidate
/// index.
pub fn cmaes<F>(f: F, x0: &[f64], cfg: &CmaesConfig) -> Result<CmaesResult>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty search vector".into()));
    }
    let mut errors = Vec::new();
    cfg.validate(&mut errors, "cmaes");
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let f0 = f(x0);
    if !f0.is_finite() {
        return Err(Error::Numerical("non-finite fitness at start point".into()));
    }

    let nf = n as f64;
    let lambda = cfg.population_for(n);
    let mu = lambda / 2;
    let raw: Vec<f64> = (1..=mu)
        .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
        .collect();
    let wsum: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / wsum).collect();
    let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
    let cs = (mueff + 2.0) / (nf + mueff + 5.0);
    let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
    let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
    let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
    let history_len = 10 + (30.0 * nf / lambda as f64).ceil() as usize;
    let eigen_gap = lambda as f64 / (c1 + cmu) / nf / 10.0;

    let mut rng = seed::rng(cfg.seed);
    let mut mean = DVector::from_column_slice(x0);
    let sigma0 = cfg.sigma0.unwrap_or(DEFAULT_SIGMA0);
    let mut sigma = sigma0;
    let mut cov = DMatrix::<f64>::identity(n, n);
    let mut basis = DMatrix::<f64>::identity(n, n);
    let mut scales = DVector::<f64>::from_element(n, 1.0);
    let mut inv_sqrt = DMatrix::<f64>::identity(n, n);
    let mut pc = DVector::<f64>::zeros(n);
    let mut ps = DVector::<f64>::zeros(n);

    let mut best_x = x0.to_vec();
    let mut best_f = f0;
    let mut evaluations = 1;
    let mut last_eigen = 0;
    let mut generation = 0;
    let mut non_finite_streak = 0;
    let mut recent_best: VecDeque<f64> = VecDeque::with_capacity(history_len);
    let mut trace = Vec::new();

    let stop = loop {
        if evaluations + lambda > cfg.max_evals {
            break CmaesStop::EvaluationBudget;
        }
        let mut steps = Vec::with_capacity(lambda);
        let mut candidates = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let y = &basis * z.component_mul(&scales);
            candidates.push((&mean + sigma * &y).as_slice().to_vec());
            steps.push(y);
        }
        let fitness: Vec<f64> = par::map_slice(cfg.execution, &candidates, |x| f(x))
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::INFINITY })
            .collect();
        evaluations += lambda;
        generation += 1;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
        let gen_best = fitness[order[0]];
        if gen_best < best_f {
            best_f = gen_best;
            best_x = candidates[order[0]].clone();
        }
        trace.push(GenerationRow {
            generation,
            evaluations,
            best_fitness: best_f,
            generation_best: gen_best,
            sigma,
        });

        if !gen_best.is_finite() {
            non_finite_streak += 1;
            if non_finite_streak >= 3 {
                break CmaesStop::NonFinite;
            }
            continue;
        }
        non_finite_streak = 0;

        let mut y_w = DVector::<f64>::zeros(n);
        for (w, &k) in weights.iter().zip(&order) {
            y_w.axpy(*w, &steps[k], 1.0);
        }
        mean.axpy(sigma, &y_w, 1.0);

        ps = (1.0 - cs) * &ps + (cs * (2.0 - cs) * mueff).sqrt() * (&inv_sqrt * &y_w);
        let ps_norm = ps.norm();
        let hsig = ps_norm / (1.0 - (1.0 - cs).powi(2 * generation as i32)).sqrt() / chi_n
            < 1.4 + 2.0 / (nf + 1.0);
        let hsig_f = if hsig { 1.0 } else { 0.0 };
        pc = (1.0 - cc) * &pc + hsig_f * (cc * (2.0 - cc) * mueff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::<f64>::zeros(n, n);
        for (w, &k) in weights.iter().zip(&order) {
            rank_mu.ger(*w, &steps[k], &steps[k], 1.0);
        }
        cov = (1.0 - c1 - cmu) * &cov
            + c1 * (&pc * pc.transpose() + (1.0 - hsig_f) * cc * (2.0 - cc) * &cov)
            + cmu * rank_mu;
        sigma *= ((cs / damps) * (ps_norm / chi_n - 1.0)).exp();

        if (evaluations - last_eigen) as f64 > eigen_gap || generation == 1 {
            last_eigen = evaluations;
            cov = 0.5 * (&cov + cov.transpose());
            let eig = SymmetricEigen::new(cov.clone());
            basis = eig.eigenvectors;
            scales = eig.eigenvalues.map(|v| v.max(1e-30).sqrt());
            let inv = DMatrix::from_diagonal(&scales.map(|s| 1.0 / s));
            inv_sqrt = &basis * inv * basis.transpose();
        }

        if recent_best.len() == history_len {
            recent_best.pop_front();
        }
        recent_best.push_back(gen_best);
        if cfg.tol_fitness > 0.0 && recent_best.len() == history_len {
            let worst = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = recent_best.iter().copied().fold(gen_best, f64::min);
            let hi = recent_best.iter().copied().fold(worst, f64::max);
            if hi - lo < cfg.tol_fitness {
                break CmaesStop::FitnessTolerance;
            }
        }
        let spread = sigma * cov.diagonal().iter().fold(0.0f64, |m, v| m.max(*v)).sqrt();
        if !(spread > 1e-12 * sigma0) {
            break CmaesStop::StepTolerance;
        }
    };

    Ok(CmaesResult {
        x: best_x,
        fitness: best_f,
        evaluations,
        generations: generation,
        population: lambda,
        stop,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_grad(x: &[f64], g: &mut [f64]) -> f64 {
        for (gi, xi) in g.iter_mut().zip(x) {
            *gi = 2.0 * xi;
        }
        x.iter().map(|v| v * v).sum()
    }

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn quadratic_reaches_origin() {
        let r = minimize(sphere_grad, &[3.0, 4.0], &OptimizerConfig::default()).unwrap();
        assert!(r.x.iter().all(|v| v.abs() < 1e-6), "{:?}", r.x);
        assert!(r.cost < 1e-10);
    }

    #[test]
    fn rosenbrock_converges() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(r.cost < 1e-8, "cost {} after {} iterations ({:?})", r.cost, r.iterations, r.stop);
        assert!(r.iterations <= 400);
    }

    #[test]
    fn start_at_optimum_uses_one_evaluation() {
        let r = minimize(sphere_grad, &[0.0, 0.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.x, vec![0.0, 0.0]);
        assert_eq!(r.stop, StopReason::GradientTolerance);
    }

    #[test]
    fn trace_is_monotone() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        for w in r.trace.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let bad = |_: &[f64], _: &mut [f64]| f64::NAN;
        assert!(minimize(bad, &[1.0], &OptimizerConfig::default()).is_err());
    }

    #[test]
    fn cmaes_sphere() {
        let cfg = CmaesConfig {
            sigma0: Some(0.5),
            max_evals: 10_000,
            seed: 3,
            ..CmaesConfig::default()
        };
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let r = cmaes(f, &[1.0; 10], &cfg).unwrap();
        assert!(r.fitness < 1e-8, "best {} after {} evals", r.fitness, r.evaluations);
        assert_eq!(r.evaluations, 1 + r.generations * r.population);
        assert_eq!(r.population, 4 + (3.0 * 10f64.ln()).floor() as usize);
        let again = cmaes(f, &[1.0; 10], &cfg).unwrap();
        assert_eq!(r.fitness.to_bits(), again.fitness.to_bits());
        for w in r.trace.windows(2) {
            assert!(w[1].best_fitness <= w[0].best_fitness);
        }
    }

    #[test]
    fn cmaes_execution_modes_agree() {
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum::<f64>();
        let base = CmaesConfig {
            max_evals: 600,
            ..CmaesConfig::default()
        };
        let seq = cmaes(f, &[0.5; 5], &CmaesConfig { execution: Execution::Sequential, ..base }).unwrap();
        let par = cmaes(f, &[0.5; 5], &base).unwrap();
        assert_eq!(seq.x, par.x);
    }

    #[test]
    fn cmaes_aborts_on_persistent_nan() {
        let f = |x: &[f64]| if x == [0.0, 0.0] { 1.0 } else { f64::NAN };
        let r = cmaes(f, &[0.0, 0.0], &CmaesConfig::default()).unwrap();
        assert_eq!(r.stop, CmaesStop::NonFinite);
        assert_eq!(r.generations, 3);
        assert_eq!(r.fitness, 1.0);
    }
}
