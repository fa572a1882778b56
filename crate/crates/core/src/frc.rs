//! Ishibuchi-style fuzzy rule classifier.
//!
//! Each feature gets one Gaussian membership function per class, fitted to
//! that class's values. A training sample produces the antecedent made of
//! its best-matching function on every feature; samples sharing an
//! antecedent are merged, the consequent is the class with the largest
//! summed membership product, and the certainty grade measures how much
//! that class dominates the others.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Relative std floor (fraction of the training feature range).
pub const STD_FLOOR_FRACTION: f64 = 0.01;
pub const STD_FLOOR_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub sigma: f64,
}

impl Gaussian {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sigma;
        (-0.5 * z * z).exp()
    }
}

/// `mfs[j][p]`: membership function of class `p` on feature `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMfBank {
    mfs: Vec<Vec<Gaussian>>,
}

impl FeatureMfBank {
    pub fn new(mfs: Vec<Vec<Gaussian>>) -> Result<Self> {
        let p = mfs.first().map_or(0, Vec::len);
        if p == 0 || mfs.iter().any(|row| row.len() != p) {
            return Err(Error::Shape("every feature needs the same non-zero number of MFs".into()));
        }
        if mfs.iter().flatten().any(|g| !(g.sigma > 0.0) || !g.mean.is_finite()) {
            return Err(Error::InvalidArgument("membership functions need finite mean and sigma > 0".into()));
        }
        Ok(FeatureMfBank { mfs })
    }

    pub fn feature_count(&self) -> usize {
        self.mfs.len()
    }

    pub fn class_count(&self) -> usize {
        self.mfs[0].len()
    }

    pub fn get(&self, feature: usize, class: usize) -> Gaussian {
        self.mfs[feature][class]
    }

    /// Memberships of `x` in every function, feature-major (`n x P`).
    fn memberships(&self, x: ArrayView1<'_, f64>, out: &mut Vec<f64>) {
        out.clear();
        for (v, row) in x.iter().zip(&self.mfs) {
            out.extend(row.iter().map(|g| g.eval(*v)));
        }
    }
}

/// Fits class-conditional Gaussians: mean and population std per class and
/// feature, std floored at `max(0.01 * feature range, 1e-6)`.
pub fn fit_mf_bank(x: &Array2<f64>, labels: &[usize], class_count: usize) -> Result<FeatureMfBank> {
    if x.nrows() != labels.len() {
        return Err(Error::Shape("label count differs from row count".into()));
    }
    let mut counts = vec![0usize; class_count];
    for &y in labels {
        if y >= class_count {
            return Err(Error::OutOfRange(format!("label {y} with {class_count} classes")));
        }
        counts[y] += 1;
    }
    if let Some(p) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass(p));
    }
    let mut mfs = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = (STD_FLOOR_FRACTION * (hi - lo)).max(STD_FLOOR_MIN);
        let mut sum = vec![0.0; class_count];
        for (&v, &y) in col.iter().zip(labels) {
            sum[y] += v;
        }
        let mean: Vec<f64> = sum.iter().zip(&counts).map(|(s, &c)| s / c as f64).collect();
        let mut sq = vec![0.0; class_count];
        for (&v, &y) in col.iter().zip(labels) {
            sq[y] += (v - mean[y]).powi(2);
        }
        mfs.push(
            (0..class_count)
                .map(|p| Gaussian {
                    mean: mean[p],
                    sigma: (sq[p] / counts[p] as f64).sqrt().max(floor),
                })
                .collect(),
        );
    }
    FeatureMfBank::new(mfs)
}

/// How per-feature memberships combine into a rule's firing strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Product,
    Sum,
}

/// How rules sharing a consequent combine into that class's score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Accumulation {
    #[default]
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleBaseOptions {
    pub aggregation: Aggregation,
    pub accumulation: Accumulation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    /// Class-MF index per feature.
    pub antecedent: Vec<usize>,
    pub consequent: usize,
    pub certainty: f64,
    /// Summed membership products per class of the samples behind the rule.
    pub support: Vec<f64>,
    pub sample_count: usize,
}

impl FuzzyRule {
    /// A rule whose consequent does not dominate (CF <= 0) cannot add
    /// positive evidence at inference.
    pub fn is_degenerate(&self) -> bool {
        self.certainty <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    rules: Vec<FuzzyRule>,
    bank: FeatureMfBank,
    options: RuleBaseOptions,
    /// Training samples dropped because their membership product was zero.
    skipped_samples: usize,
}

/// Consequent and certainty grade from per-class support.
///
/// The consequent is the class with the largest support (lowest index on
/// ties). With `M` the number of classes of non-zero support,
/// `CF = (beta_c - sum_{p != c} beta_p / (M - 1)) / sum_p beta_p`, and
/// `CF = 1` when `M = 1`.
pub fn certainty_grade(support: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (p, &b) in support.iter().enumerate() {
        if b > support[best] {
            best = p;
        }
    }
    let total: f64 = support.iter().sum();
    let conflicting = support.iter().filter(|&&b| b > 0.0).count();
    let others = if conflicting > 1 {
        (total - support[best]) / (conflicting - 1) as f64
    } else {
        0.0
    };
    (best, (support[best] - others) / total)
}

/// Sum of `values` in ascending order, so the result does not depend on the
/// order in which contributions arrived.
fn ordered_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub fn generate_rules(x: &Array2<f64>, labels: &[usize], bank: &FeatureMfBank, options: RuleBaseOptions) -> Result<RuleBase> {
    let n = bank.feature_count();
    let p = bank.class_count();
    if x.ncols() != n {
        return Err(Error::Shape(format!("bank covers {n} features, data has {}", x.ncols())));
    }
    if x.nrows() != labels.len() {
        return Err(Error::Shape("label count differs from row count".into()));
    }
    let mut groups: BTreeMap<Vec<usize>, Vec<Vec<f64>>> = BTreeMap::new();
    let mut mu = Vec::with_capacity(n * p);
    let mut skipped = 0;
    for (row, &y) in x.outer_iter().zip(labels) {
        if y >= p {
            return Err(Error::OutOfRange(format!("label {y} with {p} classes")));
        }
        bank.memberships(row, &mut mu);
        let mut antecedent = Vec::with_capacity(n);
        let mut strength = 1.0;
        for j in 0..n {
            let m = &mu[j * p..(j + 1) * p];
            let mut arg = 0;
            for (k, &v) in m.iter().enumerate() {
                if v > m[arg] {
                    arg = k;
                }
            }
            antecedent.push(arg);
            strength *= m[arg];
        }
        if !(strength > 0.0) {
            skipped += 1;
            continue;
        }
        groups.entry(antecedent).or_insert_with(|| vec![Vec::new(); p])[y].push(strength);
    }
    if skipped > 0 {
        log::warn!("{skipped} training samples had zero membership product and were skipped");
    }
    let rules = groups
        .into_iter()
        .map(|(antecedent, mut per_class)| {
            let sample_count = per_class.iter().map(Vec::len).sum();
            let support: Vec<f64> = per_class.iter_mut().map(|v| ordered_sum(v)).collect();
            let (consequent, certainty) = certainty_grade(&support);
            FuzzyRule {
                antecedent,
                consequent,
                certainty,
                support,
                sample_count,
            }
        })
        .collect();
    Ok(RuleBase {
        rules,
        bank: bank.clone(),
        options,
        skipped_samples: skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: usize,
    pub score: f64,
    pub scores: Vec<f64>,
    /// More than one class reached the winning score.
    pub tie: bool,
}

impl RuleBase {
    pub fn from_parts(rules: Vec<FuzzyRule>, bank: FeatureMfBank, options: RuleBaseOptions) -> Result<Self> {
        let n = bank.feature_count();
        let p = bank.class_count();
        let mut seen = std::collections::BTreeSet::new();
        for r in &rules {
            if r.antecedent.len() != n || r.antecedent.iter().any(|&a| a >= p) || r.consequent >= p {
                return Err(Error::Shape("rule does not fit the membership bank".into()));
            }
            if !seen.insert(r.antecedent.clone()) {
                return Err(Error::InvalidArgument("duplicate antecedent".into()));
            }
        }
        Ok(RuleBase {
            rules,
            bank,
            options,
            skipped_samples: 0,
        })
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    pub fn bank(&self) -> &FeatureMfBank {
        &self.bank
    }

    pub fn options(&self) -> RuleBaseOptions {
        self.options
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn skipped_samples(&self) -> usize {
        self.skipped_samples
    }

    pub fn class_count(&self) -> usize {
        self.bank.class_count()
    }

    pub fn feature_count(&self) -> usize {
        self.bank.feature_count()
    }

    /// Distinct consequent classes among the rules.
    pub fn consequent_classes(&self) -> usize {
        let mut seen = vec![false; self.class_count()];
        for r in &self.rules {
            seen[r.consequent] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    pub fn classify(&self, x: ArrayView1<'_, f64>) -> Result<Classification> {
        if x.len() != self.feature_count() {
            return Err(Error::Shape(format!(
                "sample has {} features, rule base expects {}",
                x.len(),
                self.feature_count()
            )));
        }
        let mut mu = Vec::new();
        Ok(self.classify_with(x, &mut mu))
    }

    fn classify_with(&self, x: ArrayView1<'_, f64>, mu: &mut Vec<f64>) -> Classification {
        let p = self.class_count();
        self.bank.memberships(x, mu);
        let mut scores = vec![0.0; p];
        for rule in &self.rules {
            let members = rule.antecedent.iter().enumerate().map(|(j, &a)| mu[j * p + a]);
            let firing = match self.options.aggregation {
                Aggregation::Product => members.product::<f64>(),
                Aggregation::Sum => members.sum::<f64>(),
            };
            let s = firing * rule.certainty;
            let slot = &mut scores[rule.consequent];
            match self.options.accumulation {
                Accumulation::Sum => *slot += s,
                Accumulation::Max => *slot = slot.max(s),
            }
        }
        let mut class = 0;
        for k in 1..p {
            if scores[k] > scores[class] {
                class = k;
            }
        }
        let score = scores[class];
        let tie = scores.iter().filter(|&&s| s == score).count() > 1;
        Classification {
            class,
            score,
            scores,
            tie,
        }
    }

    pub fn classify_all(&self, x: &Array2<f64>) -> Result<Vec<Classification>> {
        if x.ncols() != self.feature_count() {
            return Err(Error::Shape(format!(
                "data has {} features, rule base expects {}",
                x.ncols(),
                self.feature_count()
            )));
        }
        let mut mu = Vec::new();
        Ok(x.outer_iter().map(|row| self.classify_with(row, &mut mu)).collect())
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(self.classify_all(x)?.into_iter().map(|c| c.class).collect())
    }

    /// Fraction of rows classified as their label.
    pub fn accuracy(&self, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(x)?;
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    /// One rule per line: each feature's MF index with mean/sigma, the
    /// consequent and the certainty grade.
    pub fn listing(&self, feature_names: &[String], class_names: &[String]) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} rules, {} features, {} classes",
            self.rule_count(),
            self.feature_count(),
            self.class_count()
        );
        for (h, rule) in self.rules.iter().enumerate() {
            let _ = write!(out, "R{}: IF", h + 1);
            for (j, &a) in rule.antecedent.iter().enumerate() {
                let g = self.bank.get(j, a);
                let name = feature_names.get(j).cloned().unwrap_or_else(|| format!("h{}", j + 1));
                let sep = if j == 0 { "" } else { " AND" };
                let _ = write!(out, "{sep} {name} is MF{} (mean={:.4}, sigma={:.4})", a + 1, g.mean, g.sigma);
            }
            let class = class_names
                .get(rule.consequent)
                .cloned()
                .unwrap_or_else(|| (rule.consequent + 1).to_string());
            let _ = writeln!(out, " THEN {class} WITH CF={:.4}", rule.certainty);
        }
        out
    }
}

/// Fits the bank and generates the rule base for a dataset.
pub fn train(ds: &Dataset, options: RuleBaseOptions) -> Result<RuleBase> {
    let bank = fit_mf_bank(ds.features(), ds.labels(), ds.class_count())?;
    generate_rules(ds.features(), ds.labels(), &bank, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    #[test]
    fn bank_mean_and_population_std() {
        let x = array![[0.0], [2.0], [10.0]];
        let bank = fit_mf_bank(&x, &[0, 0, 1], 2).unwrap();
        assert_eq!(bank.get(0, 0), Gaussian { mean: 1.0, sigma: 1.0 });
        // single-sample class: floor = 0.01 * range(0..10)
        assert_eq!(bank.get(0, 1), Gaussian { mean: 10.0, sigma: 0.1 });
        assert_eq!(bank.feature_count() * bank.class_count(), 2);
        assert!(matches!(fit_mf_bank(&x, &[0, 0, 0], 2), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn single_class_rules_are_certain() {
        let x = array![[0.1, 0.2], [0.3, 0.1], [0.2, 0.25]];
        let rb = train(&Dataset::from_parts(x, vec![0, 0, 0], 1).unwrap(), RuleBaseOptions::default()).unwrap();
        assert_eq!(rb.rule_count(), 1);
        assert_eq!(rb.rules()[0].certainty, 1.0);
        let c = rb.classify(array![5.0, 5.0].view()).unwrap();
        assert_eq!(c.class, 0);
    }

    #[test]
    fn perfect_conflict_has_zero_certainty() {
        assert_eq!(certainty_grade(&[0.4, 0.4]), (0, 0.0));
        assert_eq!(certainty_grade(&[0.0, 0.7, 0.0]), (1, 1.0));
        let (c, cf) = certainty_grade(&[0.6, 0.3, 0.1]);
        assert_eq!(c, 0);
        assert!((cf - (0.6 - 0.2) / 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_rule_base_scores_its_firing_strength() {
        let bank = FeatureMfBank::new(vec![vec![Gaussian { mean: 0.0, sigma: 1.0 }, Gaussian { mean: 3.0, sigma: 1.0 }]]).unwrap();
        let rule = FuzzyRule {
            antecedent: vec![1],
            consequent: 1,
            certainty: 1.0,
            support: vec![0.0, 1.0],
            sample_count: 1,
        };
        let rb = RuleBase::from_parts(vec![rule], bank.clone(), RuleBaseOptions::default()).unwrap();
        let c = rb.classify(array![2.0].view()).unwrap();
        assert_eq!(c.class, 1);
        assert!((c.score - (-0.5f64).exp()).abs() < 1e-15);
        assert!(!c.tie);
        let empty = RuleBase::from_parts(vec![], bank, RuleBaseOptions::default()).unwrap();
        assert_eq!(empty.rule_count(), 0);
        let c = empty.classify(array![2.0].view()).unwrap();
        assert!(c.tie && c.class == 0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let rb = train(
            &Dataset::from_parts(array![[0.0, 1.0], [1.0, 0.0]], vec![0, 1], 2).unwrap(),
            RuleBaseOptions::default(),
        )
        .unwrap();
        assert!(rb.classify(array![1.0].view()).is_err());
    }

    #[test]
    fn training_samples_of_clean_base_classify_correctly() {
        let x = array![[0.0, 0.0], [0.1, 0.05], [1.0, 1.0], [0.95, 0.9]];
        let ds = Dataset::from_parts(x.clone(), vec![0, 0, 1, 1], 2).unwrap();
        let rb = train(&ds, RuleBaseOptions::default()).unwrap();
        assert!(rb.rules().iter().all(|r| r.certainty == 1.0));
        assert_eq!(rb.predict(&x).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(rb.consequent_classes(), 2);
        let text = rb.listing(&["a".into(), "b".into()], &["neg".into(), "pos".into()]);
        assert!(text.contains("THEN pos WITH CF=1.0000"));
    }

    fn random_data(seed: u64, m: usize, n: usize, p: usize) -> (Array2<f64>, Vec<usize>) {
        use rand::Rng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<usize> = (0..m).map(|i| i % p).collect();
        labels.shuffle(&mut rng);
        let x = Array2::from_shape_fn((m, n), |(i, _)| labels[i] as f64 * 0.3 + rng.random::<f64>());
        (x, labels)
    }

    proptest! {
        #[test]
        fn certainty_bounds_and_strength_conservation(seed in 0u64..1000, m in 3usize..40, n in 1usize..4, p in 1usize..4) {
            let (x, labels) = random_data(seed, m.max(p), n, p);
            let bank = fit_mf_bank(&x, &labels, p).unwrap();
            let rb = generate_rules(&x, &labels, &bank, RuleBaseOptions::default()).unwrap();
            let mut total_support = 0.0;
            for r in rb.rules() {
                prop_assert!(r.certainty <= 1.0 + 1e-12 && r.certainty >= -1.0);
                let conflict_free = r.support.iter().filter(|&&b| b > 0.0).count() == 1;
                prop_assert_eq!(conflict_free, r.certainty == 1.0);
                total_support += r.support.iter().sum::<f64>();
            }
            let direct: f64 = x.outer_iter().map(|row| {
                row.iter().enumerate().map(|(j, &v)| (0..p).map(|c| bank.get(j, c).eval(v)).fold(0.0, f64::max)).product::<f64>()
            }).sum();
            prop_assert!((total_support - direct).abs() <= 1e-9 * direct.max(1.0));
        }

        #[test]
        fn rules_do_not_depend_on_sample_order(seed in 0u64..1000, m in 3usize..30) {
            let (x, labels) = random_data(seed, m, 2, 3.min(m));
            let p = 3.min(m);
            let bank = fit_mf_bank(&x, &labels, p).unwrap();
            let a = generate_rules(&x, &labels, &bank, RuleBaseOptions::default()).unwrap();
            let mut order: Vec<usize> = (0..x.nrows()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabc));
            let xs = x.select(ndarray::Axis(0), &order);
            let ls: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
            let b = generate_rules(&xs, &ls, &bank, RuleBaseOptions::default()).unwrap();
            prop_assert_eq!(a.rules(), b.rules());
        }

        #[test]
        fn scaling_certainty_keeps_decisions(seed in 0u64..1000, scale in 0.01f64..100.0) {
            let (x, labels) = random_data(seed, 24, 2, 3);
            let rb = train(&Dataset::from_parts(x.clone(), labels, 3).unwrap(), RuleBaseOptions::default()).unwrap();
            let scaled_rules = rb.rules().iter().cloned().map(|mut r| { r.certainty *= scale; r }).collect();
            let scaled = RuleBase::from_parts(scaled_rules, rb.bank().clone(), rb.options()).unwrap();
            let probes = x.mapv(|v| v * 0.9 + 0.05);
            prop_assert_eq!(rb.predict(&probes).unwrap(), scaled.predict(&probes).unwrap());
        }
    }
}
