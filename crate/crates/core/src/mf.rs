//! Membership functions, feature-wise preprocessing and expert knowledge.
//!
//! A [`PreprocSpec`] holds an ordered list of membership functions for each
//! input feature. Preprocessing replaces feature `j` by one column per
//! function, so the output has `n_p = sum_j K_j` columns laid out
//! feature-major.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MembershipFunction {
    Gaussian { mean: f64, sigma: f64 },
    /// Clamped linear ramp: 0 below `lo`, 1 above `hi`.
    Ramp { lo: f64, hi: f64 },
    Constant { value: f64 },
}

impl MembershipFunction {
    pub fn gaussian(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian needs finite mean and sigma > 0, got ({mean}, {sigma})"
            )));
        }
        Ok(MembershipFunction::Gaussian { mean, sigma })
    }

    pub fn ramp(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidArgument(format!("ramp needs lo < hi, got ({lo}, {hi})")));
        }
        Ok(MembershipFunction::Ramp { lo, hi })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            MembershipFunction::Gaussian { mean, sigma } => {
                let z = (x - mean) / sigma;
                (-0.5 * z * z).exp()
            }
            MembershipFunction::Ramp { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            MembershipFunction::Constant { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            MembershipFunction::Gaussian { mean, sigma } => MembershipFunction::gaussian(mean, sigma).map(drop),
            MembershipFunction::Ramp { lo, hi } => MembershipFunction::ramp(lo, hi).map(drop),
            MembershipFunction::Constant { value } if (0.0..=1.0).contains(&value) => Ok(()),
            MembershipFunction::Constant { value } => {
                Err(Error::InvalidArgument(format!("constant membership {value} outside [0, 1]")))
            }
        }
    }
}

/// Per-feature membership function lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocSpec {
    features: Vec<Vec<MembershipFunction>>,
}

impl PreprocSpec {
    pub fn new(features: Vec<Vec<MembershipFunction>>) -> Result<Self> {
        for (j, mfs) in features.iter().enumerate() {
            if mfs.is_empty() {
                return Err(Error::InvalidArgument(format!("feature {} has no membership functions", j + 1)));
            }
            for mf in mfs {
                mf.validate()?;
            }
        }
        Ok(PreprocSpec { features })
    }

    pub fn input_count(&self) -> usize {
        self.features.len()
    }

    /// `K_j` for each input feature.
    pub fn mf_counts(&self) -> Vec<usize> {
        self.features.iter().map(Vec::len).collect()
    }

    /// `n_p`, the preprocessed width.
    pub fn output_count(&self) -> usize {
        self.features.iter().map(Vec::len).sum()
    }

    /// Global column of membership function `mf` (zero-based) of `feature`.
    pub fn column(&self, feature: usize, mf: usize) -> usize {
        self.features[..feature].iter().map(Vec::len).sum::<usize>() + mf
    }

    pub fn functions(&self, feature: usize) -> &[MembershipFunction] {
        &self.features[feature]
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        let mut c = 0;
        for (x, mfs) in row.iter().zip(&self.features) {
            for mf in mfs {
                out[c] = mf.eval(*x);
                c += 1;
            }
        }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_count() {
            return Err(Error::Shape(format!(
                "preprocessing spec covers {} features, data has {}",
                self.input_count(),
                x.ncols()
            )));
        }
        let mut out = Array2::zeros((x.nrows(), self.output_count()));
        for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
            let mut c = 0;
            for (x, mfs) in row.iter().zip(&self.features) {
                for mf in mfs {
                    dst[c] = mf.eval(*x);
                    c += 1;
                }
            }
        }
        Ok(out)
    }

    /// Column names `name#l` (one-based `l`).
    pub fn column_names(&self, input_names: &[String]) -> Vec<String> {
        let mut names = Vec::with_capacity(self.output_count());
        for (j, mfs) in self.features.iter().enumerate() {
            let base = input_names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1));
            if mfs.len() == 1 {
                names.push(base);
            } else {
                names.extend((1..=mfs.len()).map(|l| format!("{base}#{l}")));
            }
        }
        names
    }
}

/// Applies `spec` feature-wise; labels are unchanged.
pub fn preprocess(ds: &Dataset, spec: &PreprocSpec) -> Result<Dataset> {
    let x = spec.transform(ds.features())?;
    ds.with_features(x, spec.column_names(ds.feature_names()))
}

/// One clamped ramp per feature spanning the training minimum and maximum.
/// Constant features map to 0.5.
pub fn fit_ramp_spec(train: &Dataset) -> Result<PreprocSpec> {
    if train.sample_count() == 0 {
        return Err(Error::EmptyFile);
    }
    let features = train
        .features()
        .columns()
        .into_iter()
        .map(|col| {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mf = if hi > lo {
                MembershipFunction::Ramp { lo, hi }
            } else {
                MembershipFunction::Constant { value: 0.5 }
            };
            vec![mf]
        })
        .collect();
    PreprocSpec::new(features)
}

/// How an expert rule treats a feature it does not mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DontCare {
    /// All of the feature's columns are 0.
    #[default]
    Zero,
    /// Each of the feature's `K_j` columns gets `1 / K_j`.
    Spread,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertRule {
    /// One-based membership function index per input feature; 0 leaves the
    /// feature out of the antecedent.
    pub antecedent: Vec<usize>,
    /// Class name of the consequent.
    pub class: String,
    /// Number of copies of the expert sample (confidence).
    pub tau: usize,
}

/// Builds the sparse expert samples, `tau` copies per rule, with labels
/// resolved against `class_names`.
pub fn make_expert_samples(
    rules: &[ExpertRule],
    spec: &PreprocSpec,
    class_names: &[String],
    dont_care: DontCare,
) -> Result<Dataset> {
    let counts = spec.mf_counts();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (g, rule) in rules.iter().enumerate() {
        if rule.antecedent.len() != spec.input_count() {
            return Err(Error::Shape(format!(
                "expert rule {} names {} features, spec has {}",
                g + 1,
                rule.antecedent.len(),
                spec.input_count()
            )));
        }
        if rule.tau == 0 {
            return Err(Error::InvalidArgument(format!("expert rule {} has tau = 0", g + 1)));
        }
        let y = class_names
            .iter()
            .position(|c| c == &rule.class)
            .ok_or_else(|| Error::OutOfRange(format!("expert rule {} class {:?} unknown", g + 1, rule.class)))?;
        let mut row = vec![0.0; spec.output_count()];
        for (j, &choice) in rule.antecedent.iter().enumerate() {
            if choice > counts[j] {
                return Err(Error::OutOfRange(format!(
                    "expert rule {} picks MF {choice} of feature {}, which has {}",
                    g + 1,
                    j + 1,
                    counts[j]
                )));
            }
            if choice > 0 {
                row[spec.column(j, choice - 1)] = 1.0;
            } else if dont_care == DontCare::Spread {
                for l in 0..counts[j] {
                    row[spec.column(j, l)] = 1.0 / counts[j] as f64;
                }
            }
        }
        for _ in 0..rule.tau {
            rows.extend_from_slice(&row);
            labels.push(y);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), spec.output_count()), rows).expect("row width fixed");
    let names = (1..=spec.output_count()).map(|c| format!("e{c}")).collect();
    Dataset::new(x, labels, class_names.to_vec(), names)
}

/// Row-concatenation of preprocessed data and expert samples.
pub fn append_expert(xp: &Dataset, xe: &Dataset) -> Result<Dataset> {
    xp.append(xe)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertFeature {
    pub name: String,
    pub mfs: Vec<MembershipFunction>,
}

/// Expert membership functions and rules, read from TOML.
///
/// ```toml
/// version = 1
/// dont_care = "zero"
///
/// [[features]]
/// name = "SL"
/// mfs = [{ kind = "gaussian", mean = 5.429, sigma = 0.706 }]
///
/// [[rules]]
/// antecedent = [0, 1, 0, 1]
/// class = "versicolor"
/// tau = 9
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertKnowledge {
    pub version: u32,
    #[serde(default)]
    pub dont_care: DontCare,
    pub features: Vec<ExpertFeature>,
    #[serde(default)]
    pub rules: Vec<ExpertRule>,
}

impl ExpertKnowledge {
    pub const VERSION: u32 = 1;

    pub fn from_toml(text: &str) -> Result<Self> {
        let ek: ExpertKnowledge = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if ek.version != Self::VERSION {
            return Err(Error::Format(format!("expert knowledge version {} unsupported", ek.version)));
        }
        ek.spec()?;
        Ok(ek)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    pub fn spec(&self) -> Result<PreprocSpec> {
        PreprocSpec::new(self.features.iter().map(|f| f.mfs.clone()).collect())
    }

    pub fn samples(&self, class_names: &[String]) -> Result<Dataset> {
        make_expert_samples(&self.rules, &self.spec()?, class_names, self.dont_care)
    }

    /// Checks feature names line up with a dataset's, when both are named.
    pub fn check_features(&self, ds: &Dataset) -> Result<()> {
        if self.features.len() != ds.feature_count() {
            return Err(Error::Shape(format!(
                "expert knowledge covers {} features, dataset has {}",
                self.features.len(),
                ds.feature_count()
            )));
        }
        let index: HashMap<&str, usize> = ds
            .feature_names()
            .iter()
            .enumerate()
            .map(|(j, n)| (n.as_str(), j))
            .collect();
        for (j, f) in self.features.iter().enumerate() {
            if let Some(&k) = index.get(f.name.as_str()) {
                if k != j {
                    return Err(Error::Shape(format!(
                        "expert feature {:?} is at position {} but dataset column {}",
                        f.name,
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(())
    }
}
