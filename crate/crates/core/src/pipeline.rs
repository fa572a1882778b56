//! End-to-end training: preprocessing, layerwise pretraining, fine-tuning
//! and rule generation, plus the stored model and rule-base files.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::finetune::{self, Center, FineTuneTrace, FtIvConfig};
use crate::frc::{self, Classification, RuleBase, RuleBaseOptions};
use crate::mf::{self, ExpertKnowledge, PreprocSpec};
use crate::network::{self, AeConfig, Network};
use crate::optim::{CmaesConfig, OptimizerConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    #[default]
    Ft1,
    Ft2,
    Ft3,
    Ft4,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Ft1 => "ft1",
            Strategy::Ft2 => "ft2",
            Strategy::Ft3 => "ft3",
            Strategy::Ft4 => "ft4",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Strategy::None),
            "ft1" => Ok(Strategy::Ft1),
            "ft2" => Ok(Strategy::Ft2),
            "ft3" => Ok(Strategy::Ft3),
            "ft4" => Ok(Strategy::Ft4),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Hidden layer widths of the encoder.
    pub hidden: Vec<usize>,
    pub ae: AeConfig,
    /// Pretraining and target-convergence optimizer.
    pub optimizer: OptimizerConfig,
    pub strategy: Strategy,
    /// Class centre for FT-I targets; unset means median, or mean when
    /// expert knowledge is used.
    pub center: Option<Center>,
    pub cmaes: CmaesConfig,
    /// Per-candidate retraining budget for FT-III.
    pub ft3_inner: OptimizerConfig,
    pub ft4: FtIvConfig,
    pub rules: RuleBaseOptions,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            hidden: vec![4],
            ae: AeConfig::default(),
            optimizer: OptimizerConfig::default(),
            strategy: Strategy::Ft1,
            center: None,
            cmaes: CmaesConfig::default(),
            ft3_inner: OptimizerConfig {
                max_iters: 100,
                ..OptimizerConfig::default()
            },
            ft4: FtIvConfig::default(),
            rules: RuleBaseOptions::default(),
            seed: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if self.hidden.is_empty() {
            errors.push(format!("{ctx}.hidden needs at least one layer"));
        }
        if self.hidden.contains(&0) {
            errors.push(format!("{ctx}.hidden widths must be >= 1"));
        }
        self.ae.validate(errors, &format!("{ctx}.ae"));
        self.optimizer.validate(errors, &format!("{ctx}.optimizer"));
        match self.strategy {
            Strategy::Ft2 => self.cmaes.validate(errors, &format!("{ctx}.cmaes")),
            Strategy::Ft3 => {
                self.cmaes.validate(errors, &format!("{ctx}.cmaes"));
                self.ft3_inner.validate(errors, &format!("{ctx}.ft3_inner"));
            }
            Strategy::Ft4 => self.ft4.validate(errors, &format!("{ctx}.ft4")),
            Strategy::None | Strategy::Ft1 => {}
        }
    }

    pub fn check(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.validate(&mut errors, "pipeline");
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// Stored preprocessing, encoder and rule base.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub preproc: PreprocSpec,
    pub encoder: Network,
    pub rule_base: RuleBase,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Accuracy on the training samples (expert samples excluded).
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    /// Encoder before fine-tuning.
    pub pretrained: Network,
    /// Training data after preprocessing, expert samples included.
    pub preprocessed: Dataset,
    pub trace: FineTuneTrace,
}

/// Runs the whole pipeline on `train`. With expert knowledge the expert
/// membership functions replace the fitted ramps, the expert samples are
/// appended to the training data and FT-I defaults to class means.
pub fn train(train: &Dataset, cfg: &PipelineConfig, expert: Option<&ExpertKnowledge>) -> Result<Trained> {
    cfg.check()?;
    let (preproc, mut xp) = match expert {
        Some(ek) => {
            ek.check_features(train)?;
            let spec = ek.spec()?;
            (spec.clone(), mf::preprocess(train, &spec)?)
        }
        None => {
            let spec = mf::fit_ramp_spec(train)?;
            (spec.clone(), mf::preprocess(train, &spec)?)
        }
    };
    let own_rows = xp.sample_count();
    if let Some(ek) = expert {
        let xe = ek.samples(train.class_names())?;
        let xe = xe.with_features(xe.features().clone(), xp.feature_names().to_vec())?;
        xp = mf::append_expert(&xp, &xe)?;
    }
    let p = xp.class_count();
    let x = xp.features();
    let labels = xp.labels();
    let pretrained = network::stack(x, &cfg.hidden, &cfg.ae, &cfg.optimizer, seed::derive(cfg.seed, "pretrain", 0))?;
    let center = cfg
        .center
        .unwrap_or(if expert.is_some() { Center::Mean } else { Center::Median });
    let mut cma = cfg.cmaes;
    cma.seed = seed::derive(cfg.seed, "cmaes", cma.seed);
    let tuned = match cfg.strategy {
        Strategy::None => finetune::FineTuned {
            network: pretrained.clone(),
            targets: None,
            trace: FineTuneTrace::None,
        },
        Strategy::Ft1 => finetune::ft1(&pretrained, x, labels, p, center, &cfg.optimizer)?,
        Strategy::Ft2 => finetune::ft2(&pretrained, x, labels, p, cfg.rules, &cma)?,
        Strategy::Ft3 => finetune::ft3(&pretrained, x, labels, p, cfg.rules, &cma, &cfg.ft3_inner)?,
        Strategy::Ft4 => finetune::ft4(&pretrained, x, labels, p, &cfg.ft4, &cfg.optimizer)?,
    };
    let encoder = tuned.network;
    let codes = encoder.encode(x)?;
    let bank = frc::fit_mf_bank(&codes, labels, p)?;
    let rule_base = frc::generate_rules(&codes, labels, &bank, cfg.rules)?;
    let own: Vec<usize> = (0..own_rows).collect();
    let own_codes = codes.select(ndarray::Axis(0), &own);
    let train_accuracy = rule_base.accuracy(&own_codes, &labels[..own_rows])?;
    Ok(Trained {
        model: Model {
            preproc,
            encoder,
            rule_base,
            class_names: train.class_names().to_vec(),
            feature_names: train.feature_names().to_vec(),
            train_accuracy,
        },
        pretrained,
        preprocessed: xp,
        trace: tuned.trace,
    })
}

pub const MODEL_FORMAT: &str = "aefrc-model";
pub const RULE_BASE_FORMAT: &str = "aefrc-rule-base";
pub const FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    class_names: Vec<String>,
    feature_names: Vec<String>,
    train_accuracy: f64,
    preproc: PreprocSpec,
    encoder: Network,
}

#[derive(Serialize, Deserialize)]
struct RuleBaseFile {
    format: String,
    version: u32,
    class_names: Vec<String>,
    rule_base: RuleBase,
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!("expected a {expected} file, found {format:?}")));
    }
    if version != FILE_VERSION {
        return Err(Error::Format(format!("{expected} version {version} unsupported (expected {FILE_VERSION})")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, expected: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text).map_err(|e| Error::Format(format!("{expected}: {e}")))?;
    check_header(&header.format, header.version, expected)?;
    serde_json::from_str(text).map_err(|e| Error::Format(format!("{expected}: {e}")))
}

impl Model {
    /// Checks that the stages chain: preprocessing output feeds the
    /// encoder, encoder output feeds the rule base.
    pub fn check(&self) -> Result<()> {
        if self.preproc.input_count() != self.feature_names.len() {
            return Err(Error::Shape(format!(
                "preprocessing expects {} features, model names {}",
                self.preproc.input_count(),
                self.feature_names.len()
            )));
        }
        if self.preproc.output_count() != self.encoder.input_width() {
            return Err(Error::Shape(format!(
                "preprocessing emits {} columns, encoder expects {}",
                self.preproc.output_count(),
                self.encoder.input_width()
            )));
        }
        if self.encoder.output_width() != self.rule_base.feature_count() {
            return Err(Error::Shape(format!(
                "encoder emits {} units, rule base expects {}",
                self.encoder.output_width(),
                self.rule_base.feature_count()
            )));
        }
        if self.class_names.len() != self.rule_base.class_count() {
            return Err(Error::Shape("rule base and model disagree on the class count".into()));
        }
        Ok(())
    }

    /// Classifies raw feature rows.
    pub fn classify(&self, x: &Array2<f64>) -> Result<Vec<Classification>> {
        let xp = self.preproc.transform(x)?;
        if xp.nrows() == 0 {
            return Ok(Vec::new());
        }
        let codes = self.encoder.encode(&xp)?;
        self.rule_base.classify_all(&codes)
    }

    pub fn accuracy(&self, ds: &Dataset) -> Result<f64> {
        if ds.class_names() != self.class_names.as_slice() {
            return Err(Error::Shape("dataset classes differ from the model's".into()));
        }
        if ds.sample_count() == 0 {
            return Ok(0.0);
        }
        let pred = self.classify(ds.features())?;
        let hits = pred.iter().zip(ds.labels()).filter(|(c, &y)| c.class == y).count();
        Ok(hits as f64 / ds.sample_count() as f64)
    }

    pub fn model_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: FILE_VERSION,
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
            train_accuracy: self.train_accuracy,
            preproc: self.preproc.clone(),
            encoder: self.encoder.clone(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }

    pub fn rule_base_json(&self) -> String {
        let file = RuleBaseFile {
            format: RULE_BASE_FORMAT.into(),
            version: FILE_VERSION,
            class_names: self.class_names.clone(),
            rule_base: self.rule_base.clone(),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }

    pub fn from_json(model: &str, rule_base: &str) -> Result<Model> {
        let m: ModelFile = parse(model, MODEL_FORMAT)?;
        let r: RuleBaseFile = parse(rule_base, RULE_BASE_FORMAT)?;
        if m.class_names != r.class_names {
            return Err(Error::Shape("model and rule base name different classes".into()));
        }
        let model = Model {
            preproc: m.preproc,
            encoder: m.encoder,
            rule_base: r.rule_base,
            class_names: m.class_names,
            feature_names: m.feature_names,
            train_accuracy: m.train_accuracy,
        };
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, model_path: impl AsRef<Path>, rule_base_path: impl AsRef<Path>) -> Result<()> {
        let (mp, rp) = (model_path.as_ref(), rule_base_path.as_ref());
        fs::write(mp, self.model_json()).map_err(|e| Error::io(mp, e))?;
        fs::write(rp, self.rule_base_json()).map_err(|e| Error::io(rp, e))
    }

    pub fn load(model_path: impl AsRef<Path>, rule_base_path: impl AsRef<Path>) -> Result<Model> {
        let (mp, rp) = (model_path.as_ref(), rule_base_path.as_ref());
        let model = fs::read_to_string(mp).map_err(|e| Error::io(mp, e))?;
        let rules = fs::read_to_string(rp).map_err(|e| Error::io(rp, e))?;
        Self::from_json(&model, &rules)
    }

    pub fn listing(&self) -> String {
        let names: Vec<String> = (1..=self.encoder.output_width()).map(|k| format!("h{k}")).collect();
        self.rule_base.listing(&names, &self.class_names)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_csv, CsvSchema};

    fn tiny() -> Dataset {
        let text = "a,b,class\n0.1,0.2,x\n0.2,0.1,x\n0.15,0.3,x\n0.9,0.8,y\n0.8,0.95,y\n1.0,0.85,y\n";
        parse_csv(text, &CsvSchema::default()).unwrap()
    }

    fn quick() -> PipelineConfig {
        PipelineConfig {
            hidden: vec![2],
            optimizer: OptimizerConfig {
                max_iters: 50,
                ..OptimizerConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn strategies_parse() {
        for s in ["none", "ft1", "FT2", "ft3", "ft4"] {
            let st: Strategy = s.parse().unwrap();
            assert_eq!(st.name(), s.to_ascii_lowercase());
        }
        assert!("ft5".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_lists_every_problem() {
        let cfg = PipelineConfig {
            hidden: vec![],
            strategy: Strategy::Ft4,
            ft4: FtIvConfig {
                zeta: -1.0,
                c_abs_cap: 0.0,
                ..FtIvConfig::default()
            },
            ..PipelineConfig::default()
        };
        let Err(Error::Config(errors)) = cfg.check() else {
            panic!("expected config errors")
        };
        assert_eq!(errors.len(), 3, "{errors:?}");
    }

    #[test]
    fn trained_model_round_trips_through_files() {
        let ds = tiny();
        let t = train(&ds, &quick(), None).unwrap();
        assert_eq!(t.model.encoder.layer_sizes(), &[2, 2]);
        let back = Model::from_json(&t.model.model_json(), &t.model.rule_base_json()).unwrap();
        assert_eq!(back, t.model);
        assert_eq!(back.accuracy(&ds).unwrap(), t.model.train_accuracy);
        assert!(back.classify(&Array2::zeros((0, 2))).unwrap().is_empty());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let t = train(&tiny(), &quick(), None).unwrap();
        let rb = t.model.rule_base_json();
        assert!(matches!(Model::from_json("{", &rb), Err(Error::Format(_))));
        let future = t.model.model_json().replace("\"version\": 1", "\"version\": 99");
        let err = Model::from_json(&future, &rb).unwrap_err().to_string();
        assert!(err.contains("version 99"), "{err}");
        assert!(Model::from_json(&rb, &rb).is_err());
    }

    #[test]
    fn width_mismatch_between_stages_is_reported() {
        let t = train(&tiny(), &quick(), None).unwrap();
        let mut other_cfg = quick();
        other_cfg.hidden = vec![3];
        let other = train(&tiny(), &other_cfg, None).unwrap();
        let err = Model::from_json(&t.model.model_json(), &other.model.rule_base_json()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn same_seed_same_model() {
        for strategy in [Strategy::None, Strategy::Ft1, Strategy::Ft4] {
            let cfg = PipelineConfig { strategy, ..quick() };
            let a = train(&tiny(), &cfg, None).unwrap();
            let b = train(&tiny(), &cfg, None).unwrap();
            assert_eq!(a.model, b.model);
        }
    }
}
