//! Run configuration file: one TOML document with `[data]`, `[cv]`,
//! `[pipeline]` and `[output]` tables.

use std::path::{Path, PathBuf};

use aefrc::dataset::{CsvSchema, LabelColumn};
use aefrc::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};

pub const DATA_DIR_ENV: &str = "AEFRC_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub path: PathBuf,
    /// Header name or zero-based index of the label column.
    pub label: LabelColumn,
    pub label_last: bool,
    pub has_header: bool,
    pub delimiter: Option<char>,
    /// Expert knowledge file; switches the pipeline to expert preprocessing.
    pub expert: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        let schema = CsvSchema::default();
        DataConfig {
            path: PathBuf::new(),
            label: schema.label,
            label_last: schema.label_last,
            has_header: schema.has_header,
            delimiter: schema.delimiter,
            expert: None,
        }
    }
}

impl DataConfig {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            label: self.label.clone(),
            has_header: self.has_header,
            delimiter: self.delimiter,
            label_last: self.label_last,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    /// Stored fold assignment; overrides `k`-fold generation.
    pub fold_file: Option<PathBuf>,
    /// Allow classes with fewer than `k` samples.
    pub best_effort: bool,
    /// Sparsity targets to sweep. Unset runs a single cross-validation at
    /// `pipeline.ae.rho`.
    pub rho_grid: Option<Vec<f64>>,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 10,
            seed: 1,
            fold_file: None,
            best_effort: false,
            rho_grid: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the fine-tuning trace of the best fold.
    pub trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("aefrc-out"),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub cv: CvConfig,
    pub pipeline: PipelineConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses a config and returns it with the list of keys that were not
    /// recognised.
    pub fn parse(text: &str) -> Result<(RunConfig, Vec<String>), String> {
        let de = toml::Deserializer::parse(text).map_err(|e| e.to_string())?;
        let mut unknown = Vec::new();
        let cfg = serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).map_err(|e| e.to_string())?;
        Ok((cfg, unknown))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plain data serializes")
    }

    /// Every violation, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.data.path.as_os_str().is_empty() {
            errors.push("data.path is required".to_string());
        }
        if self.cv.fold_file.is_none() && self.cv.k < 2 {
            errors.push("cv.k must be >= 2".to_string());
        }
        if let Some(grid) = &self.cv.rho_grid {
            if grid.is_empty() {
                errors.push("cv.rho_grid must not be empty".to_string());
            }
            for rho in grid {
                if !(*rho > 0.0 && *rho < 1.0) {
                    errors.push(format!("cv.rho_grid value {rho} must lie in (0, 1)"));
                }
            }
        }
        self.pipeline.validate(&mut errors, "pipeline");
        if self.output.dir.as_os_str().is_empty() {
            errors.push("output.dir must not be empty".to_string());
        }
        errors
    }

    /// Makes relative input paths absolute. Relative paths are looked up in
    /// the data directory when one is given, else next to the config file.
    pub fn resolve_paths(&mut self, config_dir: &Path, data_dir: Option<&Path>) {
        let base = data_dir.unwrap_or(config_dir);
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = absolute(&base.join(&*p));
            }
        };
        fix(&mut self.data.path);
        if let Some(p) = self.data.expert.as_mut() {
            fix(p);
        }
        if let Some(p) = self.cv.fold_file.as_mut() {
            fix(p);
        }
    }
}

pub fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let (back, unknown) = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(unknown.is_empty());
    }

    #[test]
    fn unknown_keys_are_reported() {
        let (_, unknown) = RunConfig::parse("[data]\npath = \"x.csv\"\nlabl = 3\n[pipeline.ae]\nrhoo = 0.2\n").unwrap();
        assert_eq!(unknown, vec!["data.labl".to_string(), "pipeline.ae.rhoo".to_string()]);
    }

    #[test]
    fn validation_lists_every_problem() {
        let (cfg, _) = RunConfig::parse("[cv]\nk = 1\nrho_grid = [0.0, 0.5, 1.5]\n[pipeline]\nhidden = []\n").unwrap();
        let errors = cfg.validate();
        assert_eq!(errors.len(), 5, "{errors:?}");
    }

    #[test]
    fn label_accepts_index_or_name() {
        let (cfg, _) = RunConfig::parse("[data]\nlabel = 4\n").unwrap();
        assert_eq!(cfg.data.label, LabelColumn::Index(4));
        let (cfg, _) = RunConfig::parse("[data]\nlabel = \"species\"\n").unwrap();
        assert_eq!(cfg.data.label, LabelColumn::Name("species".into()));
    }
}
