//! Labeled numeric datasets, delimited-text ingestion and stratified folds.
//!
//! Class labels are stored as zero-based indices into `class_names`; the
//! names keep the first-appearance order of the source file.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    feature_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset, checking shapes, label range and finiteness.
    ///
    /// Subsets (folds, splits) may lack some classes, so class coverage is
    /// not enforced here; [`load_csv`] guarantees it for loaded files.
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} columns but {} feature names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if class_names.is_empty() {
            return Err(Error::InvalidArgument("no classes".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_names.len()) {
            return Err(Error::OutOfRange(format!(
                "label index {bad} with {} classes",
                class_names.len()
            )));
        }
        for ((r, c), v) in features.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    line: r + 1,
                    column: c + 1,
                });
            }
        }
        Ok(Dataset {
            features,
            labels,
            class_names,
            feature_names,
        })
    }

    /// Dataset with generated feature names `x1..xn`.
    pub fn from_parts(features: Array2<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        let feature_names = (1..=features.ncols()).map(|j| format!("x{j}")).collect();
        let class_names = (1..=class_count).map(|p| p.to_string()).collect();
        Dataset::new(features, labels, class_names, feature_names)
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn sample_count(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Same labels and classes, new feature matrix.
    pub fn with_features(&self, features: Array2<f64>, feature_names: Vec<String>) -> Result<Self> {
        Dataset::new(
            features,
            self.labels.clone(),
            self.class_names.clone(),
            feature_names,
        )
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// First `per_class` samples of every class, in file order.
    pub fn first_per_class(&self, per_class: usize) -> Dataset {
        let mut taken = vec![0; self.class_count()];
        let rows: Vec<usize> = (0..self.sample_count())
            .filter(|&i| {
                let y = self.labels[i];
                taken[y] += 1;
                taken[y] <= per_class
            })
            .collect();
        self.select(&rows)
    }

    /// Row-concatenation. Both sides must share feature width and classes.
    pub fn append(&self, other: &Dataset) -> Result<Dataset> {
        if self.feature_count() != other.feature_count() {
            return Err(Error::Shape(format!(
                "cannot append {} features to {}",
                other.feature_count(),
                self.feature_count()
            )));
        }
        if self.class_names != other.class_names {
            return Err(Error::Shape("class label spaces differ".into()));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Dataset {
            features,
            labels,
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl Default for LabelColumn {
    fn default() -> Self {
        LabelColumn::Name("class".into())
    }
}

/// Column layout of a delimited text file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    /// Zero-based index or header name of the label column. Negative
    /// indices are not supported; use [`CsvSchema::last_column`].
    pub label: LabelColumn,
    pub has_header: bool,
    /// `None` sniffs the first data line for `;` and falls back to `,`.
    pub delimiter: Option<char>,
    /// Label is the last column regardless of `label`.
    pub label_last: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            label: LabelColumn::default(),
            has_header: true,
            delimiter: None,
            label_last: false,
        }
    }
}

impl CsvSchema {
    pub fn last_column() -> Self {
        CsvSchema {
            label_last: true,
            ..CsvSchema::default()
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema)
}

/// Parses delimited text. Blank lines and KEEL `@` metadata lines are skipped;
/// KEEL `@attribute` names are used as feature names when no header row is
/// present.
pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let mut keel_names = Vec::new();
    let mut pending = None;
    for (no, line) in lines.by_ref() {
        if let Some(meta) = line.strip_prefix('@') {
            let mut parts = meta.split_whitespace();
            if parts.next().is_some_and(|k| k.eq_ignore_ascii_case("attribute")) {
                if let Some(name) = parts.next() {
                    keel_names.push(name.to_string());
                }
            }
            continue;
        }
        pending = Some((no, line));
        break;
    }
    let Some(first) = pending else {
        return Err(Error::EmptyFile);
    };
    let delim = schema
        .delimiter
        .unwrap_or(if first.1.contains(';') { ';' } else { ',' });
    let split = |l: &str| -> Vec<String> { l.split(delim).map(|c| c.trim().to_string()).collect() };

    type Rows = Vec<(usize, Vec<String>)>;
    let (header, mut rows): (Option<Vec<String>>, Rows) = if schema.has_header {
        (Some(split(first.1)), Vec::new())
    } else {
        (None, vec![(first.0, split(first.1))])
    };
    for (no, line) in lines {
        if line.starts_with('@') {
            continue;
        }
        rows.push((no, split(line)));
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }

    let width = header.as_ref().map_or(rows[0].1.len(), Vec::len);
    let label_idx = if schema.label_last {
        width - 1
    } else {
        match &schema.label {
            LabelColumn::Index(i) if *i < width => *i,
            LabelColumn::Index(i) => return Err(Error::MissingLabelColumn(i.to_string())),
            LabelColumn::Name(name) => {
                let names = header.as_ref().or(if keel_names.len() == width {
                    Some(&keel_names)
                } else {
                    None
                });
                names
                    .and_then(|h| h.iter().position(|c| c == name))
                    .ok_or_else(|| Error::MissingLabelColumn(name.clone()))?
            }
        }
    };
    let names: Vec<String> = match (&header, keel_names.len() == width) {
        (Some(h), _) => h.clone(),
        (None, true) => keel_names,
        (None, false) => (1..=width).map(|j| format!("x{j}")).collect(),
    };
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, n)| n.clone())
        .collect();

    let n = width - 1;
    let mut values = Vec::with_capacity(rows.len() * n);
    let mut labels = Vec::with_capacity(rows.len());
    let mut class_names: Vec<String> = Vec::new();
    let mut class_index: HashMap<String, usize> = HashMap::new();
    for (no, cells) in &rows {
        if cells.len() != width {
            return Err(Error::Parse {
                line: *no,
                column: cells.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", cells.len()),
            });
        }
        for (j, cell) in cells.iter().enumerate() {
            if j == label_idx {
                let next = class_names.len();
                let y = *class_index.entry(cell.clone()).or_insert_with(|| {
                    class_names.push(cell.clone());
                    next
                });
                labels.push(y);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: *no,
                column: j + 1,
                message: format!("cannot parse {cell:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    line: *no,
                    column: j + 1,
                });
            }
            values.push(v);
        }
    }
    let features = Array2::from_shape_vec((labels.len(), n), values).expect("row widths checked");
    Dataset::new(features, labels, class_names, feature_names)
}

/// Writes the dataset as comma-separated text with a header row and the
/// label in the last column named `class`. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_csv_string(ds)).map_err(|e| Error::io(path, e))
}

pub fn to_csv_string(ds: &Dataset) -> String {
    let mut out = String::new();
    for name in &ds.feature_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("class\n");
    for (row, &y) in ds.features.outer_iter().zip(&ds.labels) {
        for v in row {
            let _ = write!(out, "{v:?},");
        }
        out.push_str(&ds.class_names[y]);
        out.push('\n');
    }
    out
}

/// Fold assignment per sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    k: usize,
    assignments: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn new(k: usize, assignments: Vec<usize>, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
        }
        if let Some(&bad) = assignments.iter().find(|&&f| f >= k) {
            return Err(Error::OutOfRange(format!("fold index {bad} with k = {k}")));
        }
        Ok(FoldPlan {
            k,
            assignments,
            seed,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fold_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    /// One fold index per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.assignments.len() * 2);
        for f in &self.assignments {
            let _ = writeln!(s, "{f}");
        }
        s
    }

    /// Reads a fold file. `k` defaults to one more than the largest index.
    pub fn from_text(text: &str, k: Option<usize>) -> Result<Self> {
        let mut assignments = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let f = t.parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("fold index {t:?} is not a non-negative integer"),
            })?;
            assignments.push(f);
        }
        if assignments.is_empty() {
            return Err(Error::EmptyFile);
        }
        let k = k.unwrap_or_else(|| assignments.iter().max().map_or(0, |m| m + 1));
        FoldPlan::new(k, assignments, 0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, k: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FoldPlan::from_text(&text, k)
    }

    /// Checks the plan covers exactly `ds`.
    pub fn check_against(&self, ds: &Dataset) -> Result<()> {
        if self.assignments.len() != ds.sample_count() {
            return Err(Error::Shape(format!(
                "fold plan has {} entries, dataset has {} samples",
                self.assignments.len(),
                ds.sample_count()
            )));
        }
        Ok(())
    }
}

/// Seeded stratified k-fold assignment.
///
/// Each class is shuffled, the classes are laid end to end, and consecutive
/// positions are dealt to folds round-robin. Per-class fold counts therefore
/// differ by at most one, as do total fold sizes. When `best_effort` is false
/// every class must have at least `k` samples.
pub fn stratified_kfold(ds: &Dataset, k: usize, seed: u64, best_effort: bool) -> Result<FoldPlan> {
    let m = ds.sample_count();
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
    }
    if k > m {
        return Err(Error::InvalidArgument(format!("fold count {k} exceeds {m} samples")));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count()];
    for (i, &y) in ds.labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if !best_effort {
        if let Some((p, rows)) = by_class
            .iter()
            .enumerate()
            .find(|(_, rows)| !rows.is_empty() && rows.len() < k)
        {
            return Err(Error::InvalidArgument(format!(
                "class {:?} has {} samples, fewer than {k} folds",
                ds.class_names[p],
                rows.len()
            )));
        }
    }
    let mut rng = seed::rng(seed::derive(seed, "stratified_kfold", k as u64));
    let mut assignments = vec![0; m];
    let mut pos = 0usize;
    for rows in &mut by_class {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            assignments[i] = pos % k;
            pos += 1;
        }
    }
    FoldPlan::new(k, assignments, seed)
}

/// Returns `(train, test)` where test holds the samples assigned to `fold`.
pub fn split(ds: &Dataset, plan: &FoldPlan, fold: usize) -> Result<(Dataset, Dataset)> {
    if fold >= plan.k {
        return Err(Error::OutOfRange(format!("fold {fold} with k = {}", plan.k)));
    }
    plan.check_against(ds)?;
    let (test, train): (Vec<usize>, Vec<usize>) =
        (0..ds.sample_count()).partition(|&i| plan.assignments[i] == fold);
    Ok((ds.select(&train), ds.select(&test)))
}
