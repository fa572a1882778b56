use std::fs;
use std::io::Write as _;
use std::path::PathBuf;

use aefrc::dataset::LabelColumn;
use aefrc::pipeline::Model;
use clap::Args;
use ndarray::Array2;

use crate::Failure;

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    /// Rows to classify. Columns are matched to the model's features by
    /// header name when possible, else by position.
    #[arg(long)]
    input: PathBuf,
    /// Label column (name or zero-based index); enables an accuracy line.
    #[arg(long)]
    label: Option<String>,
    /// Predictions file [default: stdout].
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Feature rows of a prediction input, plus labels when asked for.
#[derive(Debug)]
struct Input {
    x: Array2<f64>,
    labels: Option<Vec<String>>,
}

fn cells(line: &str, delim: char) -> Vec<&str> {
    line.split(delim).map(str::trim).collect()
}

fn read_input(text: &str, model: &Model, label: Option<&LabelColumn>) -> Result<Input, Failure> {
    let n = model.feature_names.len();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('@'))
        .collect();
    let Some(&(_, first)) = lines.first() else {
        return Ok(Input {
            x: Array2::zeros((0, n)),
            labels: label.map(|_| Vec::new()),
        });
    };
    let delim = if first.contains(';') { ';' } else { ',' };
    let first_cells = cells(first, delim);
    let label_idx = match label {
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => Some(
            first_cells
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Failure::Data(format!("label column {name:?} not found")))?,
        ),
        None => None,
    };
    let has_header = first_cells
        .iter()
        .enumerate()
        .any(|(j, c)| Some(j) != label_idx && c.parse::<f64>().is_err());
    let width = first_cells.len();
    let feature_cols: Vec<usize> = if has_header {
        let by_name: Option<Vec<usize>> = model
            .feature_names
            .iter()
            .map(|f| first_cells.iter().position(|c| c == f))
            .collect();
        match by_name {
            Some(cols) => cols,
            None => (0..width).filter(|&j| Some(j) != label_idx).collect(),
        }
    } else {
        (0..width).filter(|&j| Some(j) != label_idx).collect()
    };
    if feature_cols.len() != n {
        return Err(Failure::Data(format!(
            "input has {} feature columns, the model expects {n} ({})",
            feature_cols.len(),
            model.feature_names.join(", ")
        )));
    }
    let body = if has_header { &lines[1..] } else { &lines[..] };
    let mut x = Array2::zeros((body.len(), n));
    let mut labels = Vec::with_capacity(body.len());
    for (r, &(no, line)) in body.iter().enumerate() {
        let row = cells(line, delim);
        if row.len() != width {
            return Err(Failure::Data(format!("line {no}: expected {width} columns, found {}", row.len())));
        }
        for (k, &j) in feature_cols.iter().enumerate() {
            let v: f64 = row[j]
                .parse()
                .map_err(|_| Failure::Data(format!("line {no}, column {}: {:?} is not a number", j + 1, row[j])))?;
            if !v.is_finite() {
                return Err(Failure::Data(format!("line {no}, column {}: non-finite value", j + 1)));
            }
            x[[r, k]] = v;
        }
        if let Some(l) = label_idx {
            let cell = row
                .get(l)
                .ok_or_else(|| Failure::Data(format!("line {no}: no label column {l}")))?;
            labels.push(cell.to_string());
        }
    }
    Ok(Input {
        x,
        labels: label_idx.map(|_| labels),
    })
}

pub fn cmd_predict(args: &PredictArgs) -> Result<(), Failure> {
    let model = Model::load(&args.model, &args.rules)?;
    let text = fs::read_to_string(&args.input).map_err(|e| Failure::Data(format!("{}: {e}", args.input.display())))?;
    let label = args.label.as_deref().map(crate::parse_label);
    let input = read_input(&text, &model, label.as_ref())?;
    let pred = model.classify(&input.x)?;

    let mut out = String::new();
    out.push_str("row,class");
    for c in &model.class_names {
        out.push_str(&format!(",score_{c}"));
    }
    out.push_str(",tie\n");
    for (i, p) in pred.iter().enumerate() {
        out.push_str(&format!("{i},{}", model.class_names[p.class]));
        for s in &p.scores {
            out.push_str(&format!(",{s:e}"));
        }
        out.push_str(&format!(",{}\n", p.tie));
    }
    match &args.output {
        Some(path) => fs::write(path, &out).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?,
        None => {
            let _ = std::io::stdout().write_all(out.as_bytes());
        }
    }
    if let Some(labels) = &input.labels {
        if !labels.is_empty() {
            let hits = pred
                .iter()
                .zip(labels)
                .filter(|(p, l)| &model.class_names[p.class] == *l)
                .count();
            eprintln!(
                "accuracy {:.4} ({hits} of {})",
                hits as f64 / labels.len() as f64,
                labels.len()
            );
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> Model {
        let text = "a,b,class\n0,0,x\n0.1,0.2,x\n0.2,0.1,x\n1,1,y\n0.9,0.8,y\n0.8,0.9,y\n";
        let ds = aefrc::dataset::parse_csv(text, &aefrc::CsvSchema::default()).unwrap();
        let cfg = aefrc::pipeline::PipelineConfig {
            hidden: vec![2],
            ..Default::default()
        };
        aefrc::pipeline::train(&ds, &cfg, None).unwrap().model
    }

    #[test]
    fn columns_are_matched_by_name() {
        let m = tiny_model();
        let input = read_input("class,b,a\nx,2,1\n", &m, Some(&LabelColumn::Name("class".into()))).unwrap();
        assert_eq!(input.x.row(0).to_vec(), vec![1.0, 2.0]);
        assert_eq!(input.labels.unwrap(), vec!["x".to_string()]);
    }

    #[test]
    fn headerless_rows_are_positional() {
        let m = tiny_model();
        let input = read_input("1,2\n3,4\n", &m, None).unwrap();
        assert_eq!(input.x.nrows(), 2);
        assert!(input.labels.is_none());
    }

    #[test]
    fn empty_input_gives_no_rows() {
        let m = tiny_model();
        assert_eq!(read_input("", &m, None).unwrap().x.nrows(), 0);
        assert_eq!(read_input("a,b\n", &m, None).unwrap().x.nrows(), 0);
    }

    #[test]
    fn wrong_width_is_a_data_error() {
        let m = tiny_model();
        assert!(matches!(read_input("1,2,3\n", &m, None), Err(Failure::Data(_))));
    }
}
