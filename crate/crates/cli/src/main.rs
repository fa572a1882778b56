mod config;
mod predict;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use aefrc::dataset::{self, CsvSchema, FoldPlan, LabelColumn};
use aefrc::stats::{self, RankTable};
use clap::{Args, Parser, Subcommand};

/// Fuzzy rule classifiers on stacked autoencoder features.
#[derive(Debug, Parser)]
#[command(name = "aefrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-validate a configuration, optionally sweeping the sparsity target.
    Run(run::RunArgs),
    /// Classify a CSV file with a stored model and rule base.
    Predict(predict::PredictArgs),
    /// Friedman, Bonferroni-Dunn and sign tests on an error-rate table.
    Stats(StatsArgs),
    /// Write or check stored fold assignments.
    #[command(subcommand)]
    Folds(FoldsCommand),
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Table with a header of method names and one row per dataset.
    table: PathBuf,
    /// Method the others are compared against [default: last column].
    #[arg(long)]
    control: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Critical value for the Bonferroni-Dunn test instead of the table.
    #[arg(long)]
    q: Option<f64>,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset file; relative paths are looked up in the data directory.
    #[arg(long)]
    data: PathBuf,
    /// Header name or zero-based index of the label column.
    #[arg(long, default_value = "class")]
    label: String,
    /// The label is the last column.
    #[arg(long)]
    label_last: bool,
    #[arg(long)]
    no_header: bool,
    #[arg(long, env = config::DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> aefrc::Result<aefrc::Dataset> {
        let path = match &self.data_dir {
            Some(dir) if self.data.is_relative() && !self.data.exists() => dir.join(&self.data),
            _ => self.data.clone(),
        };
        let schema = CsvSchema {
            label: parse_label(&self.label),
            has_header: !self.no_header,
            delimiter: None,
            label_last: self.label_last,
        };
        dataset::load_csv(path, &schema)
    }
}

pub fn parse_label(s: &str) -> LabelColumn {
    s.parse().map_or_else(|_| LabelColumn::Name(s.to_string()), LabelColumn::Index)
}

#[derive(Debug, Subcommand)]
enum FoldsCommand {
    /// Generate stratified folds and write one fold index per row.
    Export {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        best_effort: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a fold file against a dataset and print per-fold class counts.
    Import {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        folds: PathBuf,
        /// Expected number of folds.
        #[arg(long)]
        k: Option<usize>,
    },
}

/// Failure with its exit code: 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<aefrc::Error> for Failure {
    fn from(e: aefrc::Error) -> Self {
        use aefrc::Error as E;
        let msg = e.to_string();
        match e {
            E::Config(_) | E::InvalidArgument(_) => Failure::Usage(msg),
            E::Numerical(_) | E::NonFiniteIntermediate { .. } => Failure::Numerical(msg),
            _ => Failure::Data(msg),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Predict(args) => predict::cmd_predict(&args),
        Command::Stats(args) => cmd_stats(&args),
        Command::Folds(cmd) => cmd_folds(&cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn cmd_stats(args: &StatsArgs) -> Result<(), Failure> {
    let table = RankTable::load(&args.table)?;
    let control = match &args.control {
        Some(c) => c.clone(),
        None => table.methods.last().cloned().expect("parsed tables have methods"),
    };
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Failure::Usage(format!("--alpha {} must lie in (0, 1)", args.alpha)));
    }
    let report = stats::analyze(&table, &control, args.alpha, args.q)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("plain data serializes"));
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

fn cmd_folds(cmd: &FoldsCommand) -> Result<(), Failure> {
    match cmd {
        FoldsCommand::Export {
            data,
            k,
            seed,
            best_effort,
            out,
        } => {
            let ds = data.load()?;
            let plan = dataset::stratified_kfold(&ds, *k, *seed, *best_effort)?;
            plan.save(out)?;
            println!("wrote {} fold assignments for {} rows to {}", plan.k(), ds.sample_count(), out.display());
        }
        FoldsCommand::Import { data, folds, k } => {
            let ds = data.load()?;
            let plan = FoldPlan::load(folds, *k)?;
            plan.check_against(&ds)?;
            println!("fold,size,{}", ds.class_names().join(","));
            for f in 0..plan.k() {
                let rows = plan.fold_rows(f);
                let mut counts = vec![0usize; ds.class_count()];
                for &r in &rows {
                    counts[ds.labels()[r]] += 1;
                }
                let counts: Vec<String> = counts.iter().map(usize::to_string).collect();
                println!("{f},{},{}", rows.len(), counts.join(","));
            }
        }
    }
    Ok(())
}
