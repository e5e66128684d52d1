//! `mucart`: simulate, train, predict, evaluate, cross-validate and export
//! functional-data trees from the command line.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mucart::cv::{cross_validate, CvSpec};
use mucart::fdata::{load_covariates_csv, load_csv, write_csv, GridSpec, Task};
use mucart::sim::{generate, NormalScale, SimConfig};
use mucart::tree::{deserialize, export_dot, fit, serialize, write_weight_csvs, DotOptions, Prediction, Splitter, TreeConfig};
use mucart::{Dataset, Model};

#[derive(Parser)]
#[command(name = "mucart", version, about = "Measure-inducing trees for functional data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the two-covariate benchmark data as CSV files.
    Simulate(SimulateArgs),
    /// Fit a tree and save it as JSON.
    Train(TrainArgs),
    /// Predict with a saved tree.
    Predict(PredictArgs),
    /// Score a saved tree on labelled data.
    Evaluate(EvaluateArgs),
    /// Nested cross-validation with a grid search over lambda and min-leaf.
    Cv(CvArgs),
    /// Write a Graphviz rendering of a saved tree and its weight functions.
    Export(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Class,
    Reg,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Class => Task::Classification,
            TaskArg::Reg => Task::Regression,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitterArg {
    Mucart,
    Axis,
    #[value(name = "axis-fe")]
    AxisFe,
}

impl From<SplitterArg> for Splitter {
    fn from(s: SplitterArg) -> Self {
        match s {
            SplitterArg::Mucart => Splitter::MuCart,
            SplitterArg::Axis => Splitter::Axis,
            SplitterArg::AxisFe => Splitter::AxisOnFe,
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of samples.
    #[arg(short = 'n', long, default_value_t = 200)]
    n: usize,
    /// Grid points per curve.
    #[arg(short = 'p', long, default_value_t = 200)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Read the normal parameters as variances instead of standard deviations.
    #[arg(long)]
    variance_scale: bool,
    /// Output directory; receives x1.csv, x2.csv and y.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Covariate CSV (repeatable; order matters).
    #[arg(long = "covariate", required = true)]
    covariates: Vec<PathBuf>,
    /// Response CSV with a `label` or `target` column.
    #[arg(long)]
    response: PathBuf,
    /// Defaults to the type of the response file.
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let ds = load_csv::<f64, _>(&self.covariates, &self.response, GridSpec::Infer)?;
        if let Some(task) = self.task {
            let task = Task::from(task);
            if task != ds.task() {
                bail!(
                    "--task {task:?} does not match the {:?} response in {}",
                    ds.task(),
                    self.response.display()
                );
            }
        }
        Ok(ds)
    }
}

#[derive(Args)]
struct TreeArgs {
    #[arg(long, value_enum, default_value = "mucart")]
    splitter: SplitterArg,
    /// Ridge penalty of the weight learning.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long = "min-leaf", default_value_t = 5)]
    min_leaf: usize,
    #[arg(long)]
    max_height: Option<usize>,
}

impl TreeArgs {
    fn config(&self, task: Task) -> TreeConfig<f64> {
        TreeConfig::new(task, self.splitter.into())
            .lambda(self.lambda)
            .min_samples_leaf(self.min_leaf)
            .max_height(self.max_height)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tree: TreeArgs,
    /// Where to write the model JSON.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long = "covariate", required = true)]
    covariates: Vec<PathBuf>,
    /// Predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "mucart")]
    splitter: SplitterArg,
    /// Outer folds.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 3)]
    inner_folds: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "grid-lambda", value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0])]
    grid_lambda: Vec<f64>,
    #[arg(long = "grid-minleaf", value_delimiter = ',', default_values_t = [2, 5, 10])]
    grid_minleaf: Vec<usize>,
    /// Use plain rather than class-stratified folds.
    #[arg(long)]
    unstratified: bool,
    #[arg(long)]
    max_height: Option<usize>,
    /// Report CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the outer fold of every sample (repeat,sample,fold).
    #[arg(long)]
    folds_out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    /// DOT output file.
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-node weight CSVs.
    #[arg(long)]
    weights_dir: Option<PathBuf>,
    /// Significant digits of thresholds and leaf values.
    #[arg(long, default_value_t = 4)]
    precision: usize,
}

fn read_model(path: &Path) -> Result<Model> {
    let json = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize(&json).with_context(|| format!("loading model {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let scale = if args.variance_scale {
        NormalScale::Variance
    } else {
        NormalScale::StdDev
    };
    let ds = generate::<f64>(&SimConfig::new(args.n, args.seed).with_p(args.p).with_scale(scale))?;
    let (covariates, response) = write_csv(&ds, &args.out)?;
    for path in covariates.iter().chain([&response]) {
        println!("{}", path.display());
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let model = fit(&ds, &args.tree.config(ds.task()))?;
    std::fs::write(&args.model, serialize(&model)?).with_context(|| format!("writing {}", args.model.display()))?;
    println!("height {}", model.height());
    println!("leaves {}", model.n_leaves());
    println!("resubstitution loss {}", model.loss(&ds)?);
    Ok(())
}

fn predictions_csv(predictions: &[Prediction<f64>], n_classes: Option<usize>) -> String {
    let mut out = String::new();
    match n_classes {
        Some(k) => {
            out.push_str("label");
            for c in 0..k {
                let _ = write!(out, ",p{c}");
            }
            out.push('\n');
        }
        None => out.push_str("prediction\n"),
    }
    for p in predictions {
        match p {
            Prediction::Class { label, proportions } => {
                out.push_str(&label.to_string());
                for v in proportions {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
            Prediction::Value(v) => {
                let _ = writeln!(out, "{v}");
            }
        }
    }
    out
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let covariates = load_covariates_csv::<f64, _>(&args.covariates, GridSpec::Infer)?;
    let predictions = model.predict_covariates(&covariates)?;
    std::fs::write(&args.out, predictions_csv(&predictions, model.n_classes))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} predictions written to {}", predictions.len(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let ds = args.data.load()?;
    if ds.task() != model.task() {
        bail!("model is for {:?} but the response is {:?}", model.task(), ds.task());
    }
    let score = model.score(&ds)?;
    match ds.task() {
        Task::Classification => println!("accuracy {score}"),
        Task::Regression => println!("mse {score}"),
    }
    println!("loss {}", model.loss(&ds)?);
    Ok(())
}

fn cv(args: CvArgs) -> Result<()> {
    let ds = args.data.load()?;
    let spec = CvSpec {
        outer_folds: args.folds,
        inner_folds: args.inner_folds,
        repeats: args.repeats,
        lambda_grid: args.grid_lambda,
        min_leaf_grid: args.grid_minleaf,
        stratified: !args.unstratified,
        seed: args.seed,
    };
    let base = TreeConfig::new(ds.task(), args.splitter.into()).max_height(args.max_height);
    let report = cross_validate(&ds, &base, &spec)?;
    match &args.out {
        Some(path) => report.write_csv(path)?,
        None => print!("{}", report.to_csv()),
    }
    if let Some(path) = &args.folds_out {
        report.write_folds(path)?;
    }
    let (m, s) = report.metric_summary();
    let (h, hs) = report.height_summary();
    let metric = match ds.task() {
        Task::Classification => "accuracy",
        Task::Regression => "mse",
    };
    eprintln!(
        "{metric} {m:.4} ± {s:.4}, height {h:.2} ± {hs:.2}, failed folds {}",
        report.n_failed()
    );
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let model = read_model(&args.model)?;
    let opts = DotOptions {
        precision: args.precision,
        ..DotOptions::default()
    };
    std::fs::write(&args.out, export_dot(&model, &opts)).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(dir) = &args.weights_dir {
        let files = write_weight_csvs(&model, dir)?;
        println!("{} weight files written to {}", files.len(), dir.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Cv(a) => cv(a),
        Command::Export(a) => export(a),
    }
}
