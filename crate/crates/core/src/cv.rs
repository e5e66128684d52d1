//! Repeated K-fold cross-validation with an inner grid search.
//!
//! For every repeat and outer fold, `(lambda, min_samples_leaf)` is chosen by
//! inner K-fold validation on the outer training part, the tree is refit on
//! that whole part and scored on the outer test fold. The report lists one
//! row per outer fold in `(repeat, fold)` order followed by `mean` and `sd`
//! rows, and contains nothing that varies between runs with the same seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fdata::{FunctionalDataset, Response, Task};
use crate::scalar::Scalar;
use crate::tree::{fit, Splitter, TreeConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct CvSpec<T> {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub repeats: usize,
    pub lambda_grid: Vec<T>,
    pub min_leaf_grid: Vec<usize>,
    /// Stratify folds by class; ignored for regression.
    pub stratified: bool,
    pub seed: u64,
}

impl<T: Scalar> Default for CvSpec<T> {
    fn default() -> Self {
        Self {
            outer_folds: 5,
            inner_folds: 3,
            repeats: 5,
            lambda_grid: [0.01, 0.1, 1.0, 10.0].into_iter().map(T::lit).collect(),
            min_leaf_grid: vec![2, 5, 10],
            stratified: true,
            seed: 0,
        }
    }
}

impl<T: Scalar> CvSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 || self.inner_folds < 2 {
            return Err(Error::InvalidConfig("fold counts must be >= 2".into()));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be >= 1".into()));
        }
        if self.lambda_grid.is_empty() || self.min_leaf_grid.is_empty() {
            return Err(Error::InvalidConfig("hyperparameter grids must be non-empty".into()));
        }
        if self.lambda_grid.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
            return Err(Error::InvalidConfig("lambda grid values must be positive".into()));
        }
        if self.min_leaf_grid.contains(&0) {
            return Err(Error::InvalidConfig("min_leaf grid values must be >= 1".into()));
        }
        Ok(())
    }
}

/// Assigns each sample a fold in `0..k`.
///
/// Samples are shuffled (within each class when stratified) and dealt round
/// robin, continuing across classes, so fold sizes differ by at most one and
/// class counts per fold differ by at most one.
pub fn assign_folds<T: Scalar>(response: &Response<T>, k: usize, stratified: bool, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = response.len();
    if k < 2 || n < k {
        return Err(Error::InsufficientData(format!("cannot make {k} folds from {n} samples")));
    }
    let groups: Vec<Vec<usize>> = match response {
        Response::Categorical { labels, n_classes } if stratified => {
            let mut g = vec![Vec::new(); *n_classes];
            for (i, &l) in labels.iter().enumerate() {
                g[l].push(i);
            }
            g
        }
        _ => vec![(0..n).collect()],
    };
    let mut folds = vec![0; n];
    let mut next = 0;
    for mut group in groups {
        group.shuffle(rng);
        for i in group {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

fn split_indices(folds: &[usize], f: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != f)
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Whether `a` is a better validation score than `b`.
fn better<T: Scalar>(task: Task, a: T, b: T) -> bool {
    match task {
        Task::Classification => a > b,
        Task::Regression => a < b,
    }
}

/// Outcome of one outer fold.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldRecord<T> {
    pub repeat: usize,
    pub fold: usize,
    pub chosen_lambda: Option<T>,
    pub chosen_min_leaf: Option<usize>,
    /// Accuracy for classification, mean squared error for regression.
    pub test_metric: Option<T>,
    pub tree_height: Option<usize>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvReport<T> {
    pub task: Task,
    pub records: Vec<FoldRecord<T>>,
    /// Outer fold of every sample, per repeat.
    pub folds: Vec<Vec<usize>>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, sd)
}

impl<T: Scalar> CvReport<T> {
    fn column(&self, f: impl Fn(&FoldRecord<T>) -> Option<f64>) -> Vec<f64> {
        self.records.iter().filter_map(f).collect()
    }

    /// Mean and sample standard deviation of the outer test metric.
    pub fn metric_summary(&self) -> (f64, f64) {
        mean_sd(&self.column(|r| r.test_metric.map(Scalar::as_f64)))
    }

    pub fn height_summary(&self) -> (f64, f64) {
        mean_sd(&self.column(|r| r.tree_height.map(|h| h as f64)))
    }

    pub fn n_failed(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }

    /// The report as CSV.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        let mut out = String::from("repeat,fold,chosen_lambda,chosen_min_leaf,test_metric,tree_height,error\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.repeat,
                r.fold,
                opt(r.chosen_lambda.map(|v| v.to_string())),
                opt(r.chosen_min_leaf.map(|v| v.to_string())),
                opt(r.test_metric.map(|v| v.to_string())),
                opt(r.tree_height.map(|v| v.to_string())),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            );
        }
        let cols = [
            self.column(|r| r.chosen_lambda.map(Scalar::as_f64)),
            self.column(|r| r.chosen_min_leaf.map(|v| v as f64)),
            self.column(|r| r.test_metric.map(Scalar::as_f64)),
            self.column(|r| r.tree_height.map(|v| v as f64)),
        ];
        let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_sd(c)).collect();
        let row = |pick: fn(&(f64, f64)) -> f64| stats.iter().map(|s| pick(s).to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(out, "mean,,{},", row(|s| s.0));
        let _ = writeln!(out, "sd,,{},", row(|s| s.1));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Writes `repeat,sample,fold` rows so external tools can reuse the folds.
    pub fn write_folds(&self, path: &Path) -> Result<()> {
        let mut out = String::from("repeat,sample,fold\n");
        for (r, folds) in self.folds.iter().enumerate() {
            for (i, f) in folds.iter().enumerate() {
                let _ = writeln!(out, "{r},{i},{f}");
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

struct Choice<T> {
    lambda: T,
    min_leaf: usize,
}

/// Inner grid search on `train`; returns the chosen hyperparameters.
fn grid_search<T: Scalar>(
    train: &FunctionalDataset<T>,
    base: &TreeConfig<T>,
    spec: &CvSpec<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Choice<T>> {
    let folds = assign_folds(train.response(), spec.inner_folds, spec.stratified, rng)?;
    let splits: Vec<(FunctionalDataset<T>, FunctionalDataset<T>)> = (0..spec.inner_folds)
        .map(|f| {
            let (tr, va) = split_indices(&folds, f);
            (train.select(&tr), train.select(&va))
        })
        .collect();
    let min_train = splits.iter().map(|(tr, _)| tr.n_samples()).min().unwrap_or(0);

    let mut lambdas = spec.lambda_grid.clone();
    lambdas.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    lambdas.dedup();
    if base.splitter != Splitter::MuCart {
        // lambda only affects weight learning
        lambdas.truncate(1);
    }
    let mut leaves = spec.min_leaf_grid.clone();
    leaves.sort_unstable_by(|a, b| b.cmp(a));
    leaves.dedup();
    // Candidates in tie-break order: smaller lambda first, then larger min_leaf.
    let combos: Vec<(T, usize)> = lambdas
        .iter()
        .flat_map(|&l| leaves.iter().map(move |&m| (l, m)))
        .filter(|&(_, m)| 2 * m <= min_train)
        .collect();
    if combos.is_empty() {
        return Err(Error::InsufficientData(format!(
            "fold too small for min_samples_leaf: inner training folds have {min_train} samples"
        )));
    }
    let jobs: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (0..splits.len()).map(move |f| (c, f)))
        .collect();
    let scores: Vec<Result<T>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (lambda, min_leaf) = combos[c];
            let cfg = TreeConfig {
                min_samples_leaf: min_leaf,
                ..base.lambda(lambda)
            };
            let (tr, va) = &splits[f];
            fit(tr, &cfg)?.score(va)
        })
        .collect();

    let mut best: Option<(usize, T)> = None;
    for (c, chunk) in scores.chunks(splits.len()).enumerate() {
        let mut total = T::zero();
        let mut ok = true;
        for s in chunk {
            match s {
                Ok(v) => total = total + *v,
                Err(_) => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let mean = total / T::count(chunk.len());
        if best.is_none_or(|(_, b)| better(base.task, mean, b)) {
            best = Some((c, mean));
        }
    }
    let (c, _) = best.ok_or_else(|| Error::InsufficientData("no hyperparameter combination could be evaluated".into()))?;
    Ok(Choice {
        lambda: combos[c].0,
        min_leaf: combos[c].1,
    })
}

fn outer_fold<T: Scalar>(
    dataset: &FunctionalDataset<T>,
    base: &TreeConfig<T>,
    spec: &CvSpec<T>,
    folds: &[usize],
    repeat: usize,
    fold: usize,
) -> FoldRecord<T> {
    let mut record = FoldRecord {
        repeat,
        fold,
        chosen_lambda: None,
        chosen_min_leaf: None,
        test_metric: None,
        tree_height: None,
        error: None,
    };
    let result = (|| {
        let (tr, te) = split_indices(folds, fold);
        let train = dataset.select(&tr);
        let test = dataset.select(&te);
        let mut rng = stream_rng(spec.seed, ((repeat as u64 + 1) << 32) | fold as u64);
        let choice = grid_search(&train, base, spec, &mut rng)?;
        record.chosen_lambda = Some(choice.lambda);
        record.chosen_min_leaf = Some(choice.min_leaf);
        let cfg = TreeConfig {
            min_samples_leaf: choice.min_leaf,
            ..base.lambda(choice.lambda)
        };
        let model = fit(&train, &cfg)?;
        record.tree_height = Some(model.height());
        record.test_metric = Some(model.score(&test)?);
        Ok::<_, Error>(())
    })();
    if let Err(e) = result {
        record.error = Some(e.to_string());
    }
    record
}

/// Runs repeated nested cross-validation of `base` on `dataset`.
///
/// `base.solver.lambda` and `base.min_samples_leaf` are replaced by the
/// values chosen in the inner search. Failures inside an outer fold are
/// recorded in its row and do not stop the run.
pub fn cross_validate<T: Scalar>(dataset: &FunctionalDataset<T>, base: &TreeConfig<T>, spec: &CvSpec<T>) -> Result<CvReport<T>> {
    spec.validate()?;
    base.validate()?;
    if dataset.task() != base.task {
        return Err(Error::InvalidConfig(format!(
            "configured for {:?} but the response is {:?}",
            base.task,
            dataset.task()
        )));
    }
    let folds: Vec<Vec<usize>> = (0..spec.repeats)
        .map(|r| {
            assign_folds(
                dataset.response(),
                spec.outer_folds,
                spec.stratified,
                &mut stream_rng(spec.seed, r as u64),
            )
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..spec.repeats)
        .flat_map(|r| (0..spec.outer_folds).map(move |f| (r, f)))
        .collect();
    let records = jobs
        .par_iter()
        .map(|&(r, f)| outer_fold(dataset, base, spec, &folds[r], r, f))
        .collect();
    Ok(CvReport {
        task: base.task,
        records,
        folds,
    })
}
