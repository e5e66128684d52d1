//! Greedy recursive tree growth and prediction.
//!
//! Three splitters share the growth procedure:
//!
//! * [`Splitter::MuCart`] learns node weights and splits on weighted integral
//!   features of the curves;
//! * [`Splitter::Axis`] is plain CART on the grid evaluations;
//! * [`Splitter::AxisOnFe`] is plain CART on whole-domain features computed
//!   once before growth.
//!
//! Growth stops at pure nodes, nodes with fewer than `2 * min_samples_leaf`
//! samples, and at `max_height`. There is no pruning.

mod dot;
mod persist;

pub use dot::{export_dot, write_weight_csvs, DotOptions};
pub use persist::{deserialize, serialize, FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fdata::{
    standardize_fit, CovariateStats, Curves, FunctionalCovariate, FunctionalDataset, Grid, Response, StandardizationStats, Task,
    GRID_TOLERANCE,
};
use crate::features::{fe_baseline_features, feature_value, FeDescriptor, FeatureKind, TemplateCurve};
use crate::optim::SolverConfig;
use crate::scalar::Scalar;
use crate::split::{axis_best_split, best_split, NodeLoss, NodeResponse};
use crate::weights::{learn_node_weights, modal_class, WeightKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Splitter {
    #[serde(rename = "mucart")]
    MuCart,
    Axis,
    /// Axis-parallel CART on the whole-domain feature matrix.
    #[serde(rename = "axis-fe")]
    AxisOnFe,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeConfig<T> {
    pub task: Task,
    pub splitter: Splitter,
    pub min_samples_leaf: usize,
    pub solver: SolverConfig<T>,
    pub max_height: Option<usize>,
}

impl<T: Scalar> TreeConfig<T> {
    pub fn new(task: Task, splitter: Splitter) -> Self {
        Self {
            task,
            splitter,
            min_samples_leaf: 1,
            solver: SolverConfig::default(),
            max_height: None,
        }
    }

    pub fn min_samples_leaf(mut self, n: usize) -> Self {
        self.min_samples_leaf = n;
        self
    }

    pub fn lambda(mut self, lambda: T) -> Self {
        self.solver.lambda = lambda;
        self
    }

    pub fn max_height(mut self, h: Option<usize>) -> Self {
        self.max_height = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig("min_samples_leaf must be >= 1".into()));
        }
        if self.splitter == Splitter::MuCart {
            self.solver.validate()?;
        }
        Ok(())
    }
}

/// Decision stored in an internal node; samples satisfying `value <= threshold`
/// go left.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitRule<T> {
    /// Weighted integral feature of one covariate.
    Measure {
        covariate: usize,
        weight_kind: WeightKind,
        weights: Vec<T>,
        feature: FeatureKind,
        template: Option<TemplateCurve<T>>,
        threshold: T,
    },
    /// Grid evaluation `x_q(t_j)`.
    Axis {
        covariate: usize,
        grid_index: usize,
        threshold: T,
    },
    /// Column of the model's whole-domain feature set.
    Feature { column: usize, threshold: T },
}

impl<T: Scalar> SplitRule<T> {
    pub fn threshold(&self) -> T {
        match self {
            Self::Measure { threshold, .. } | Self::Axis { threshold, .. } | Self::Feature { threshold, .. } => *threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction<T> {
    Class { label: usize, proportions: Vec<T> },
    Value(T),
}

impl<T: Scalar> Prediction<T> {
    pub fn label(&self) -> Option<usize> {
        match self {
            Self::Class { label, .. } => Some(*label),
            Self::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<T> {
        match self {
            Self::Value(v) => Some(*v),
            Self::Class { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode<T> {
    Internal {
        id: usize,
        rule: SplitRule<T>,
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
        depth: usize,
        count: usize,
    },
    Leaf {
        id: usize,
        prediction: Prediction<T>,
        depth: usize,
        count: usize,
    },
}

impl<T: Scalar> TreeNode<T> {
    /// Preorder index of the node.
    pub fn id(&self) -> usize {
        match self {
            Self::Internal { id, .. } | Self::Leaf { id, .. } => *id,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Self::Internal { depth, .. } | Self::Leaf { depth, .. } => *depth,
        }
    }

    pub fn count(&self) -> usize {
        match self {
            Self::Internal { count, .. } | Self::Leaf { count, .. } => *count,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Self::Leaf { .. })
    }

    /// Maximum leaf depth below (and including) this node.
    pub fn height(&self) -> usize {
        match self {
            Self::Leaf { depth, .. } => *depth,
            Self::Internal { left, right, .. } => left.height().max(right.height()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        match self {
            Self::Leaf { .. } => 1,
            Self::Internal { left, right, .. } => 1 + left.n_nodes() + right.n_nodes(),
        }
    }

    /// Visits nodes in preorder.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode<T>)) {
        f(self);
        if let Self::Internal { left, right, .. } = self {
            left.walk(f);
            right.walk(f);
        }
    }

    fn renumber(&mut self, next: &mut usize) {
        match self {
            Self::Leaf { id, .. } => {
                *id = *next;
                *next += 1;
            }
            Self::Internal { id, left, right, .. } => {
                *id = *next;
                *next += 1;
                left.renumber(next);
                right.renumber(next);
            }
        }
    }
}

/// A fitted tree together with everything needed to predict.
#[derive(Clone, Debug, PartialEq)]
pub struct MuCartModel<T> {
    pub root: TreeNode<T>,
    pub config: TreeConfig<T>,
    pub covariate_names: Vec<String>,
    pub grids: Vec<Grid<T>>,
    /// Training-set statistics used to standardize curves for weight learning.
    pub stats: StandardizationStats<T>,
    pub n_samples: usize,
    pub n_classes: Option<usize>,
    pub target_range: Option<(T, T)>,
    /// Whole-domain features referenced by [`SplitRule::Feature`].
    pub fe_features: Vec<FeDescriptor<T>>,
}

impl<T: Scalar> MuCartModel<T> {
    pub fn height(&self) -> usize {
        self.root.height()
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    pub fn task(&self) -> Task {
        self.config.task
    }

    fn check_sample(&self, sample: &[&[T]]) -> Result<()> {
        check_len(self.grids.len(), sample.len())?;
        for (grid, curve) in self.grids.iter().zip(sample) {
            check_len(grid.len(), curve.len())?;
        }
        Ok(())
    }

    fn goes_left(&self, rule: &SplitRule<T>, sample: &[&[T]]) -> Result<bool> {
        let value = match rule {
            SplitRule::Measure {
                covariate,
                weights,
                feature,
                template,
                ..
            } => feature_value(
                *feature,
                sample[*covariate],
                weights,
                template.as_ref().map(|t| t.values.as_slice()),
                &self.grids[*covariate],
            ),
            SplitRule::Axis {
                covariate, grid_index, ..
            } => Ok(sample[*covariate][*grid_index]),
            SplitRule::Feature { column, .. } => self
                .fe_features
                .get(*column)
                .ok_or_else(|| Error::CorruptPayload(format!("feature column {column} missing")))?
                .evaluate(sample, &self.grids),
        };
        match value {
            Ok(v) => Ok(v <= rule.threshold()),
            // A curve with zero weighted norm has no cosine; route it left.
            Err(Error::DegenerateNorm) => Ok(true),
            Err(e) => Err(e),
        }
    }

    /// The leaf reached by `sample` (one curve per covariate).
    pub fn leaf(&self, sample: &[&[T]]) -> Result<&TreeNode<T>> {
        self.check_sample(sample)?;
        let mut node = &self.root;
        while let TreeNode::Internal { rule, left, right, .. } = node {
            node = if self.goes_left(rule, sample)? { left } else { right };
        }
        Ok(node)
    }

    pub fn predict(&self, sample: &[&[T]]) -> Result<&Prediction<T>> {
        match self.leaf(sample)? {
            TreeNode::Leaf { prediction, .. } => Ok(prediction),
            TreeNode::Internal { .. } => unreachable!("descent ends at a leaf"),
        }
    }

    /// Predicts every row of a set of covariates whose grids match the model's.
    pub fn predict_covariates(&self, covariates: &[FunctionalCovariate<T>]) -> Result<Vec<Prediction<T>>> {
        check_len(self.grids.len(), covariates.len())?;
        for (grid, cov) in self.grids.iter().zip(covariates) {
            check_len(grid.len(), cov.grid.len())?;
            let tol = T::lit(GRID_TOLERANCE) * grid.domain_length().abs().max(T::one());
            if (grid.start() - cov.grid.start()).abs() > tol || (grid.end() - cov.grid.end()).abs() > tol {
                return Err(Error::InvalidConfig(format!(
                    "covariate {} grid [{}, {}] differs from the model grid [{}, {}]",
                    cov.name,
                    cov.grid.start(),
                    cov.grid.end(),
                    grid.start(),
                    grid.end()
                )));
            }
        }
        let n = covariates.first().map_or(0, |c| c.n_samples());
        (0..n)
            .map(|i| {
                let sample: Vec<&[T]> = covariates.iter().map(|c| c.values.row(i)).collect();
                self.predict(&sample).cloned()
            })
            .collect()
    }

    pub fn predict_dataset(&self, dataset: &FunctionalDataset<T>) -> Result<Vec<Prediction<T>>> {
        self.predict_covariates(dataset.covariates())
    }

    /// Accuracy for classification, mean squared error for regression.
    pub fn score(&self, dataset: &FunctionalDataset<T>) -> Result<T> {
        let predictions = self.predict_dataset(dataset)?;
        metric(&predictions, dataset.response())
    }

    /// Training-style loss: misclassification rate or mean squared error.
    pub fn loss(&self, dataset: &FunctionalDataset<T>) -> Result<T> {
        let s = self.score(dataset)?;
        Ok(match self.task() {
            Task::Classification => T::one() - s,
            Task::Regression => s,
        })
    }
}

/// Accuracy of class predictions, or mean squared error of value predictions.
pub fn metric<T: Scalar>(predictions: &[Prediction<T>], response: &Response<T>) -> Result<T> {
    check_len(response.len(), predictions.len())?;
    if predictions.is_empty() {
        return Err(Error::InsufficientData("no predictions to score".into()));
    }
    let n = T::count(predictions.len());
    match response {
        Response::Categorical { labels, .. } => {
            let hits = predictions.iter().zip(labels).filter(|(p, &y)| p.label() == Some(y)).count();
            Ok(T::count(hits) / n)
        }
        Response::Numeric(values) => {
            let sse = predictions
                .iter()
                .zip(values)
                .map(|(p, &y)| {
                    let d = p.value().unwrap_or_else(T::nan) - y;
                    d * d
                })
                .sum::<T>();
            Ok(sse / n)
        }
    }
}

fn leaf_prediction<T: Scalar>(response: &Response<T>, indices: &[usize]) -> Prediction<T> {
    match response {
        Response::Categorical { labels, n_classes } => {
            let node: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            let mut counts = vec![0usize; *n_classes];
            for &l in &node {
                counts[l] += 1;
            }
            let n = T::count(node.len().max(1));
            Prediction::Class {
                label: modal_class(&node, *n_classes),
                proportions: counts.iter().map(|&c| T::count(c) / n).collect(),
            }
        }
        Response::Numeric(values) => {
            let sum = indices.iter().map(|&i| values[i]).sum::<T>();
            Prediction::Value(sum / T::count(indices.len().max(1)))
        }
    }
}

fn is_homogeneous<T: Scalar>(response: &Response<T>, indices: &[usize]) -> bool {
    match response {
        Response::Categorical { labels, .. } => indices.windows(2).all(|w| labels[w[0]] == labels[w[1]]),
        Response::Numeric(values) => indices.windows(2).all(|w| values[w[0]] == values[w[1]]),
    }
}

struct Grower<'a, T> {
    dataset: &'a FunctionalDataset<T>,
    config: &'a TreeConfig<T>,
    stats: &'a StandardizationStats<T>,
    fe_matrix: Option<Curves<T>>,
    model: MuCartModel<T>,
    next_id: usize,
    /// Leaf id reached by each training sample.
    assignment: Vec<usize>,
}

impl<'a, T: Scalar> Grower<'a, T> {
    fn grow(&mut self, indices: Vec<usize>, depth: usize) -> Result<TreeNode<T>> {
        let id = self.next_id;
        self.next_id += 1;
        let count = indices.len();
        let min_leaf = self.config.min_samples_leaf;
        let response = self.dataset.response();

        let stop =
            count < 2 * min_leaf || is_homogeneous(response, &indices) || self.config.max_height.is_some_and(|h| depth >= h);
        let rule = if stop { None } else { self.find_rule(&indices)? };

        if let Some(rule) = rule {
            let mut left = Vec::new();
            let mut right = Vec::new();
            for &i in &indices {
                let sample = self.dataset.sample(i);
                if self.model.goes_left(&rule, &sample)? {
                    left.push(i);
                } else {
                    right.push(i);
                }
            }
            if left.len() >= min_leaf && right.len() >= min_leaf {
                let left_node = self.grow(left, depth + 1)?;
                let right_node = self.grow(right, depth + 1)?;
                return Ok(TreeNode::Internal {
                    id,
                    rule,
                    left: Box::new(left_node),
                    right: Box::new(right_node),
                    depth,
                    count,
                });
            }
        }
        for &i in &indices {
            self.assignment[i] = id;
        }
        Ok(TreeNode::Leaf {
            id,
            prediction: leaf_prediction(response, &indices),
            depth,
            count,
        })
    }

    fn find_rule(&self, indices: &[usize]) -> Result<Option<SplitRule<T>>> {
        let (labels, targets);
        let responses = match self.dataset.response() {
            Response::Categorical { labels: all, n_classes } => {
                labels = indices.iter().map(|&i| all[i]).collect::<Vec<_>>();
                NodeResponse::Labels {
                    labels: &labels,
                    n_classes: *n_classes,
                }
            }
            Response::Numeric(all) => {
                targets = indices.iter().map(|&i| all[i]).collect::<Vec<_>>();
                NodeResponse::Targets(&targets)
            }
        };
        let loss = responses.loss_kind();
        let min_leaf = self.config.min_samples_leaf;
        Ok(match self.config.splitter {
            Splitter::MuCart => {
                let weights = learn_node_weights(indices, self.dataset, self.stats, &self.config.solver)?;
                let curves: Vec<Curves<T>> = self.dataset.covariates().iter().map(|c| c.values.select(indices)).collect();
                best_split(&curves, &self.model.grids, &weights, &responses, loss, min_leaf)?.map(|c| SplitRule::Measure {
                    covariate: c.covariate,
                    weight_kind: c.weight_kind,
                    weights: c.weights,
                    feature: c.feature,
                    template: c.template,
                    threshold: c.threshold,
                })
            }
            Splitter::Axis => {
                let curves: Vec<Curves<T>> = self.dataset.covariates().iter().map(|c| c.values.select(indices)).collect();
                axis_best_split(&curves, &responses, loss, min_leaf)?.map(|c| SplitRule::Axis {
                    covariate: c.covariate,
                    grid_index: c.grid_index,
                    threshold: c.threshold,
                })
            }
            Splitter::AxisOnFe => {
                let fe = self.fe_matrix.as_ref().expect("feature matrix computed before growth");
                axis_best_split(&[fe.select(indices)], &responses, loss, min_leaf)?.map(|c| SplitRule::Feature {
                    column: c.grid_index,
                    threshold: c.threshold,
                })
            }
        })
    }
}

fn identity_stats<T: Scalar>(dataset: &FunctionalDataset<T>) -> StandardizationStats<T> {
    StandardizationStats {
        covariates: dataset
            .covariates()
            .iter()
            .map(|c| CovariateStats {
                mean: vec![T::zero(); c.grid.len()],
                std: vec![T::one(); c.grid.len()],
            })
            .collect(),
    }
}

/// Grows a tree on `dataset`.
pub fn fit<T: Scalar>(dataset: &FunctionalDataset<T>, config: &TreeConfig<T>) -> Result<MuCartModel<T>> {
    fit_traced(dataset, config).map(|(m, _)| m)
}

/// Like [`fit`], also returning the id of the leaf each training sample was
/// routed to during growth.
pub fn fit_traced<T: Scalar>(dataset: &FunctionalDataset<T>, config: &TreeConfig<T>) -> Result<(MuCartModel<T>, Vec<usize>)> {
    config.validate()?;
    let n = dataset.n_samples();
    if n == 0 {
        return Err(Error::InsufficientData("cannot fit on an empty dataset".into()));
    }
    if dataset.task() != config.task {
        return Err(Error::InvalidConfig(format!(
            "configured for {:?} but the response is {:?}",
            config.task,
            dataset.task()
        )));
    }
    let stats = if n >= 2 {
        standardize_fit(dataset)?
    } else {
        identity_stats(dataset)
    };
    let (fe_matrix, fe_features) = if config.splitter == Splitter::AxisOnFe {
        let fe = fe_baseline_features(dataset)?;
        (Some(fe.matrix), fe.descriptors)
    } else {
        (None, Vec::new())
    };
    let target_range = match dataset.response() {
        Response::Numeric(v) => Some(
            v.iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &y| (lo.min(y), hi.max(y))),
        ),
        Response::Categorical { .. } => None,
    };
    let model = MuCartModel {
        root: TreeNode::Leaf {
            id: 0,
            prediction: Prediction::Value(T::zero()),
            depth: 0,
            count: 0,
        },
        config: *config,
        covariate_names: dataset.covariates().iter().map(|c| c.name.clone()).collect(),
        grids: dataset.grids(),
        stats: stats.clone(),
        n_samples: n,
        n_classes: dataset.response().n_classes(),
        target_range,
        fe_features,
    };
    let mut grower = Grower {
        dataset,
        config,
        stats: &stats,
        fe_matrix,
        model,
        next_id: 0,
        assignment: vec![0; n],
    };
    let root = grower.grow((0..n).collect(), 0)?;
    let mut model = grower.model;
    model.root = root;
    Ok((model, grower.assignment))
}

/// Loss of the training partition: Gini or squared error summed over leaves.
pub fn resubstitution_impurity<T: Scalar>(model: &MuCartModel<T>, dataset: &FunctionalDataset<T>) -> Result<T> {
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..dataset.n_samples() {
        let leaf = model.leaf(&dataset.sample(i))?.id();
        groups.entry(leaf).or_default().push(i);
    }
    let mut total = T::zero();
    for idx in groups.values() {
        total = total
            + match dataset.response() {
                Response::Categorical { labels, n_classes } => {
                    let l: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
                    crate::split::node_loss(
                        &NodeResponse::<T>::Labels {
                            labels: &l,
                            n_classes: *n_classes,
                        },
                        NodeLoss::Gini,
                    )?
                }
                Response::Numeric(values) => {
                    let t: Vec<T> = idx.iter().map(|&i| values[i]).collect();
                    crate::split::node_loss(&NodeResponse::Targets(&t), NodeLoss::Mse)?
                }
            };
    }
    Ok(total)
}
