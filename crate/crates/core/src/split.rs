//! Node impurity, threshold scanning and best-split search.
//!
//! Losses are count-weighted sums, so the children loss of a split is
//! `L(left) + L(right)` and is directly comparable with the parent's loss.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::{Curves, Grid};
use crate::features::{extract_features, FeatureKind, NodeLabels, TemplateCurve};
use crate::scalar::Scalar;
use crate::weights::{NodeWeights, WeightKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeLoss {
    Gini,
    Mse,
}

/// Responses of the samples in a node.
#[derive(Clone, Copy, Debug)]
pub enum NodeResponse<'a, T> {
    Labels { labels: &'a [usize], n_classes: usize },
    Targets(&'a [T]),
}

impl<'a, T: Scalar> NodeResponse<'a, T> {
    pub fn len(&self) -> usize {
        match self {
            Self::Labels { labels, .. } => labels.len(),
            Self::Targets(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn loss_kind(&self) -> NodeLoss {
        match self {
            Self::Labels { .. } => NodeLoss::Gini,
            Self::Targets(_) => NodeLoss::Mse,
        }
    }

    pub fn node_labels(&self) -> Option<NodeLabels<'a>> {
        match *self {
            Self::Labels { labels, n_classes } => Some(NodeLabels { labels, n_classes }),
            Self::Targets(_) => None,
        }
    }

    /// Gathers the responses at `order` into an owned buffer.
    fn gather(&self, order: &[usize]) -> OwnedResponse<T> {
        match self {
            Self::Labels { labels, n_classes } => OwnedResponse::Labels {
                labels: order.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Self::Targets(t) => OwnedResponse::Targets(order.iter().map(|&i| t[i]).collect()),
        }
    }
}

enum OwnedResponse<T> {
    Labels { labels: Vec<usize>, n_classes: usize },
    Targets(Vec<T>),
}

impl<T: Scalar> OwnedResponse<T> {
    fn slice(&self, range: std::ops::Range<usize>) -> NodeResponse<'_, T> {
        match self {
            Self::Labels { labels, n_classes } => NodeResponse::Labels {
                labels: &labels[range],
                n_classes: *n_classes,
            },
            Self::Targets(t) => NodeResponse::Targets(&t[range]),
        }
    }
}

/// `n * (1 - sum_k q_k^2)` from class counts.
pub fn gini_from_counts<T: Scalar>(counts: &[usize], n: usize) -> T {
    if n == 0 {
        return T::zero();
    }
    let nf = T::count(n);
    let sq = counts.iter().fold(T::zero(), |acc, &c| acc + T::count(c) * T::count(c));
    nf - sq / nf
}

/// Sum of squared deviations from the mean.
fn sum_sq_dev<T: Scalar>(values: &[T]) -> T {
    let n = T::count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    values.iter().fold(T::zero(), |acc, &y| acc + (y - mean) * (y - mean))
}

/// Count-weighted node impurity: Gini `n (1 - sum q_k^2)` or MSE `sum (y - ybar)^2`.
pub fn node_loss<T: Scalar>(responses: &NodeResponse<'_, T>, kind: NodeLoss) -> Result<T> {
    if responses.is_empty() {
        return Err(Error::InsufficientData("loss of an empty node".into()));
    }
    if kind != responses.loss_kind() {
        return Err(Error::InvalidConfig(format!(
            "{kind:?} loss does not match the response type"
        )));
    }
    Ok(match responses {
        NodeResponse::Labels { labels, n_classes } => {
            let mut counts = vec![0; *n_classes];
            for &l in *labels {
                counts[l] += 1;
            }
            gini_from_counts(&counts, labels.len())
        }
        NodeResponse::Targets(t) => sum_sq_dev(t),
    })
}

/// Best split of a single feature column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdSplit<T> {
    /// Samples with `value <= threshold` go left.
    pub threshold: T,
    pub impurity: T,
    pub left_count: usize,
    pub right_count: usize,
}

fn midpoint<T: Scalar>(a: T, b: T) -> T {
    let m = a + (b - a) / T::lit(2.0);
    if m >= b {
        a
    } else {
        m
    }
}

/// Scans every boundary between consecutive distinct sorted values, keeping
/// at least `min_leaf` samples on each side, and returns the one minimizing
/// `L(left) + L(right)`. Ties go to the smaller threshold.
pub fn best_threshold<T: Scalar>(
    values: &[T],
    responses: &NodeResponse<'_, T>,
    kind: NodeLoss,
    min_leaf: usize,
) -> Result<Option<ThresholdSplit<T>>> {
    let m = values.len();
    if m != responses.len() {
        return Err(Error::Dimension {
            expected: m,
            found: responses.len(),
        });
    }
    if kind != responses.loss_kind() {
        return Err(Error::InvalidConfig(format!(
            "{kind:?} loss does not match the response type"
        )));
    }
    let min_leaf = min_leaf.max(1);
    if m < 2 * min_leaf {
        return Ok(None);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidConfig("NaN feature value".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let sorted: Vec<T> = order.iter().map(|&i| values[i]).collect();
    let gathered = responses.gather(&order);

    // Boundary b puts sorted[..b] on the left.
    let mut best: Option<(usize, T)> = None;
    let mut consider = |b: usize, impurity: T| {
        if sorted[b - 1] < sorted[b] && best.is_none_or(|(_, v)| impurity < v) {
            best = Some((b, impurity));
        }
    };
    match &gathered {
        OwnedResponse::Labels { labels, n_classes } => {
            let mut left = vec![0usize; *n_classes];
            let mut right = vec![0usize; *n_classes];
            for &l in labels {
                right[l] += 1;
            }
            for b in 1..m {
                let l = labels[b - 1];
                left[l] += 1;
                right[l] -= 1;
                if b >= min_leaf && m - b >= min_leaf {
                    consider(b, gini_from_counts::<T>(&left, b) + gini_from_counts::<T>(&right, m - b));
                }
            }
        }
        OwnedResponse::Targets(t) => {
            // Shift by the node mean for a better conditioned running sum.
            let shift = t.iter().copied().sum::<T>() / T::count(m);
            let (mut sl, mut ql) = (T::zero(), T::zero());
            let (mut sr, mut qr) = (T::zero(), T::zero());
            for &y in t {
                let d = y - shift;
                sr = sr + d;
                qr = qr + d * d;
            }
            for b in 1..m {
                let d = t[b - 1] - shift;
                sl = sl + d;
                ql = ql + d * d;
                sr = sr - d;
                qr = qr - d * d;
                if b >= min_leaf && m - b >= min_leaf {
                    let nl = T::count(b);
                    let nr = T::count(m - b);
                    let loss = (ql - sl * sl / nl).max(T::zero()) + (qr - sr * sr / nr).max(T::zero());
                    consider(b, loss);
                }
            }
        }
    }
    Ok(best.map(|(b, _)| {
        // Report the impurity recomputed from the partition itself.
        let impurity = node_loss_unchecked(&gathered.slice(0..b)) + node_loss_unchecked(&gathered.slice(b..m));
        ThresholdSplit {
            threshold: midpoint(sorted[b - 1], sorted[b]),
            impurity,
            left_count: b,
            right_count: m - b,
        }
    }))
}

fn node_loss_unchecked<T: Scalar>(r: &NodeResponse<'_, T>) -> T {
    node_loss(r, r.loss_kind()).unwrap_or_else(|_| T::zero())
}

/// A weighted-feature split of a node.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCandidate<T> {
    pub covariate: usize,
    pub weight_kind: WeightKind,
    pub weights: Vec<T>,
    pub feature: FeatureKind,
    pub template: Option<TemplateCurve<T>>,
    pub threshold: T,
    pub impurity: T,
    pub left_count: usize,
    pub right_count: usize,
}

/// Best split over every (covariate, weight, feature) column of a node.
///
/// `curves[q]` holds the node's unstandardized curves of covariate `q`.
/// Ties are resolved by covariate, then weight kind, then feature kind, then
/// the smaller threshold.
pub fn best_split<T: Scalar>(
    curves: &[Curves<T>],
    grids: &[Grid<T>],
    node_weights: &NodeWeights<T>,
    responses: &NodeResponse<'_, T>,
    kind: NodeLoss,
    min_leaf: usize,
) -> Result<Option<SplitCandidate<T>>> {
    if curves.len() != grids.len() || curves.len() != node_weights.covariates.len() {
        return Err(Error::Dimension {
            expected: curves.len(),
            found: node_weights.covariates.len(),
        });
    }
    let labels = responses.node_labels();
    let jobs: Vec<(usize, usize)> = node_weights
        .covariates
        .iter()
        .enumerate()
        .flat_map(|(q, ws)| (0..ws.len()).map(move |k| (q, k)))
        .collect();
    let per_job: Vec<Result<Vec<SplitCandidate<T>>>> = jobs
        .par_iter()
        .map(|&(q, k)| {
            let weight = &node_weights.covariates[q][k];
            let features = extract_features(&curves[q], &grids[q], weight.kind, &weight.values, labels)?;
            let mut found = Vec::new();
            for col in features.columns {
                if let Some(s) = best_threshold(&col.values, responses, kind, min_leaf)? {
                    found.push(SplitCandidate {
                        covariate: q,
                        weight_kind: weight.kind,
                        weights: weight.values.clone(),
                        feature: col.feature,
                        template: col.template,
                        threshold: s.threshold,
                        impurity: s.impurity,
                        left_count: s.left_count,
                        right_count: s.right_count,
                    });
                }
            }
            Ok(found)
        })
        .collect();

    // Jobs and columns are already in canonical order; keep the first minimum.
    let mut best: Option<SplitCandidate<T>> = None;
    for job in per_job {
        for cand in job? {
            if best.as_ref().is_none_or(|b| cand.impurity < b.impurity) {
                best = Some(cand);
            }
        }
    }
    Ok(best)
}

/// An axis-parallel split on a single column of a matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisSplitCandidate<T> {
    pub covariate: usize,
    pub grid_index: usize,
    pub threshold: T,
    pub impurity: T,
    pub left_count: usize,
    pub right_count: usize,
}

/// Best axis-parallel split over every column of every matrix in `curves`
/// (grid evaluations of each covariate, or a scalar feature matrix). Ties go
/// to the smaller covariate, then the smaller column, then the smaller threshold.
pub fn axis_best_split<T: Scalar>(
    curves: &[Curves<T>],
    responses: &NodeResponse<'_, T>,
    kind: NodeLoss,
    min_leaf: usize,
) -> Result<Option<AxisSplitCandidate<T>>> {
    let jobs: Vec<(usize, usize)> = curves
        .iter()
        .enumerate()
        .flat_map(|(q, c)| (0..c.n_cols()).map(move |j| (q, j)))
        .collect();
    let found: Vec<Result<Option<AxisSplitCandidate<T>>>> = jobs
        .par_iter()
        .map(|&(q, j)| {
            let column: Vec<T> = curves[q].rows().map(|r| r[j]).collect();
            Ok(
                best_threshold(&column, responses, kind, min_leaf)?.map(|s| AxisSplitCandidate {
                    covariate: q,
                    grid_index: j,
                    threshold: s.threshold,
                    impurity: s.impurity,
                    left_count: s.left_count,
                    right_count: s.right_count,
                }),
            )
        })
        .collect();
    let mut best: Option<AxisSplitCandidate<T>> = None;
    for cand in found {
        if let Some(c) = cand? {
            if best.is_none_or(|b| c.impurity < b.impurity) {
                best = Some(c);
            }
        }
    }
    Ok(best)
}
