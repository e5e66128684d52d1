//! Per-node weight function learning.
//!
//! Every node learns, for each covariate, three weight functions from the
//! three constraint sets of the solver and adds the uniform weight. The
//! learning problem sees standardized curves; the resulting weights are then
//! applied to the raw curves by the feature extractors.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::{standardize_apply, FunctionalDataset, Response, StandardizationStats};
use crate::optim::{solve_logistic_weights, solve_ls_weights, ConstraintSet, SolverConfig, SolverResult};
use crate::scalar::Scalar;

/// Origin of a node weight. The derived ordering is the canonical order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WeightKind {
    /// Nonnegative solution.
    #[serde(rename = "w_pos")]
    Pos,
    /// Absolute value of the nonpositive solution.
    #[serde(rename = "w_neg")]
    NegAbs,
    /// Sign-free solution.
    #[serde(rename = "w_sgn")]
    Sgn,
    #[serde(rename = "w_unif")]
    Uniform,
}

impl WeightKind {
    pub const ALL: [WeightKind; 4] = [Self::Pos, Self::NegAbs, Self::Sgn, Self::Uniform];

    pub fn symbol(&self) -> &'static str {
        match self {
            Self::Pos => "w_pos",
            Self::NegAbs => "w_neg",
            Self::Sgn => "w_sgn",
            Self::Uniform => "w_unif",
        }
    }

    /// Whether the weight defines a (nonnegative) measure.
    pub fn is_nonnegative(&self) -> bool {
        !matches!(self, Self::Sgn)
    }

    fn from_constraints(c: ConstraintSet) -> Self {
        match c {
            ConstraintSet::NonNegative => Self::Pos,
            ConstraintSet::NonPositive => Self::NegAbs,
            ConstraintSet::SignFree => Self::Sgn,
        }
    }
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeWeight<T> {
    pub kind: WeightKind,
    pub values: Vec<T>,
}

/// A learned candidate that was discarded.
#[derive(Clone, Debug, PartialEq)]
pub struct DroppedWeight {
    pub covariate: usize,
    pub constraints: ConstraintSet,
    pub reason: String,
}

/// Weights available at a node, per covariate, in canonical kind order.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeWeights<T> {
    pub covariates: Vec<Vec<NodeWeight<T>>>,
    pub dropped: Vec<DroppedWeight>,
}

/// Binary relabeling of a node: its modal class against the rest.
///
/// Ties go to the smallest label.
pub fn one_vs_rest(labels: &[usize], n_classes: usize) -> Vec<bool> {
    let modal = modal_class(labels, n_classes);
    labels.iter().map(|&l| l == modal).collect()
}

pub(crate) fn modal_class(labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    // max_by_key keeps the last maximum, so scan in reverse.
    (0..n_classes).rev().max_by_key(|&k| counts[k]).unwrap_or(0)
}

fn solve_one<T: Scalar>(
    dataset: &FunctionalDataset<T>,
    indices: &[usize],
    stats: &StandardizationStats<T>,
    q: usize,
    constraints: ConstraintSet,
    config: &SolverConfig<T>,
) -> Result<SolverResult<T>> {
    let cov = dataset.covariate(q);
    let curves = standardize_apply(&cov.values.select(indices), &stats.covariates[q])?;
    match dataset.response() {
        Response::Categorical { labels, n_classes } => {
            let node: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            let binary = one_vs_rest(&node, *n_classes);
            solve_logistic_weights(&curves, &binary, &cov.grid, constraints, config)
        }
        Response::Numeric(values) => {
            let targets: Vec<T> = indices.iter().map(|&i| values[i]).collect();
            solve_ls_weights(&curves, &targets, &cov.grid, constraints, config)
        }
    }
}

/// Learns the candidate weights of the node holding `indices`.
///
/// Degenerate nodes (a single class, constant targets) and failed solves drop
/// the learned candidates; the uniform weight is always kept.
pub fn learn_node_weights<T: Scalar>(
    indices: &[usize],
    dataset: &FunctionalDataset<T>,
    stats: &StandardizationStats<T>,
    config: &SolverConfig<T>,
) -> Result<NodeWeights<T>> {
    if indices.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "weight learning needs at least 2 samples, got {}",
            indices.len()
        )));
    }
    config.validate()?;
    let q_count = dataset.n_covariates();
    let jobs: Vec<(usize, ConstraintSet)> = (0..q_count)
        .flat_map(|q| ConstraintSet::ALL.into_iter().map(move |c| (q, c)))
        .collect();
    let solved: Vec<_> = jobs
        .par_iter()
        .map(|&(q, c)| (q, c, solve_one(dataset, indices, stats, q, c, config)))
        .collect();

    let mut covariates: Vec<Vec<NodeWeight<T>>> = vec![Vec::new(); q_count];
    let mut dropped = Vec::new();
    for (q, constraints, outcome) in solved {
        let reason = match outcome {
            Ok(r) if r.is_usable(constraints) => {
                let kind = WeightKind::from_constraints(constraints);
                let values = match kind {
                    WeightKind::NegAbs => r.w.iter().map(|v| v.abs()).collect(),
                    _ => r.w,
                };
                covariates[q].push(NodeWeight { kind, values });
                continue;
            }
            Ok(r) => format!("solver status {:?}, kkt residual {}", r.status, r.kkt_residual),
            Err(e @ (Error::SingleClass | Error::ConstantTarget | Error::Singular)) => e.to_string(),
            Err(e) => return Err(e),
        };
        dropped.push(DroppedWeight {
            covariate: q,
            constraints,
            reason,
        });
    }
    for (q, list) in covariates.iter_mut().enumerate() {
        list.push(NodeWeight {
            kind: WeightKind::Uniform,
            values: vec![T::one(); dataset.covariate(q).grid.len()],
        });
        list.sort_by_key(|w| w.kind);
    }
    Ok(NodeWeights { covariates, dropped })
}
