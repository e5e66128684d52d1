//! Weighted integral features of a curve.
//!
//! A nonnegative weight `w` with `mean(w) = 1` induces a measure with the same
//! total mass as the Lebesgue measure on the domain. The extractors compute,
//! under that measure, the mean of a curve, its spread around that mean, and
//! its cosine similarity to a template curve.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fdata::{Curves, FunctionalDataset, Grid, Response};
use crate::scalar::Scalar;
use crate::weights::WeightKind;

/// Feature extractor. The derived ordering is the canonical tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Weighted mean.
    Mu,
    /// Weighted variance.
    Var,
    /// Weighted cosine similarity to the node mean curve.
    CosNode,
    /// Weighted cosine similarity to the mean curve of one class.
    CosClass(usize),
}

impl FeatureKind {
    pub fn symbol(&self) -> String {
        match self {
            Self::Mu => "f_μ".into(),
            Self::Var => "f_σ²".into(),
            Self::CosNode => "f_cosθ".into(),
            Self::CosClass(k) => format!("f_cosθ[{k}]"),
        }
    }

    pub fn needs_template(&self) -> bool {
        matches!(self, Self::CosNode | Self::CosClass(_))
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbol())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateOrigin {
    NodeMean,
    ClassMean(usize),
}

/// Reference curve for the cosine features.
#[derive(Clone, Debug, PartialEq)]
pub struct TemplateCurve<T> {
    pub values: Vec<T>,
    pub origin: TemplateOrigin,
}

/// `(1/|I|) * integral of x w`.
pub fn f_mu<T: Scalar>(x: &[T], w: &[T], grid: &Grid<T>) -> Result<T> {
    check_len(grid.len(), x.len())?;
    check_len(grid.len(), w.len())?;
    Ok(mu_unchecked(x, w, grid))
}

/// `integral of (x - xbar)^2 w`, with `xbar` the weighted mean [`f_mu`].
pub fn f_var<T: Scalar>(x: &[T], w: &[T], grid: &Grid<T>) -> Result<T> {
    check_len(grid.len(), x.len())?;
    check_len(grid.len(), w.len())?;
    Ok(var_unchecked(x, w, grid))
}

/// Weighted cosine similarity `<x, z>_w / (|x|_w |z|_w)`.
///
/// Fails with [`Error::DegenerateNorm`] when either weighted norm is zero.
pub fn rho_w<T: Scalar>(x: &[T], z: &[T], w: &[T], grid: &Grid<T>) -> Result<T> {
    check_len(grid.len(), x.len())?;
    check_len(grid.len(), z.len())?;
    check_len(grid.len(), w.len())?;
    let h = grid.cell_width();
    let z_norm2 = h * weighted_dot(z, z, w);
    cos_unchecked(x, z, z_norm2.sqrt(), w, grid)
}

fn weighted_dot<T: Scalar>(a: &[T], b: &[T], w: &[T]) -> T {
    a.iter().zip(b).zip(w).fold(T::zero(), |acc, ((&x, &y), &v)| acc + x * y * v)
}

fn mu_unchecked<T: Scalar>(x: &[T], w: &[T], grid: &Grid<T>) -> T {
    let s = x.iter().zip(w).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    grid.cell_width() * s / grid.domain_length()
}

fn var_unchecked<T: Scalar>(x: &[T], w: &[T], grid: &Grid<T>) -> T {
    let mean = mu_unchecked(x, w, grid);
    let s = x.iter().zip(w).fold(T::zero(), |acc, (&a, &b)| {
        let d = a - mean;
        acc + d * d * b
    });
    grid.cell_width() * s
}

fn cos_unchecked<T: Scalar>(x: &[T], z: &[T], z_norm: T, w: &[T], grid: &Grid<T>) -> Result<T> {
    let h = grid.cell_width();
    let x_norm = (h * weighted_dot(x, x, w)).sqrt();
    if !(x_norm > T::zero() && z_norm > T::zero()) || !(x_norm.is_finite() && z_norm.is_finite()) {
        return Err(Error::DegenerateNorm);
    }
    Ok(h * weighted_dot(x, z, w) / x_norm / z_norm)
}

/// Evaluates one feature of a curve; the single code path shared by training
/// and prediction.
pub fn feature_value<T: Scalar>(kind: FeatureKind, x: &[T], w: &[T], template: Option<&[T]>, grid: &Grid<T>) -> Result<T> {
    check_len(grid.len(), x.len())?;
    check_len(grid.len(), w.len())?;
    match kind {
        FeatureKind::Mu => Ok(mu_unchecked(x, w, grid)),
        FeatureKind::Var => Ok(var_unchecked(x, w, grid)),
        FeatureKind::CosNode | FeatureKind::CosClass(_) => {
            let z = template.ok_or_else(|| Error::InvalidConfig(format!("{kind} needs a template")))?;
            check_len(grid.len(), z.len())?;
            let z_norm = (grid.cell_width() * weighted_dot(z, z, w)).sqrt();
            cos_unchecked(x, z, z_norm, w, grid)
        }
    }
}

/// One feature column of a node: the values of a (weight, feature) pair over
/// the node's samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureColumn<T> {
    pub feature: FeatureKind,
    pub template: Option<TemplateCurve<T>>,
    pub values: Vec<T>,
}

/// A column dropped because a weighted norm vanished.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OmittedColumn {
    pub weight_kind: WeightKind,
    pub feature: FeatureKind,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatures<T> {
    pub columns: Vec<FeatureColumn<T>>,
    pub omitted: Vec<OmittedColumn>,
}

/// Class labels of the node, for the per-class cosine features.
#[derive(Clone, Copy, Debug)]
pub struct NodeLabels<'a> {
    pub labels: &'a [usize],
    pub n_classes: usize,
}

/// Feature extractors applicable to a weight kind: the cosine rules need a
/// nonnegative weight, so the signed weight keeps only the mean and variance.
pub fn feature_kinds(weight_kind: WeightKind, classes_present: &[usize]) -> Vec<FeatureKind> {
    let mut kinds = vec![FeatureKind::Mu, FeatureKind::Var];
    if weight_kind.is_nonnegative() {
        kinds.push(FeatureKind::CosNode);
        kinds.extend(classes_present.iter().map(|&k| FeatureKind::CosClass(k)));
    }
    kinds
}

/// Computes every feature column for one weight of one covariate over the
/// node's (unstandardized) curves.
pub fn extract_features<T: Scalar>(
    curves: &Curves<T>,
    grid: &Grid<T>,
    weight_kind: WeightKind,
    weights: &[T],
    labels: Option<NodeLabels<'_>>,
) -> Result<NodeFeatures<T>> {
    check_len(grid.len(), curves.n_cols())?;
    check_len(grid.len(), weights.len())?;
    if let Some(l) = labels {
        check_len(curves.n_rows(), l.labels.len())?;
    }
    let all: Vec<usize> = (0..curves.n_rows()).collect();
    let mut present = Vec::new();
    let mut class_members: Vec<Vec<usize>> = Vec::new();
    if let Some(l) = labels {
        class_members = vec![Vec::new(); l.n_classes];
        for (i, &y) in l.labels.iter().enumerate() {
            class_members[y].push(i);
        }
        present = (0..l.n_classes).filter(|&k| !class_members[k].is_empty()).collect();
    }

    let mut columns = Vec::new();
    let mut omitted = Vec::new();
    for feature in feature_kinds(weight_kind, &present) {
        let template = match feature {
            FeatureKind::CosNode => Some(TemplateCurve {
                values: curves.mean_of(&all),
                origin: TemplateOrigin::NodeMean,
            }),
            FeatureKind::CosClass(k) => Some(TemplateCurve {
                values: curves.mean_of(&class_members[k]),
                origin: TemplateOrigin::ClassMean(k),
            }),
            _ => None,
        };
        let tvals = template.as_ref().map(|t| t.values.as_slice());
        let values: Result<Vec<T>> = curves
            .rows()
            .map(|x| feature_value(feature, x, weights, tvals, grid))
            .collect();
        match values {
            Ok(values) => columns.push(FeatureColumn {
                feature,
                template,
                values,
            }),
            Err(Error::DegenerateNorm) => omitted.push(OmittedColumn {
                weight_kind,
                feature,
                reason: "zero weighted norm".into(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(NodeFeatures { columns, omitted })
}

/// One whole-domain feature: uniform weight on covariate `covariate`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeDescriptor<T> {
    pub covariate: usize,
    pub feature: FeatureKind,
    pub template: Option<TemplateCurve<T>>,
}

impl<T: Scalar> FeDescriptor<T> {
    pub fn evaluate(&self, sample: &[&[T]], grids: &[Grid<T>]) -> Result<T> {
        let grid = &grids[self.covariate];
        let ones = vec![T::one(); grid.len()];
        feature_value(
            self.feature,
            sample[self.covariate],
            &ones,
            self.template.as_ref().map(|t| t.values.as_slice()),
            grid,
        )
    }
}

/// Whole-domain feature matrix used by the feature-extraction baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct FeBaseline<T> {
    pub descriptors: Vec<FeDescriptor<T>>,
    /// `N x F` matrix, one column per descriptor.
    pub matrix: Curves<T>,
    pub omitted: Vec<(usize, FeatureKind)>,
}

/// Mean, variance and cosine features of every covariate under the uniform
/// weight, with templates taken from the whole dataset.
pub fn fe_baseline_features<T: Scalar>(dataset: &FunctionalDataset<T>) -> Result<FeBaseline<T>> {
    let n = dataset.n_samples();
    let labels = match dataset.response() {
        Response::Categorical { labels, n_classes } => Some(NodeLabels {
            labels,
            n_classes: *n_classes,
        }),
        Response::Numeric(_) => None,
    };
    let mut descriptors = Vec::new();
    let mut columns: Vec<Vec<T>> = Vec::new();
    let mut omitted = Vec::new();
    for (q, cov) in dataset.covariates().iter().enumerate() {
        let ones = vec![T::one(); cov.grid.len()];
        let nf = extract_features(&cov.values, &cov.grid, WeightKind::Uniform, &ones, labels)?;
        for col in nf.columns {
            descriptors.push(FeDescriptor {
                covariate: q,
                feature: col.feature,
                template: col.template,
            });
            columns.push(col.values);
        }
        omitted.extend(nf.omitted.into_iter().map(|o| (q, o.feature)));
    }
    let f = columns.len();
    let mut data = Vec::with_capacity(n * f);
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }
    Ok(FeBaseline {
        descriptors,
        matrix: Curves::from_flat(n, f, data)?,
        omitted,
    })
}
