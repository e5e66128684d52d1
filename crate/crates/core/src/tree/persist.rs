//! JSON persistence of fitted models.
//!
//! Values are stored as `f64` whatever the scalar type of the model, which is
//! lossless for both `f32` and `f64`. Nodes are stored as a flat preorder
//! array so that deep trees do not hit the JSON recursion limit.

use serde::{Deserialize, Serialize};

use super::{MuCartModel, Prediction, SplitRule, TreeConfig, TreeNode};
use crate::error::{Error, Result};
use crate::fdata::{CovariateStats, Grid, StandardizationStats};
use crate::features::{FeDescriptor, FeatureKind, TemplateCurve, TemplateOrigin};
use crate::optim::SolverConfig;
use crate::scalar::Scalar;
use crate::weights::WeightKind;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDto {
    format_version: u32,
    config: ConfigDto,
    covariate_names: Vec<String>,
    grids: Vec<Grid<f64>>,
    stats: StandardizationStats<f64>,
    n_samples: usize,
    n_classes: Option<usize>,
    target_range: Option<(f64, f64)>,
    fe_features: Vec<FeDto>,
    nodes: Vec<NodeDto>,
}

#[derive(Serialize, Deserialize)]
struct ConfigDto {
    task: crate::fdata::Task,
    splitter: super::Splitter,
    min_samples_leaf: usize,
    max_height: Option<usize>,
    solver: SolverConfig<f64>,
}

#[derive(Serialize, Deserialize)]
struct TemplateDto {
    origin: TemplateOrigin,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FeDto {
    covariate: usize,
    feature: FeatureKind,
    template: Option<TemplateDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
enum RuleDto {
    Measure {
        covariate: usize,
        weight_kind: WeightKind,
        weights: Vec<f64>,
        feature: FeatureKind,
        template: Option<TemplateDto>,
        threshold: f64,
    },
    Axis {
        covariate: usize,
        grid_index: usize,
        threshold: f64,
    },
    Feature {
        column: usize,
        threshold: f64,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeDto {
    Internal {
        depth: usize,
        count: usize,
        split: RuleDto,
        left: usize,
        right: usize,
    },
    Leaf {
        depth: usize,
        count: usize,
        label: Option<usize>,
        proportions: Option<Vec<f64>>,
        value: Option<f64>,
    },
}

fn to_f64<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn from_f64<T: Scalar>(v: &[f64]) -> Result<Vec<T>> {
    v.iter().map(|&x| scalar(x)).collect()
}

fn scalar<T: Scalar>(x: f64) -> Result<T> {
    T::from_f64(x)
        .filter(|v| v.is_finite() || !x.is_finite())
        .ok_or_else(|| Error::CorruptPayload(format!("value {x} out of range")))
}

fn template_dto<T: Scalar>(t: &Option<TemplateCurve<T>>) -> Option<TemplateDto> {
    t.as_ref().map(|t| TemplateDto {
        origin: t.origin,
        values: to_f64(&t.values),
    })
}

fn template_back<T: Scalar>(t: Option<TemplateDto>) -> Result<Option<TemplateCurve<T>>> {
    t.map(|t| {
        Ok(TemplateCurve {
            values: from_f64(&t.values)?,
            origin: t.origin,
        })
    })
    .transpose()
}

fn grid_back<T: Scalar>(g: &Grid<f64>) -> Result<Grid<T>> {
    Grid::new(scalar(g.start())?, scalar(g.end())?, g.len()).map_err(|e| Error::CorruptPayload(e.to_string()))
}

fn stats_back<T: Scalar>(s: &StandardizationStats<f64>) -> Result<StandardizationStats<T>> {
    Ok(StandardizationStats {
        covariates: s
            .covariates
            .iter()
            .map(|c| {
                Ok(CovariateStats {
                    mean: from_f64(&c.mean)?,
                    std: from_f64(&c.std)?,
                })
            })
            .collect::<Result<_>>()?,
    })
}

fn flatten<T: Scalar>(node: &TreeNode<T>, out: &mut Vec<NodeDto>) {
    match node {
        TreeNode::Leaf {
            prediction,
            depth,
            count,
            ..
        } => out.push(match prediction {
            Prediction::Class { label, proportions } => NodeDto::Leaf {
                depth: *depth,
                count: *count,
                label: Some(*label),
                proportions: Some(to_f64(proportions)),
                value: None,
            },
            Prediction::Value(v) => NodeDto::Leaf {
                depth: *depth,
                count: *count,
                label: None,
                proportions: None,
                value: Some(v.as_f64()),
            },
        }),
        TreeNode::Internal {
            rule,
            left,
            right,
            depth,
            count,
            ..
        } => {
            let split = match rule {
                SplitRule::Measure {
                    covariate,
                    weight_kind,
                    weights,
                    feature,
                    template,
                    threshold,
                } => RuleDto::Measure {
                    covariate: *covariate,
                    weight_kind: *weight_kind,
                    weights: to_f64(weights),
                    feature: *feature,
                    template: template_dto(template),
                    threshold: threshold.as_f64(),
                },
                SplitRule::Axis {
                    covariate,
                    grid_index,
                    threshold,
                } => RuleDto::Axis {
                    covariate: *covariate,
                    grid_index: *grid_index,
                    threshold: threshold.as_f64(),
                },
                SplitRule::Feature { column, threshold } => RuleDto::Feature {
                    column: *column,
                    threshold: threshold.as_f64(),
                },
            };
            let at = out.len();
            out.push(NodeDto::Internal {
                depth: *depth,
                count: *count,
                split,
                left: 0,
                right: 0,
            });
            let l = out.len();
            flatten(left, out);
            let r = out.len();
            flatten(right, out);
            if let NodeDto::Internal { left, right, .. } = &mut out[at] {
                *left = l;
                *right = r;
            }
        }
    }
}

/// Serializes a model to JSON.
pub fn serialize<T: Scalar>(model: &MuCartModel<T>) -> Result<String> {
    let mut nodes = Vec::with_capacity(model.root.n_nodes());
    flatten(&model.root, &mut nodes);
    let c = &model.config;
    let dto = ModelDto {
        format_version: FORMAT_VERSION,
        config: ConfigDto {
            task: c.task,
            splitter: c.splitter,
            min_samples_leaf: c.min_samples_leaf,
            max_height: c.max_height,
            solver: SolverConfig {
                lambda: c.solver.lambda.as_f64(),
                tol: c.solver.tol.as_f64(),
                max_newton_iters: c.solver.max_newton_iters,
                barrier_init: c.solver.barrier_init.as_f64(),
                barrier_factor: c.solver.barrier_factor.as_f64(),
                barrier_min: c.solver.barrier_min.as_f64(),
            },
        },
        covariate_names: model.covariate_names.clone(),
        grids: model
            .grids
            .iter()
            .map(|g| Grid::new(g.start().as_f64(), g.end().as_f64(), g.len()))
            .collect::<Result<_>>()?,
        stats: StandardizationStats {
            covariates: model
                .stats
                .covariates
                .iter()
                .map(|s| CovariateStats {
                    mean: to_f64(&s.mean),
                    std: to_f64(&s.std),
                })
                .collect(),
        },
        n_samples: model.n_samples,
        n_classes: model.n_classes,
        target_range: model.target_range.map(|(a, b)| (a.as_f64(), b.as_f64())),
        fe_features: model
            .fe_features
            .iter()
            .map(|d| FeDto {
                covariate: d.covariate,
                feature: d.feature,
                template: template_dto(&d.template),
            })
            .collect(),
        nodes,
    };
    serde_json::to_string_pretty(&dto).map_err(|e| Error::CorruptPayload(e.to_string()))
}

struct Rebuild<'a, T> {
    nodes: &'a mut [Option<NodeDto>],
    q: usize,
    grid_lens: Vec<usize>,
    n_fe: usize,
    n_classes: Option<usize>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Scalar> Rebuild<'_, T> {
    fn corrupt(msg: impl Into<String>) -> Error {
        Error::CorruptPayload(msg.into())
    }

    fn check_curve(&self, covariate: usize, len: usize) -> Result<()> {
        if covariate >= self.q {
            return Err(Self::corrupt(format!("covariate index {covariate} out of range")));
        }
        if len != self.grid_lens[covariate] {
            return Err(Self::corrupt(format!("curve of length {len} on covariate {covariate}")));
        }
        Ok(())
    }

    fn node(&mut self, at: usize, depth: usize) -> Result<TreeNode<T>> {
        let dto = self
            .nodes
            .get_mut(at)
            .and_then(Option::take)
            .ok_or_else(|| Self::corrupt(format!("node {at} missing or referenced twice")))?;
        match dto {
            NodeDto::Leaf {
                depth: d,
                count,
                label,
                proportions,
                value,
            } => {
                if d != depth {
                    return Err(Self::corrupt(format!("node {at} has depth {d}, expected {depth}")));
                }
                let prediction = match (self.n_classes, label, proportions, value) {
                    (Some(k), Some(label), Some(p), None) if label < k && p.len() == k => Prediction::Class {
                        label,
                        proportions: from_f64(&p)?,
                    },
                    (None, None, None, Some(v)) => Prediction::Value(scalar(v)?),
                    _ => return Err(Self::corrupt(format!("leaf {at} does not match the task"))),
                };
                Ok(TreeNode::Leaf {
                    id: at,
                    prediction,
                    depth,
                    count,
                })
            }
            NodeDto::Internal {
                depth: d,
                count,
                split,
                left,
                right,
            } => {
                if d != depth {
                    return Err(Self::corrupt(format!("node {at} has depth {d}, expected {depth}")));
                }
                let rule = match split {
                    RuleDto::Measure {
                        covariate,
                        weight_kind,
                        weights,
                        feature,
                        template,
                        threshold,
                    } => {
                        self.check_curve(covariate, weights.len())?;
                        if let Some(t) = &template {
                            self.check_curve(covariate, t.values.len())?;
                        }
                        if feature.needs_template() != template.is_some() {
                            return Err(Self::corrupt(format!("node {at}: template does not match feature")));
                        }
                        SplitRule::Measure {
                            covariate,
                            weight_kind,
                            weights: from_f64(&weights)?,
                            feature,
                            template: template_back(template)?,
                            threshold: scalar(threshold)?,
                        }
                    }
                    RuleDto::Axis {
                        covariate,
                        grid_index,
                        threshold,
                    } => {
                        if covariate >= self.q || grid_index >= self.grid_lens[covariate] {
                            return Err(Self::corrupt(format!("node {at}: axis index out of range")));
                        }
                        SplitRule::Axis {
                            covariate,
                            grid_index,
                            threshold: scalar(threshold)?,
                        }
                    }
                    RuleDto::Feature { column, threshold } => {
                        if column >= self.n_fe {
                            return Err(Self::corrupt(format!("node {at}: feature column {column} out of range")));
                        }
                        SplitRule::Feature {
                            column,
                            threshold: scalar(threshold)?,
                        }
                    }
                };
                let left = self.node(left, depth + 1)?;
                let right = self.node(right, depth + 1)?;
                Ok(TreeNode::Internal {
                    id: at,
                    rule,
                    left: Box::new(left),
                    right: Box::new(right),
                    depth,
                    count,
                })
            }
        }
    }
}

/// Restores a model written by [`serialize`].
pub fn deserialize<T: Scalar>(json: &str) -> Result<MuCartModel<T>> {
    if json.trim().is_empty() {
        return Err(Error::CorruptPayload("empty payload".into()));
    }
    let value: serde_json::Value = serde_json::from_str(json).map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let version = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::CorruptPayload("missing format_version".into()))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            expected: FORMAT_VERSION,
            found: u32::try_from(version).unwrap_or(u32::MAX),
        });
    }
    let dto: ModelDto = serde_json::from_value(value).map_err(|e| Error::CorruptPayload(e.to_string()))?;

    let q = dto.grids.len();
    if dto.covariate_names.len() != q || dto.stats.covariates.len() != q {
        return Err(Error::CorruptPayload("covariate metadata lengths disagree".into()));
    }
    let grids: Vec<Grid<T>> = dto.grids.iter().map(grid_back).collect::<Result<_>>()?;
    for (g, s) in grids.iter().zip(&dto.stats.covariates) {
        if s.mean.len() != g.len() || s.std.len() != g.len() {
            return Err(Error::CorruptPayload(
                "standardization statistics do not match the grid".into(),
            ));
        }
    }
    let fe_features = dto
        .fe_features
        .into_iter()
        .map(|f| {
            if f.covariate >= q {
                return Err(Error::CorruptPayload("feature covariate out of range".into()));
            }
            Ok(FeDescriptor {
                covariate: f.covariate,
                feature: f.feature,
                template: template_back(f.template)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let c = dto.config;
    let config = TreeConfig {
        task: c.task,
        splitter: c.splitter,
        min_samples_leaf: c.min_samples_leaf,
        max_height: c.max_height,
        solver: SolverConfig {
            lambda: scalar(c.solver.lambda)?,
            tol: scalar(c.solver.tol)?,
            max_newton_iters: c.solver.max_newton_iters,
            barrier_init: scalar(c.solver.barrier_init)?,
            barrier_factor: scalar(c.solver.barrier_factor)?,
            barrier_min: scalar(c.solver.barrier_min)?,
        },
    };
    if dto.nodes.is_empty() {
        return Err(Error::CorruptPayload("model has no nodes".into()));
    }
    let total = dto.nodes.len();
    let mut nodes: Vec<Option<NodeDto>> = dto.nodes.into_iter().map(Some).collect();
    let mut rebuild = Rebuild::<T> {
        nodes: &mut nodes,
        q,
        grid_lens: grids.iter().map(Grid::len).collect(),
        n_fe: fe_features.len(),
        n_classes: dto.n_classes,
        _marker: std::marker::PhantomData,
    };
    let mut root = rebuild.node(0, 0)?;
    if nodes.iter().any(Option::is_some) {
        return Err(Error::CorruptPayload("unreachable nodes in payload".into()));
    }
    let mut next = 0;
    root.renumber(&mut next);
    debug_assert_eq!(next, total);
    Ok(MuCartModel {
        root,
        config,
        covariate_names: dto.covariate_names,
        grids,
        stats: stats_back(&dto.stats)?,
        n_samples: dto.n_samples,
        n_classes: dto.n_classes,
        target_range: dto
            .target_range
            .map(|(a, b)| Ok::<_, Error>((scalar(a)?, scalar(b)?)))
            .transpose()?,
        fe_features,
    })
}
