//! Graphviz export of fitted trees.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{MuCartModel, Prediction, SplitRule, TreeNode};
use crate::error::Result;
use crate::fdata::write_row;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct DotOptions {
    /// Significant digits of thresholds and leaf values.
    pub precision: usize,
    pub show_counts: bool,
}

impl Default for DotOptions {
    fn default() -> Self {
        Self {
            precision: 4,
            show_counts: true,
        }
    }
}

fn num<T: Scalar>(v: T, precision: usize) -> String {
    let v = v.as_f64();
    if v == 0.0 || (1e-3..1e6).contains(&v.abs()) {
        let digits = precision.saturating_sub(1 + v.abs().log10().floor().max(0.0) as usize);
        format!("{v:.digits$}")
    } else {
        format!("{v:.prec$e}", prec = precision.saturating_sub(1))
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn rule_label<T: Scalar>(model: &MuCartModel<T>, rule: &SplitRule<T>, opts: &DotOptions) -> String {
    let s = num(rule.threshold(), opts.precision);
    match rule {
        SplitRule::Measure {
            covariate,
            weight_kind,
            feature,
            ..
        } => format!("{}\n{} − {}\n≤ {s}", model.covariate_names[*covariate], weight_kind, feature),
        SplitRule::Axis {
            covariate, grid_index, ..
        } => {
            let t = model.grids[*covariate].points()[*grid_index];
            format!("{}(t={})\n≤ {s}", model.covariate_names[*covariate], num(t, opts.precision))
        }
        SplitRule::Feature { column, .. } => {
            let d = &model.fe_features[*column];
            format!("{}\nw_unif − {}\n≤ {s}", model.covariate_names[d.covariate], d.feature)
        }
    }
}

fn leaf_label<T: Scalar>(prediction: &Prediction<T>, opts: &DotOptions) -> String {
    match prediction {
        Prediction::Class { label, proportions } => {
            let p: Vec<String> = proportions.iter().map(|&v| num(v, 3)).collect();
            format!("class {label}\n[{}]", p.join(", "))
        }
        Prediction::Value(v) => format!("ŷ = {}", num(*v, opts.precision)),
    }
}

/// Renders the tree as a Graphviz digraph; left edges are the `≤` branch.
pub fn export_dot<T: Scalar>(model: &MuCartModel<T>, opts: &DotOptions) -> String {
    let mut out = String::from("digraph mucart {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    model.root.walk(&mut |node| {
        let (mut label, shape) = match node {
            TreeNode::Internal { rule, .. } => (rule_label(model, rule, opts), "box"),
            TreeNode::Leaf { prediction, .. } => (leaf_label(prediction, opts), "ellipse"),
        };
        if opts.show_counts {
            label.push_str(&format!("\nn = {}", node.count()));
        }
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\", shape={shape}];",
            node.id(),
            escape(&label).replace('\n', "\\n")
        );
        if let TreeNode::Internal { left, right, .. } = node {
            let _ = writeln!(out, "  n{} -> n{} [label=\"yes\"];", node.id(), left.id());
            let _ = writeln!(out, "  n{} -> n{} [label=\"no\"];", node.id(), right.id());
        }
    });
    out.push_str("}\n");
    out
}

/// Writes the weight function of every measure split to
/// `dir/node_<id>_<covariate>_<kind>.csv`, one `t,w` row per grid point.
pub fn write_weight_csvs<T: Scalar>(model: &MuCartModel<T>, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut jobs = Vec::new();
    model.root.walk(&mut |node| {
        if let TreeNode::Internal {
            id,
            rule:
                SplitRule::Measure {
                    covariate,
                    weight_kind,
                    weights,
                    ..
                },
            ..
        } = node
        {
            jobs.push((*id, *covariate, *weight_kind, weights));
        }
    });
    let mut paths = Vec::with_capacity(jobs.len());
    for (id, q, kind, weights) in jobs {
        let path = dir.join(format!("node_{id}_{}_{}.csv", model.covariate_names[q], kind.symbol()));
        let mut out = BufWriter::new(File::create(&path)?);
        out.write_all(b"t,w\n")?;
        for (t, w) in model.grids[q].points().iter().zip(weights) {
            write_row(&mut out, &[*t, *w])?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
