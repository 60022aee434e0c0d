//! Versioned plain-text model format.
//!
//! ```text
//! loboost-gbm 1
//! n_features 1
//! base_value 1
//! learning_rate 1
//! n_trees 1
//! 0 0 split 0 0.5 1 2
//! 0 1 leaf 0 -1
//! 0 2 leaf 1 1
//! ```
//!
//! Node lines are `tree node kind fields...`: `split feature threshold left
//! right` or `leaf leaf_index value`. Reals use the shortest representation
//! that parses back to the same value.

use super::{BoostedEnsemble, RegressionTree, TreeNode};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const FORMAT_HEADER: &str = "loboost-gbm";
pub const FORMAT_VERSION: u32 = 1;

pub(super) fn write<T: Real>(m: &BoostedEnsemble<T>) -> String {
    let mut out = format!("{FORMAT_HEADER} {FORMAT_VERSION}\n");
    out += &format!("n_features {}\n", m.n_features);
    out += &format!("base_value {}\n", m.base_value);
    out += &format!("learning_rate {}\n", m.learning_rate);
    out += &format!("n_trees {}\n", m.trees.len());
    for (t, tree) in m.trees.iter().enumerate() {
        for (id, node) in tree.nodes().iter().enumerate() {
            match node {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => out += &format!("{t} {id} split {feature} {threshold} {left} {right}\n"),
                TreeNode::Leaf { leaf_index, value } => {
                    out += &format!("{t} {id} leaf {leaf_index} {value}\n")
                }
            }
        }
    }
    out
}

fn bad(line: usize, msg: impl Into<String>) -> Error {
    Error::Schema(format!("model text line {line}: {}", msg.into()))
}

fn num<V: std::str::FromStr>(line: usize, tok: Option<&str>, what: &str) -> Result<V> {
    tok.and_then(|s| s.parse().ok())
        .ok_or_else(|| bad(line, format!("expected {what}")))
}

fn keyed<V: std::str::FromStr>(
    lines: &mut std::iter::Enumerate<std::str::Lines<'_>>,
    key: &str,
) -> Result<V> {
    let (i, l) = lines
        .next()
        .ok_or_else(|| bad(0, format!("missing `{key}`")))?;
    let mut it = l.split_whitespace();
    if it.next() != Some(key) {
        return Err(bad(i + 1, format!("expected `{key}`")));
    }
    num(i + 1, it.next(), key)
}

pub(super) fn read<T: Real>(s: &str) -> Result<BoostedEnsemble<T>> {
    let mut lines = s.lines().enumerate();
    let (_, head) = lines.next().ok_or_else(|| bad(1, "empty model text"))?;
    let mut it = head.split_whitespace();
    if it.next() != Some(FORMAT_HEADER) {
        return Err(bad(1, "not a loboost-gbm model"));
    }
    let version: u32 = num(1, it.next(), "format version")?;
    if version != FORMAT_VERSION {
        return Err(bad(1, format!("unsupported format version {version}")));
    }
    let n_features: usize = keyed(&mut lines, "n_features")?;
    let base_value: T = keyed(&mut lines, "base_value")?;
    let learning_rate: T = keyed(&mut lines, "learning_rate")?;
    let n_trees: usize = keyed(&mut lines, "n_trees")?;

    let mut arenas: Vec<Vec<TreeNode<T>>> = vec![Vec::new(); n_trees];
    for (i, l) in lines {
        let ln = i + 1;
        if l.trim().is_empty() {
            continue;
        }
        let mut it = l.split_whitespace();
        let t: usize = num(ln, it.next(), "tree id")?;
        let id: usize = num(ln, it.next(), "node id")?;
        let arena = arenas
            .get_mut(t)
            .ok_or_else(|| bad(ln, "tree id out of range"))?;
        if id != arena.len() {
            return Err(bad(ln, "node ids must be consecutive from 0"));
        }
        let node = match it.next() {
            Some("split") => {
                let feature: usize = num(ln, it.next(), "feature")?;
                if feature >= n_features {
                    return Err(bad(ln, "feature index out of range"));
                }
                TreeNode::Split {
                    feature,
                    threshold: num(ln, it.next(), "threshold")?,
                    left: num(ln, it.next(), "left child")?,
                    right: num(ln, it.next(), "right child")?,
                }
            }
            Some("leaf") => TreeNode::Leaf {
                leaf_index: num(ln, it.next(), "leaf index")?,
                value: num(ln, it.next(), "leaf value")?,
            },
            _ => return Err(bad(ln, "node kind must be `split` or `leaf`")),
        };
        if it.next().is_some() {
            return Err(bad(ln, "trailing fields"));
        }
        arena.push(node);
    }
    let trees = arenas
        .into_iter()
        .enumerate()
        .map(|(t, nodes)| {
            RegressionTree::from_nodes(nodes)
                .ok_or_else(|| Error::Schema(format!("tree {t} is malformed")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoostedEnsemble::from_parts(
        base_value,
        learning_rate,
        n_features,
        trees,
    ))
}
