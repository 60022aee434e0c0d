//! Boosting-induced partition of feature space.
//!
//! Calibration points are grouped tree by tree on their leaf paths. At tree
//! `t` every active group is handled in one of three ways:
//!
//! * fewer than `n_part` members: the group becomes a terminal region;
//! * every member sits in the same leaf of tree `t`: the group passes
//!   through a tunneling node and tree `t` drops out of its defining prefix;
//! * otherwise: the group splits into one child per observed leaf.
//!
//! Groups still active after the last tree also become terminal. Sparse
//! regions are then merged into their nearest neighbour under the weighted
//! Hamming distance between defining prefixes.

use std::collections::BTreeMap;
use std::fmt;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::gbm::{BoostedEnsemble, LeafPath};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegionId(pub usize);

impl fmt::Display for RegionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One coordinate of a defining prefix; `None` marks a tunneled tree.
pub type PrefixEntry = Option<u32>;

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Children keyed by the leaf index observed at this node's tree.
    Split(BTreeMap<u32, usize>),
    /// Pass-through: every member shared one leaf at this tree.
    Tunnel(usize),
    /// Holds the pre-merge region id.
    Terminal(RegionId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionNode {
    /// Index of the tree this node inspects (= number of trees consumed above it).
    pub depth: usize,
    pub kind: NodeKind,
    pub member_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub prefix: Vec<PrefixEntry>,
    /// Calibration row ids.
    pub members: Vec<usize>,
    /// Pre-merge regions folded into this one, ascending.
    pub origins: Vec<RegionId>,
}

impl Region {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// Population variance of each tree's raw output over the calibration rows.
    Variance,
    /// `rho^t` for trees `t = 1..T`.
    Exponential(f64),
    /// Every tree weighs 1.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionModel<T: Real> {
    nodes: Vec<PartitionNode>,
    n_trees: usize,
    n_part: usize,
    base_regions: Vec<Region>,
    regions: Vec<Region>,
    /// Pre-merge region id -> current region id.
    assignment: Vec<RegionId>,
    tree_weights: Vec<T>,
}

impl<T: Real> PartitionModel<T> {
    /// Runs the grouping pass over the calibration rows' leaf paths.
    pub fn build(paths: &[LeafPath], n_part: usize) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::EmptyInput("no calibration paths"));
        }
        if n_part == 0 {
            return Err(Error::Config("n_part must be positive".into()));
        }
        let n_trees = paths[0].len();
        if let Some(p) = paths.iter().find(|p| p.len() != n_trees) {
            return Err(Error::Dimension {
                expected: n_trees,
                got: p.len(),
            });
        }

        let mut nodes = vec![PartitionNode {
            depth: 0,
            kind: NodeKind::Terminal(RegionId(usize::MAX)),
            member_count: paths.len(),
        }];
        let mut regions: Vec<Region> = Vec::new();
        let mut terminate = |nodes: &mut Vec<PartitionNode>,
                             node: usize,
                             rows: Vec<usize>,
                             prefix: Vec<PrefixEntry>| {
            let id = RegionId(regions.len());
            nodes[node].kind = NodeKind::Terminal(id);
            regions.push(Region {
                prefix,
                members: rows,
                origins: vec![id],
            });
        };

        let mut groups: Vec<(Vec<usize>, usize, Vec<PrefixEntry>)> =
            vec![((0..paths.len()).collect(), 0, Vec::new())];
        for t in 0..n_trees {
            let mut next = Vec::new();
            for (rows, node, mut prefix) in groups {
                if rows.len() < n_part {
                    terminate(&mut nodes, node, rows, prefix);
                    continue;
                }
                let mut by_leaf: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
                for &r in &rows {
                    by_leaf.entry(paths[r].0[t]).or_default().push(r);
                }
                if by_leaf.len() == 1 {
                    let child = nodes.len();
                    nodes.push(PartitionNode {
                        depth: t + 1,
                        kind: NodeKind::Terminal(RegionId(usize::MAX)),
                        member_count: rows.len(),
                    });
                    nodes[node].kind = NodeKind::Tunnel(child);
                    prefix.push(None);
                    next.push((rows, child, prefix));
                } else {
                    let mut children = BTreeMap::new();
                    for (leaf, members) in by_leaf {
                        let child = nodes.len();
                        nodes.push(PartitionNode {
                            depth: t + 1,
                            kind: NodeKind::Terminal(RegionId(usize::MAX)),
                            member_count: members.len(),
                        });
                        children.insert(leaf, child);
                        let mut p = prefix.clone();
                        p.push(Some(leaf));
                        next.push((members, child, p));
                    }
                    nodes[node].kind = NodeKind::Split(children);
                }
            }
            groups = next;
        }
        for (rows, node, prefix) in groups {
            terminate(&mut nodes, node, rows, prefix);
        }

        let assignment = (0..regions.len()).map(RegionId).collect();
        Ok(Self {
            nodes,
            n_trees,
            n_part,
            base_regions: regions.clone(),
            regions,
            assignment,
            tree_weights: vec![T::one(); n_trees],
        })
    }

    /// Folds every region with fewer than `n_merge` members into its nearest
    /// neighbour, smallest first (ties by id). The absorber is the other
    /// region minimising `(distance, member count, id)`: among equally near
    /// candidates the smallest wins, so sparse cells pair up instead of all
    /// draining into the first region to reach `n_merge`. Merges may chain.
    /// The absorber keeps its own defining prefix. Stops when no region is
    /// undersized or one remains.
    pub fn merge(&self, n_merge: usize, weights: &[T]) -> Result<Self> {
        if weights.len() < self.n_trees {
            return Err(Error::Dimension {
                expected: self.n_trees,
                got: weights.len(),
            });
        }
        let mut alive: Vec<Option<Region>> = self.regions.iter().cloned().map(Some).collect();
        let mut n_alive = alive.len();
        while n_alive > 1 {
            let Some(small) = (0..alive.len())
                .filter_map(|i| alive[i].as_ref().map(|r| (r.len(), i)))
                .filter(|&(len, _)| len < n_merge)
                .min()
                .map(|(_, i)| i)
            else {
                break;
            };
            let src = alive[small].as_ref().unwrap();
            let mut best: Option<(T, usize, usize)> = None;
            for (j, cand) in alive.iter().enumerate() {
                let Some(cand) = cand.as_ref().filter(|_| j != small) else {
                    continue;
                };
                let d = weighted_hamming(&src.prefix, &cand.prefix, weights)?;
                let better = match best {
                    None => true,
                    Some((bd, bsize, _)) => d < bd || (d == bd && cand.len() < bsize),
                };
                if better {
                    best = Some((d, cand.len(), j));
                }
            }
            let (_, _, target) = best.expect("at least two regions alive");
            let absorbed = alive[small].take().unwrap();
            let dst = alive[target].as_mut().unwrap();
            dst.members.extend(absorbed.members);
            dst.origins.extend(absorbed.origins);
            dst.origins.sort_unstable();
            n_alive -= 1;
        }

        let mut regions = Vec::with_capacity(n_alive);
        let mut assignment = vec![RegionId(usize::MAX); self.base_regions.len()];
        for r in alive.into_iter().flatten() {
            let id = RegionId(regions.len());
            // origins of a current region are base ids already folded into it
            for o in &r.origins {
                assignment[o.0] = id;
            }
            regions.push(r);
        }
        Ok(Self {
            regions,
            assignment,
            tree_weights: weights[..self.n_trees].to_vec(),
            ..self.clone()
        })
    }

    /// Region of a point with leaf path `path`. Points whose path leaves the
    /// partition tree go to the region whose defining prefix is nearest under
    /// the stored tree weights (ties to the lower id).
    pub fn locate(&self, path: &LeafPath) -> RegionId {
        let mut node = 0;
        loop {
            match &self.nodes[node].kind {
                NodeKind::Terminal(id) => return self.assignment[id.0],
                NodeKind::Tunnel(child) => node = *child,
                NodeKind::Split(children) => {
                    match path
                        .0
                        .get(self.nodes[node].depth)
                        .and_then(|l| children.get(l))
                    {
                        Some(&child) => node = child,
                        None => return self.nearest(path),
                    }
                }
            }
        }
    }

    /// Nearest current region to a full path under the stored weights.
    pub fn nearest(&self, path: &LeafPath) -> RegionId {
        let full: Vec<PrefixEntry> = path.0.iter().copied().map(Some).collect();
        let mut best = (T::infinity(), RegionId(0));
        for (i, r) in self.regions.iter().enumerate() {
            let d = hamming_unchecked(&r.prefix, &full, &self.tree_weights);
            if d < best.0 {
                best = (d, RegionId(i));
            }
        }
        best.1
    }

    /// Same partition with calibration memberships recomputed for a new set
    /// of points via [`locate`](Self::locate). Pre-merge bookkeeping is kept
    /// from construction.
    pub fn reassigned(&self, paths: &[LeafPath]) -> Self {
        let mut out = self.clone();
        for r in &mut out.regions {
            r.members.clear();
        }
        for (i, p) in paths.iter().enumerate() {
            let id = self.locate(p);
            out.regions[id.0].members.push(i);
        }
        out
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn region(&self, id: RegionId) -> &Region {
        &self.regions[id.0]
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    /// Terminal regions produced by the grouping pass, before merging.
    pub fn base_regions(&self) -> &[Region] {
        &self.base_regions
    }

    pub fn num_base_regions(&self) -> usize {
        self.base_regions.len()
    }

    /// Number of merge steps applied.
    pub fn num_merged(&self) -> usize {
        self.base_regions.len() - self.regions.len()
    }

    /// Pre-merge id -> current id.
    pub fn merged_from(&self) -> &[RegionId] {
        &self.assignment
    }

    pub fn nodes(&self) -> &[PartitionNode] {
        &self.nodes
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn n_part(&self) -> usize {
        self.n_part
    }

    pub fn tree_weights(&self) -> &[T] {
        &self.tree_weights
    }

    /// Region of every calibration row, indexed by row id.
    pub fn membership(&self) -> Vec<RegionId> {
        let n: usize = self.regions.iter().map(Region::len).sum();
        let mut out = vec![RegionId(usize::MAX); n];
        for (i, r) in self.regions.iter().enumerate() {
            for &m in &r.members {
                out[m] = RegionId(i);
            }
        }
        out
    }

    /// Plain-text dump, one line per current region:
    /// `id prefix member_count merged_from`, where tunneled trees print as
    /// `*`, an empty prefix as `-`, and `merged_from` lists pre-merge ids.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "# loboost partition: {} trees, n_part {}, {} regions before merge, {} after\n# id prefix members merged_from\n",
            self.n_trees,
            self.n_part,
            self.base_regions.len(),
            self.regions.len()
        );
        for (i, r) in self.regions.iter().enumerate() {
            let origins: Vec<String> = r.origins.iter().map(|o| o.0.to_string()).collect();
            out += &format!(
                "{i} {} {} {}\n",
                format_prefix(&r.prefix),
                r.len(),
                origins.join(",")
            );
        }
        out
    }
}

pub fn format_prefix(prefix: &[PrefixEntry]) -> String {
    if prefix.is_empty() {
        return "-".into();
    }
    prefix
        .iter()
        .map(|e| e.map_or_else(|| "*".to_string(), |l| l.to_string()))
        .collect::<Vec<_>>()
        .join(",")
}

/// `sum_t w_t * 1{a_t != b_t}` over positions present and non-tunneled in
/// both prefixes.
pub fn weighted_hamming<T: Real>(a: &[PrefixEntry], b: &[PrefixEntry], w: &[T]) -> Result<T> {
    let need = a.len().max(b.len());
    if w.len() < need {
        return Err(Error::Dimension {
            expected: need,
            got: w.len(),
        });
    }
    Ok(hamming_unchecked(a, b, w))
}

fn hamming_unchecked<T: Real>(a: &[PrefixEntry], b: &[PrefixEntry], w: &[T]) -> T {
    a.iter()
        .zip(b)
        .zip(w)
        .filter(|((x, y), _)| matches!((x, y), (Some(p), Some(q)) if p != q))
        .map(|(_, &wt)| wt)
        .sum()
}

/// Per-tree weights for the merge distance.
pub fn compute_tree_weights<T: Real>(
    model: &BoostedEnsemble<T>,
    cal: &Dataset<T>,
    scheme: WeightScheme,
) -> Result<Vec<T>> {
    let n_trees = model.n_trees();
    match scheme {
        WeightScheme::Uniform => Ok(vec![T::one(); n_trees]),
        WeightScheme::Exponential(rho) => {
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::Config(format!(
                    "decay rate {rho} must lie in (0, 1)"
                )));
            }
            Ok((1..=n_trees).map(|t| T::lit(rho.powi(t as i32))).collect())
        }
        WeightScheme::Variance => {
            let n = cal.n_rows();
            if n < 2 {
                return Err(Error::InsufficientData(
                    "variance weights need at least 2 calibration rows".into(),
                ));
            }
            let n_t = T::from_usize_lossy(n);
            model
                .trees()
                .iter()
                .map(|tree| {
                    let vals: Vec<T> = cal.rows().map(|r| tree.value(r)).collect();
                    let mean = vals.iter().copied().sum::<T>() / n_t;
                    Ok(vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n_t)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paths(v: &[&[u32]]) -> Vec<LeafPath> {
        v.iter().map(|p| LeafPath(p.to_vec())).collect()
    }

    fn five() -> Vec<LeafPath> {
        paths(&[&[0, 0], &[0, 0], &[0, 1], &[1, 0], &[1, 1]])
    }

    #[test]
    fn five_path_example() {
        let m = PartitionModel::<f64>::build(&five(), 2).unwrap();
        let got: Vec<(Vec<PrefixEntry>, usize)> = m
            .regions()
            .iter()
            .map(|r| (r.prefix.clone(), r.len()))
            .collect();
        assert_eq!(
            got,
            vec![
                (vec![Some(0), Some(0)], 2),
                (vec![Some(0), Some(1)], 1),
                (vec![Some(1), Some(0)], 1),
                (vec![Some(1), Some(1)], 1),
            ]
        );
        assert_eq!(m.locate(&LeafPath(vec![0, 0])), RegionId(0));
        for (i, p) in five().iter().enumerate() {
            assert_eq!(m.membership()[i], m.locate(p));
        }
    }

    #[test]
    fn identical_paths_tunnel_every_tree() {
        let ps = vec![LeafPath(vec![2, 0, 1]); 10];
        let m = PartitionModel::<f64>::build(&ps, 2).unwrap();
        assert_eq!(m.num_regions(), 1);
        assert_eq!(m.regions()[0].len(), 10);
        assert_eq!(m.regions()[0].prefix, vec![None, None, None]);
        let tunnels = m
            .nodes()
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Tunnel(_)))
            .count();
        assert_eq!(tunnels, 3);
        // a point that disagrees everywhere still lands in the only region
        assert_eq!(m.locate(&LeafPath(vec![0, 1, 0])), RegionId(0));
    }

    #[test]
    fn sparse_root_is_terminal() {
        let ps: Vec<LeafPath> = (0..10).map(|i| LeafPath(vec![i % 3, i % 2])).collect();
        let m = PartitionModel::<f64>::build(&ps, 11).unwrap();
        assert_eq!(m.num_regions(), 1);
        assert!(m.regions()[0].prefix.is_empty());
        assert_eq!(m.nodes().len(), 1);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            PartitionModel::<f64>::build(&[], 2),
            Err(Error::EmptyInput(_))
        ));
        let ragged = paths(&[&[0, 1], &[0]]);
        assert!(matches!(
            PartitionModel::<f64>::build(&ragged, 1),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn unseen_leaf_falls_back_to_nearest() {
        // regions (0,0):2, (0,1):1, (1,0):1, (1,1):1 ; weights (1, 0.5)
        let m = PartitionModel::<f64>::build(&five(), 2)
            .unwrap()
            .merge(1, &[1.0, 0.5])
            .unwrap();
        assert_eq!(m.num_regions(), 4);
        // leaf 7 at tree 1 is unseen: distances 1 to every region except where tree 2 disagrees
        let p = LeafPath(vec![7, 1]);
        let brute = (0..4)
            .map(|i| {
                let full = [Some(7), Some(1)];
                (
                    weighted_hamming(&m.regions()[i].prefix, &full, &[1.0, 0.5]).unwrap(),
                    i,
                )
            })
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
            .unwrap();
        assert_eq!(brute.1, 1);
        assert_eq!(m.locate(&p), RegionId(brute.1));
        // unseen at tree 2 below the (1,*) split
        assert_eq!(m.locate(&LeafPath(vec![1, 9])), RegionId(2));
    }

    #[test]
    fn hamming_examples() {
        let w = [0.5, 0.25, 0.125];
        let a = [Some(0), Some(1), Some(1)];
        let b = [Some(0), Some(0), Some(1)];
        assert_eq!(weighted_hamming(&a, &b, &w).unwrap(), 0.25);
        assert_eq!(weighted_hamming(&a, &a, &w).unwrap(), 0.0);
        assert_eq!(
            weighted_hamming(&[None, Some(1)], &[Some(3), Some(2)], &w).unwrap(),
            0.25
        );
        assert!(matches!(
            weighted_hamming(&a, &b, &w[..2]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn merge_five_paths_uniform() {
        let m = PartitionModel::<f64>::build(&five(), 2).unwrap();
        // Hand trace with sizes [2,1,1,1] and unit weights:
        // step 1 takes region 1 (0,1): distance 1 to regions 0 and 3, 2 to
        //   region 2; region 3 is smaller than region 0, so 1 -> 3.
        // step 2 takes region 2 (1,0): distance 1 to regions 0 and 3, both of
        //   size 2, so the lower id wins: 2 -> 0.
        let merged = m.merge(2, &[1.0, 1.0]).unwrap();
        let got: Vec<(Vec<PrefixEntry>, usize, Vec<RegionId>)> = merged
            .regions()
            .iter()
            .map(|r| (r.prefix.clone(), r.len(), r.origins.clone()))
            .collect();
        assert_eq!(
            got,
            vec![
                (vec![Some(0), Some(0)], 3, vec![RegionId(0), RegionId(2)]),
                (vec![Some(1), Some(1)], 2, vec![RegionId(1), RegionId(3)]),
            ]
        );
        assert_eq!(merged.num_merged(), 2);
        assert_eq!(merged.num_base_regions(), 4);
        assert_eq!(
            merged.merged_from(),
            &[RegionId(0), RegionId(1), RegionId(0), RegionId(1)]
        );
        assert_eq!(merged.locate(&LeafPath(vec![0, 1])), RegionId(1));
        assert_eq!(merged.locate(&LeafPath(vec![1, 0])), RegionId(0));
        assert_eq!(merged.regions().iter().map(Region::len).sum::<usize>(), 5);
    }

    #[test]
    fn undersized_regions_pair_up_instead_of_draining_into_one() {
        // eight equidistant singletons-of-three: with n_merge = 6 they pair up
        let ps: Vec<LeafPath> = (0..8u32)
            .flat_map(|l| std::iter::repeat_n(LeafPath(vec![l]), 3))
            .collect();
        let m = PartitionModel::<f64>::build(&ps, 4).unwrap();
        assert_eq!(m.num_regions(), 8);
        let merged = m.merge(6, &[1.0]).unwrap();
        assert_eq!(
            merged.regions().iter().map(Region::len).collect::<Vec<_>>(),
            vec![6; 4]
        );
    }

    #[test]
    fn merge_prefers_near_adequate_absorber() {
        let mut ps = Vec::new();
        ps.extend(std::iter::repeat_n(LeafPath(vec![0, 0, 0]), 3));
        ps.extend(std::iter::repeat_n(LeafPath(vec![1, 0, 0]), 3));
        ps.push(LeafPath(vec![1, 1, 0]));
        ps.push(LeafPath(vec![0, 1, 1]));
        let m = PartitionModel::<f64>::build(&ps, 2).unwrap();
        let sizes: Vec<usize> = m.regions().iter().map(Region::len).collect();
        // (0,1) and (1,1) go terminal at tree 3; (0,0,*) and (1,0,*) tunnel and close last
        assert_eq!(sizes, vec![1, 1, 3, 3]);
        assert_eq!(m.regions()[2].prefix, vec![Some(0), Some(0), None]);
        let merged = m.merge(2, &[1.0, 0.5, 0.25]).unwrap();
        // (0,1) joins (0,0,*) at distance 0.5 rather than (1,0,*) at 1.5; (1,1) joins (1,0,*)
        let got: Vec<(Vec<PrefixEntry>, usize)> = merged
            .regions()
            .iter()
            .map(|r| (r.prefix.clone(), r.len()))
            .collect();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].1, 4);
        assert_eq!(got[1].1, 4);
        assert_eq!(
            merged.merged_from(),
            &[RegionId(0), RegionId(1), RegionId(0), RegionId(1)]
        );
    }

    #[test]
    fn merge_with_one_is_identity() {
        let m = PartitionModel::<f64>::build(&five(), 2).unwrap();
        let merged = m.merge(1, &[1.0, 1.0]).unwrap();
        assert_eq!(merged.regions(), m.regions());
        assert_eq!(merged.num_merged(), 0);
    }

    #[test]
    fn dump_format() {
        let ps = paths(&[&[0, 3], &[0, 3], &[1, 3], &[1, 4]]);
        let m = PartitionModel::<f64>::build(&ps, 2).unwrap();
        let d = m.dump();
        let lines: Vec<&str> = d.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(lines, vec!["0 0,* 2 0", "1 1,3 1 1", "2 1,4 1 2"]);
    }

    #[test]
    fn exponential_and_uniform_weights() {
        let model = BoostedEnsemble::<f64>::from_parts(
            0.0,
            0.1,
            1,
            vec![crate::gbm::RegressionTree::constant(1.0); 3],
        );
        let cal = Dataset::from_columns(vec![0.0, 1.0], vec![0.0, 0.0]).unwrap();
        let w = compute_tree_weights(&model, &cal, WeightScheme::Exponential(0.5)).unwrap();
        assert_eq!(w, vec![0.5, 0.25, 0.125]);
        assert!(matches!(
            compute_tree_weights(&model, &cal, WeightScheme::Exponential(1.0)),
            Err(Error::Config(_))
        ));
        // constant trees carry no variance
        assert_eq!(
            compute_tree_weights(&model, &cal, WeightScheme::Variance).unwrap(),
            vec![0.0; 3]
        );
    }

    #[test]
    fn variance_weight_of_balanced_stump() {
        use crate::gbm::{RegressionTree, TreeNode};
        let stump = RegressionTree::from_nodes(vec![
            TreeNode::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            TreeNode::Leaf {
                leaf_index: 0,
                value: -1.0,
            },
            TreeNode::Leaf {
                leaf_index: 1,
                value: 1.0,
            },
        ])
        .unwrap();
        let model = BoostedEnsemble::from_parts(0.0, 1.0, 1, vec![stump]);
        let cal = Dataset::from_columns(vec![0.0, 0.0, 1.0, 1.0], vec![0.0; 4]).unwrap();
        assert_eq!(
            compute_tree_weights(&model, &cal, WeightScheme::Variance).unwrap(),
            vec![1.0]
        );
        let one = Dataset::from_columns(vec![0.0], vec![0.0]).unwrap();
        assert!(compute_tree_weights(&model, &one, WeightScheme::Variance).is_err());
    }

    fn prefix_strategy(len: usize) -> impl Strategy<Value = Vec<PrefixEntry>> {
        proptest::collection::vec(proptest::option::weighted(0.8, 0u32..3), len)
    }

    fn random_paths() -> impl Strategy<Value = (Vec<LeafPath>, usize, usize)> {
        (1usize..5, 1usize..60).prop_flat_map(|(t, n)| {
            (
                proptest::collection::vec(
                    proptest::collection::vec(0u32..3, t).prop_map(LeafPath),
                    n,
                ),
                1usize..12,
                1usize..12,
            )
        })
    }

    proptest! {
        #[test]
        fn hamming_is_a_bounded_symmetric_pseudometric(
            a in prefix_strategy(5), b in prefix_strategy(5), c in prefix_strategy(5),
            w in proptest::collection::vec(0.0f64..2.0, 5),
        ) {
            let d = |x: &[PrefixEntry], y: &[PrefixEntry]| weighted_hamming(x, y, &w).unwrap();
            prop_assert!(d(&a, &b) >= 0.0);
            prop_assert!(d(&a, &b) <= w.iter().sum::<f64>() + 1e-12);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            // the triangle inequality holds for full (untunneled) paths
            let full = |p: &[PrefixEntry]| p.iter().map(|e| Some(e.unwrap_or(9))).collect::<Vec<_>>();
            let (fa, fb, fc) = (full(&a), full(&b), full(&c));
            prop_assert!(d(&fa, &fc) <= d(&fa, &fb) + d(&fb, &fc) + 1e-12);
        }

        #[test]
        fn partition_and_merge_conserve_membership((ps, n_part, n_merge) in random_paths()) {
            let m = PartitionModel::<f64>::build(&ps, n_part).unwrap();
            let total: usize = m.regions().iter().map(Region::len).sum();
            prop_assert_eq!(total, ps.len());
            // prefix law: rows share a pre-merge region iff they agree on that region's prefix
            let member = m.membership();
            for (i, p) in ps.iter().enumerate() {
                let r = &m.regions()[member[i].0];
                for (q_idx, q) in ps.iter().enumerate() {
                    let agrees = r.prefix.iter().enumerate().all(|(t, e)| e.is_none_or(|l| q.0[t] == l));
                    if member[q_idx] == member[i] {
                        prop_assert!(agrees);
                    }
                }
                prop_assert_eq!(m.locate(p), member[i]);
            }
            let w = vec![1.0; ps[0].len()];
            let merged = m.merge(n_merge, &w).unwrap();
            let total: usize = merged.regions().iter().map(Region::len).sum();
            prop_assert_eq!(total, ps.len());
            prop_assert!(merged.num_regions() <= m.num_regions());
            prop_assert!(merged.num_regions() >= 1);
            let sizes: Vec<usize> = merged.regions().iter().map(Region::len).collect();
            let largest = *sizes.iter().max().unwrap();
            prop_assert!(sizes.iter().all(|&s| s >= n_merge) || sizes.len() == 1,
                "sizes {:?} largest {}", sizes, largest);
            for (i, p) in ps.iter().enumerate() {
                prop_assert_eq!(merged.locate(p), merged.membership()[i]);
            }
        }
    }
}
