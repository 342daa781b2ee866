//! Depth-1 and depth-2 decision trees over per-unit arm rewards, with an
//! exhaustive search.
//!
//! Depth 1 is a prefix-sum scan per feature. Depth 2 runs the depth-1
//! scan on both sides of every root split, reusing the presorted feature
//! orders filtered by a membership mask: `O(p^2 n^2 m)` overall.

use serde::{Deserialize, Serialize};

use super::check_index;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum TreeNode {
    /// Go to `left` when `x[feat] <= thr`, else to `right`.
    Split { feat: usize, thr: f64, left: usize, right: usize },
    Leaf { leaf: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreePolicy {
    /// Node 0 is the root.
    pub nodes: Vec<TreeNode>,
}

impl TreePolicy {
    pub fn leaf(arm: usize) -> Self {
        Self { nodes: vec![TreeNode::Leaf { leaf: arm }] }
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::BadConfig("tree has no nodes".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![(0usize, 0usize)];
        let mut depth = 0;
        while let Some((at, d)) = stack.pop() {
            if at >= self.nodes.len() {
                return Err(Error::BadConfig(format!("tree references missing node {at}")));
            }
            if std::mem::replace(&mut seen[at], true) {
                return Err(Error::BadConfig("tree nodes must form a tree".into()));
            }
            match self.nodes[at] {
                TreeNode::Leaf { leaf } => {
                    if leaf >= m {
                        return Err(Error::BadConfig(format!("leaf arm {leaf} outside 0..{m}")));
                    }
                    depth = depth.max(d);
                }
                TreeNode::Split { thr, left, right, .. } => {
                    if !thr.is_finite() {
                        return Err(Error::BadConfig("tree thresholds must be finite".into()));
                    }
                    stack.push((left, d + 1));
                    stack.push((right, d + 1));
                }
            }
        }
        if depth > 2 {
            return Err(Error::BadDepth(depth));
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::BadConfig("tree has unreachable nodes".into()));
        }
        Ok(())
    }

    pub fn arm(&self, x: &[f64]) -> Result<usize> {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { leaf } => return Ok(leaf),
                TreeNode::Split { feat, thr, left, right } => {
                    check_index(x, feat)?;
                    at = if x[feat] <= thr { left } else { right };
                }
            }
        }
    }
}

/// Subtree of depth at most one, as found by the scan.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Stump {
    Leaf(usize),
    Split { feat: usize, thr: f64, left: usize, right: usize },
}

fn argmax(sums: &[f64]) -> (usize, f64) {
    let mut best = (0, sums[0]);
    for (a, &s) in sums.iter().enumerate().skip(1) {
        if s > best.1 {
            best = (a, s);
        }
    }
    best
}

struct Search<'a> {
    rewards: &'a [Vec<f64>],
    xs: &'a [Vec<f64>],
    features: &'a [usize],
    /// Per feature position: unit indices sorted by that feature.
    order: Vec<Vec<usize>>,
    m: usize,
}

impl Search<'_> {
    /// Best depth-1 subtree on the units with `member[i] == side`.
    fn best_stump(&self, member: &[bool], side: bool) -> (Stump, f64) {
        let m = self.m;
        let mut total = vec![0.0; m];
        for (i, r) in self.rewards.iter().enumerate() {
            if member[i] == side {
                total.iter_mut().zip(r).for_each(|(t, v)| *t += v);
            }
        }
        let (arm, value) = argmax(&total);
        let mut best = (Stump::Leaf(arm), value);
        let mut left = vec![0.0; m];
        let mut right = vec![0.0; m];
        for (fp, &feat) in self.features.iter().enumerate() {
            left.iter_mut().for_each(|v| *v = 0.0);
            let mut prev: Option<f64> = None;
            for &i in &self.order[fp] {
                if member[i] != side {
                    continue;
                }
                let x = self.xs[i][feat];
                if let Some(p) = prev {
                    if x > p {
                        right.iter_mut().zip(&total).zip(&left).for_each(|((r, t), l)| *r = t - l);
                        let (la, lv) = argmax(&left);
                        let (ra, rv) = argmax(&right);
                        if la != ra && lv + rv > best.1 {
                            best = (Stump::Split { feat, thr: 0.5 * (p + x), left: la, right: ra }, lv + rv);
                        }
                    }
                }
                left.iter_mut().zip(&self.rewards[i]).for_each(|(l, v)| *l += v);
                prev = Some(x);
            }
        }
        best
    }
}

fn stump_nodes(s: Stump, nodes: &mut Vec<TreeNode>) -> usize {
    let at = nodes.len();
    match s {
        Stump::Leaf(arm) => nodes.push(TreeNode::Leaf { leaf: arm }),
        Stump::Split { feat, thr, left, right } => {
            nodes.push(TreeNode::Split { feat, thr, left: at + 1, right: at + 2 });
            nodes.push(TreeNode::Leaf { leaf: left });
            nodes.push(TreeNode::Leaf { leaf: right });
        }
    }
    at
}

/// Exact maximizer of `sum_i rewards_i[pi(x_i)]` over trees of the given
/// depth splitting on `features` (original covariate indices). Returns the
/// tree and its objective.
pub fn tree_search(
    rewards: &[Vec<f64>],
    xs: &[Vec<f64>],
    features: &[usize],
    depth: usize,
) -> Result<(TreePolicy, f64)> {
    if !(1..=2).contains(&depth) {
        return Err(Error::BadDepth(depth));
    }
    if rewards.is_empty() {
        return Err(Error::EmptyData);
    }
    if rewards.len() != xs.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: rewards.len() });
    }
    let m = rewards[0].len();
    if let Some(r) = rewards.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, got: r.len() });
    }
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();
    for x in xs {
        for &f in &features {
            check_index(x, f)?;
        }
    }
    let n = xs.len();
    let order = features
        .iter()
        .map(|&f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| xs[a][f].total_cmp(&xs[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let search = Search { rewards, xs, features: &features, order, m };
    let all = vec![true; n];

    let (stump, value) = search.best_stump(&all, true);
    if depth == 1 {
        let mut nodes = Vec::new();
        stump_nodes(stump, &mut nodes);
        return Ok((TreePolicy { nodes }, value));
    }

    // Depth 2: the best depth-1 tree is the incumbent; a root split must
    // beat it strictly.
    let mut best: (Stump, Stump, Option<(usize, f64)>, f64) = (stump, stump, None, value);
    let mut left_member = vec![false; n];
    for (fp, &feat) in features.iter().enumerate() {
        left_member.iter_mut().for_each(|v| *v = false);
        let ord = &search.order[fp];
        let mut k = 0;
        while k < n {
            let level = xs[ord[k]][feat];
            while k < n && xs[ord[k]][feat] == level {
                left_member[ord[k]] = true;
                k += 1;
            }
            if k == n {
                break;
            }
            let thr = 0.5 * (level + xs[ord[k]][feat]);
            let (ls, lv) = search.best_stump(&left_member, true);
            let (rs, rv) = search.best_stump(&left_member, false);
            if let (Stump::Leaf(a), Stump::Leaf(b)) = (ls, rs) {
                if a == b {
                    continue;
                }
            }
            if lv + rv > best.3 {
                best = (ls, rs, Some((feat, thr)), lv + rv);
            }
        }
    }
    let (ls, rs, root, value) = best;
    let mut nodes = Vec::new();
    match root {
        None => {
            stump_nodes(ls, &mut nodes);
        }
        Some((feat, thr)) => {
            nodes.push(TreeNode::Leaf { leaf: 0 });
            let left = stump_nodes(ls, &mut nodes);
            let right = stump_nodes(rs, &mut nodes);
            nodes[0] = TreeNode::Split { feat, thr, left, right };
        }
    }
    Ok((TreePolicy { nodes }, value))
}

/// In-sample objective of any tree, by direct summation.
pub fn tree_objective(tree: &TreePolicy, rewards: &[Vec<f64>], xs: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for (r, x) in rewards.iter().zip(xs) {
        s += r[tree.arm(x)?];
    }
    Ok(s)
}
