//! Axis-aligned pricing trees: the policy representation shared by the
//! student tree and the tree-shaped baselines, plus the greedy grower they
//! all use.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{default_feature_names, Features, PriceGrid};
use crate::error::{Error, Result};

/// Relative margin a split must clear to count as an improvement. Guards the
/// strict-improvement rule against summation rounding.
const REL_TOL: f64 = 1e-12;

#[inline]
pub(crate) fn improves(candidate: f64, incumbent: f64) -> bool {
    if !(candidate.is_finite() && incumbent.is_finite()) {
        return candidate > incumbent;
    }
    candidate - incumbent > REL_TOL * (candidate.abs() + incumbent.abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        price: f64,
        revenue_sum: f64,
        n_train: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    #[serde(flatten)]
    node: Node,
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    feature_names: Vec<String>,
    price_grid: PriceGrid,
    nodes: Vec<NodeRecord>,
    root: usize,
}

/// A binary tree whose leaves each prescribe one grid price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TreeDocument", into = "TreeDocument")]
pub struct PolicyTree {
    nodes: Vec<Node>,
    root: usize,
    feature_names: Vec<String>,
    grid: PriceGrid,
    /// Smallest feature vector length that routes through every split.
    min_dim: usize,
}

impl TryFrom<TreeDocument> for PolicyTree {
    type Error = Error;

    fn try_from(doc: TreeDocument) -> Result<Self> {
        let n = doc.nodes.len();
        let mut nodes: Vec<Option<Node>> = vec![None; n];
        for rec in doc.nodes {
            if rec.id >= n || nodes[rec.id].is_some() {
                return Err(Error::InvalidData(format!(
                    "node ids must be unique and below {n}; got {}",
                    rec.id
                )));
            }
            nodes[rec.id] = Some(rec.node);
        }
        let nodes = nodes
            .into_iter()
            .map(|n| n.expect("all ids filled"))
            .collect();
        PolicyTree::new(nodes, doc.root, doc.feature_names, doc.price_grid)
    }
}

impl From<PolicyTree> for TreeDocument {
    fn from(tree: PolicyTree) -> Self {
        TreeDocument {
            feature_names: tree.feature_names,
            price_grid: tree.grid,
            nodes: tree
                .nodes
                .into_iter()
                .enumerate()
                .map(|(id, node)| NodeRecord { id, node })
                .collect(),
            root: tree.root,
        }
    }
}

impl PolicyTree {
    /// Validates structure: every node reachable from `root` exactly once,
    /// feature indices named, leaf prices on the grid.
    pub fn new(
        nodes: Vec<Node>,
        root: usize,
        feature_names: Vec<String>,
        grid: PriceGrid,
    ) -> Result<Self> {
        if root >= nodes.len() {
            return Err(Error::InvalidData(format!("root {root} out of range")));
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        let mut min_dim = 0;
        while let Some(id) = stack.pop() {
            if id >= nodes.len() {
                return Err(Error::InvalidData(format!("child {id} out of range")));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvalidData(format!(
                    "node {id} is reachable twice (cycle or shared child)"
                )));
            }
            match &nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::InvalidData(format!(
                            "node {id}: non-finite threshold"
                        )));
                    }
                    if *feature >= feature_names.len() {
                        return Err(Error::InvalidData(format!(
                            "node {id} splits on feature {feature}, but only {} are named",
                            feature_names.len()
                        )));
                    }
                    min_dim = min_dim.max(feature + 1);
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf { price, .. } => {
                    if !grid.contains(*price) {
                        return Err(Error::InvalidData(format!(
                            "node {id}: price {price} is not on the grid"
                        )));
                    }
                }
            }
        }
        if let Some(id) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidData(format!("node {id} is unreachable")));
        }
        Ok(Self {
            nodes,
            root,
            feature_names,
            grid,
            min_dim,
        })
    }

    /// One-leaf tree.
    pub fn constant(
        price: f64,
        revenue_sum: f64,
        n_train: usize,
        grid: PriceGrid,
        n_features: usize,
    ) -> Result<Self> {
        Self::new(
            vec![Node::Leaf {
                price,
                revenue_sum,
                n_train,
            }],
            0,
            default_feature_names(n_features),
            grid,
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    /// Renames features; the count must not drop below the features the tree uses.
    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() < self.min_dim {
            return Err(Error::Dimension {
                expected: self.min_dim,
                got: names.len(),
            });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Length of the longest root-to-leaf path (a single leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, self.root)
    }

    /// Sum of the leaves' training revenue.
    pub fn total_revenue(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { revenue_sum, .. } => *revenue_sum,
                Node::Split { .. } => 0.0,
            })
            .sum()
    }

    /// Node id of the leaf that `x` falls into.
    pub fn leaf_for(&self, x: &[f64]) -> Result<usize> {
        if x.len() < self.min_dim {
            return Err(Error::Dimension {
                expected: self.min_dim,
                got: x.len(),
            });
        }
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Leaf { .. } => return Ok(id),
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_price(&self, x: &[f64]) -> Result<f64> {
        match self.nodes[self.leaf_for(x)?] {
            Node::Leaf { price, .. } => Ok(price),
            Node::Split { .. } => unreachable!("leaf_for returns leaves"),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Graphviz rendering: splits read `name ≤ s`, leaves show the price and
    /// the expected revenue per training item; edges are labeled yes/no.
    pub fn to_dot(&self) -> String {
        let mut out =
            String::from("digraph policy {\n  node [shape=box, fontname=\"Helvetica\"];\n");
        let mut stack = vec![self.root];
        let mut edges = String::new();
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(
                        out,
                        "  n{id} [label=\"{} ≤ {}\"];",
                        escape(&self.feature_names[*feature]),
                        threshold
                    );
                    let _ = writeln!(edges, "  n{id} -> n{left} [label=\"yes\"];");
                    let _ = writeln!(edges, "  n{id} -> n{right} [label=\"no\"];");
                    stack.push(*right);
                    stack.push(*left);
                }
                Node::Leaf {
                    price,
                    revenue_sum,
                    n_train,
                } => {
                    let per_item = if *n_train > 0 {
                        revenue_sum / *n_train as f64
                    } else {
                        0.0
                    };
                    let _ = writeln!(
                        out,
                        "  n{id} [shape=ellipse, label=\"price {price}\\nrevenue/item {per_item:.4}\\nn = {n_train}\"];"
                    );
                }
            }
        }
        out.push_str(&edges);
        out.push_str("}\n");
        out
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Termination rules shared by every greedy tree learner.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_depth: usize,
    /// Nodes with fewer rows are not split.
    pub minsplit: usize,
    /// Each child of a split must receive at least this many rows.
    pub min_leaf: usize,
}

impl FitConfig {
    /// Depth-limited growth with no size restriction beyond one row per leaf.
    pub fn depth(max_depth: usize) -> Self {
        Self {
            max_depth,
            minsplit: 2,
            min_leaf: 1,
        }
    }

    /// Unbounded depth; growth stops at nodes smaller than `minsplit`.
    pub fn minsplit(minsplit: usize) -> Self {
        Self {
            max_depth: usize::MAX,
            minsplit,
            min_leaf: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.minsplit < 2 {
            return Err(Error::Config("minsplit must be at least 2".into()));
        }
        if self.min_leaf < 1 {
            return Err(Error::Config("min_leaf must be at least 1".into()));
        }
        if self.minsplit < 2 * self.min_leaf {
            return Err(Error::Config(format!(
                "minsplit {} is below twice min_leaf {}",
                self.minsplit, self.min_leaf
            )));
        }
        Ok(())
    }
}

/// A node objective that can be accumulated row by row. Higher is better.
pub(crate) trait SplitCriterion: Sync {
    type Acc: Send;

    fn empty(&self) -> Self::Acc;
    fn push(&self, acc: &mut Self::Acc, row: usize);
    fn objective(&self, acc: &Self::Acc) -> f64;
    /// Grid index to prescribe and the revenue credited to the leaf.
    fn leaf(&self, acc: &Self::Acc) -> (usize, f64);
    /// Orders rows by the data they contribute, so accumulation order (and
    /// therefore rounding) never depends on row numbering.
    fn content_cmp(&self, a: usize, b: usize) -> Ordering;

    fn accumulate(&self, rows: &[usize]) -> Self::Acc {
        let mut acc = self.empty();
        for &r in rows {
            self.push(&mut acc, r);
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Objective of the left child plus that of the right child.
    pub combined: f64,
    pub left_count: usize,
    pub right_count: usize,
}

fn best_split_on_feature<C: SplitCriterion>(
    crit: &C,
    features: &Features,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<SplitCandidate> {
    let n = rows.len();
    let mut order = rows.to_vec();
    order.sort_by(|&a, &b| {
        features
            .get(a, feature)
            .total_cmp(&features.get(b, feature))
            .then_with(|| crit.content_cmp(a, b))
    });
    let value = |p: usize| features.get(order[p], feature);
    let is_boundary = |p: usize| value(p - 1) < value(p);

    let mut right_objective = vec![0.0; n];
    let mut acc = crit.empty();
    for p in (1..n).rev() {
        crit.push(&mut acc, order[p]);
        right_objective[p] = crit.objective(&acc);
    }

    let mut best: Option<SplitCandidate> = None;
    let mut acc = crit.empty();
    for p in 1..n {
        crit.push(&mut acc, order[p - 1]);
        if p < min_leaf || n - p < min_leaf || !is_boundary(p) {
            continue;
        }
        let combined = crit.objective(&acc) + right_objective[p];
        if best.is_none_or(|b| improves(combined, b.combined)) {
            best = Some(SplitCandidate {
                feature,
                threshold: value(p - 1),
                combined,
                left_count: p,
                right_count: n - p,
            });
        }
    }
    best
}

/// Exhaustive search over every feature and every observed threshold. Returns
/// `None` unless some split satisfies `min_leaf` on both sides and strictly
/// beats the unsplit node. Ties resolve to the lowest feature, then the lowest
/// threshold.
pub(crate) fn best_split<C: SplitCriterion>(
    crit: &C,
    features: &Features,
    rows: &[usize],
    config: &FitConfig,
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| crit.content_cmp(a, b));
    let unsplit = crit.objective(&crit.accumulate(&sorted));
    let per_feature: Vec<Option<SplitCandidate>> = (0..features.n_cols())
        .into_par_iter()
        .map(|j| best_split_on_feature(crit, features, rows, j, config.min_leaf))
        .collect();
    let best =
        per_feature
            .into_iter()
            .flatten()
            .fold(None::<SplitCandidate>, |best, c| match best {
                Some(b) if !improves(c.combined, b.combined) => Some(b),
                _ => Some(c),
            })?;
    improves(best.combined, unsplit).then_some(best)
}

/// Greedy top-down growth. A node becomes a leaf when it reaches
/// `max_depth`, holds fewer than `minsplit` rows, or has no improving split.
pub(crate) fn grow<C: SplitCriterion>(
    crit: &C,
    features: &Features,
    grid: &PriceGrid,
    config: &FitConfig,
) -> Result<PolicyTree> {
    config.validate()?;
    let mut nodes = Vec::new();
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    if rows.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    build(crit, features, grid, config, rows, 0, &mut nodes);
    PolicyTree::new(
        nodes,
        0,
        default_feature_names(features.n_cols()),
        grid.clone(),
    )
}

fn build<C: SplitCriterion>(
    crit: &C,
    features: &Features,
    grid: &PriceGrid,
    config: &FitConfig,
    mut rows: Vec<usize>,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    rows.sort_by(|&a, &b| crit.content_cmp(a, b));
    let (k, revenue_sum) = crit.leaf(&crit.accumulate(&rows));
    nodes.push(Node::Leaf {
        price: grid.price(k),
        revenue_sum,
        n_train: rows.len(),
    });
    if depth >= config.max_depth || rows.len() < config.minsplit {
        return id;
    }
    let Some(split) = best_split(crit, features, &rows, config) else {
        return id;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .iter()
        .partition(|&&r| features.get(r, split.feature) <= split.threshold);
    let left = build(crit, features, grid, config, left_rows, depth + 1, nodes);
    let right = build(crit, features, grid, config, right_rows, depth + 1, nodes);
    nodes[id] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

/// Lexicographic `total_cmp` over two equally long slices.
pub(crate) fn cmp_slices(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[cfg(test)]
pub(crate) fn distinct(ids: impl IntoIterator<Item = usize>) -> bool {
    let mut seen = std::collections::HashSet::new();
    ids.into_iter().all(|i| seen.insert(i))
}
