//! Gradient-boosted trees with logistic loss, used as the teacher.
//!
//! Each round fits one regression tree to the Newton step of the log-loss,
//! growing leaf-wise (always splitting the leaf with the largest gain) until
//! `max_leaves` is reached or no split has positive gain. Split search is
//! exact over the sorted feature values. The price is appended to the item
//! features as the last input column.
//!
//! # Text format
//!
//! ```text
//! sptlab-gbt 1
//! n_features <d>              # item features; the model reads d + 1 inputs
//! base_score <f64>
//! learning_rate <f64>
//! trees <count>
//! tree <index> <node count>
//! # id feature threshold left right value
//! 0 2 4.75 1 2 -
//! 1 - - - - -0.0312
//! ...
//! ```
//!
//! Split rows fill `feature threshold left right` and leave `value` as `-`;
//! leaf rows do the opposite. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_dim, DemandModel};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

const MIN_CHILD_HESSIAN: f64 = 1e-3;
const HEADER: &str = "sptlab-gbt 1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtConfig {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_child_samples: usize,
    /// Fraction of rows sampled (without replacement, per round) for each tree.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            learning_rate: 0.1,
            max_leaves: 31,
            min_child_samples: 20,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning_rate {} is outside (0, 1]",
                self.learning_rate
            )));
        }
        if self.max_leaves < 2 {
            return Err(Error::Config("max_leaves must be at least 2".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!(
                "subsample {} is outside (0, 1]",
                self.subsample
            )));
        }
        Ok(())
    }

    /// Parses `key=value` pairs separated by commas, e.g. `rounds=50,learning_rate=0.1`.
    pub fn parse_overrides(spec: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{part}`")))?;
            let value = value.trim();
            let bad = || Error::Config(format!("bad value for {key}: `{value}`"));
            match key.trim() {
                "rounds" => cfg.rounds = value.parse().map_err(|_| bad())?,
                "learning_rate" | "lr" => cfg.learning_rate = value.parse().map_err(|_| bad())?,
                "max_leaves" => cfg.max_leaves = value.parse().map_err(|_| bad())?,
                "min_child_samples" => cfg.min_child_samples = value.parse().map_err(|_| bad())?,
                "subsample" => cfg.subsample = value.parse().map_err(|_| bad())?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
                other => return Err(Error::Config(format!("unknown teacher option `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GbtNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GbtTree {
    nodes: Vec<GbtNode>,
}

impl GbtTree {
    fn predict(&self, input: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                GbtNode::Leaf { value } => return value,
                GbtNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if input[feature] <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn nodes(&self) -> &[GbtNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, GbtNode::Leaf { .. }))
            .count()
    }
}

/// Fitted ensemble: `sigmoid(base_score + learning_rate * sum_t tree_t(x, p))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GbtModel {
    n_features: usize,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<GbtTree>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl GbtModel {
    pub fn trees(&self) -> &[GbtTree] {
        &self.trees
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    /// Raw additive score of the first `rounds` trees.
    pub fn raw_score_prefix(&self, x: &[f64], price: f64, rounds: usize) -> f64 {
        let mut input = Vec::with_capacity(x.len() + 1);
        input.extend_from_slice(x);
        input.push(price);
        let sum: f64 = self.trees[..rounds.min(self.trees.len())]
            .iter()
            .map(|t| t.predict(&input))
            .sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "n_features {}", self.n_features);
        let _ = writeln!(out, "base_score {:?}", self.base_score);
        let _ = writeln!(out, "learning_rate {:?}", self.learning_rate);
        let _ = writeln!(out, "trees {}", self.trees.len());
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(out, "tree {t} {}", tree.nodes.len());
            let _ = writeln!(out, "# id feature threshold left right value");
            for (id, node) in tree.nodes.iter().enumerate() {
                let _ = match *node {
                    GbtNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => writeln!(out, "{id} {feature} {threshold:?} {left} {right} -"),
                    GbtNode::Leaf { value } => writeln!(out, "{id} - - - - {value:?}"),
                };
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, message: &str| Error::ModelFormat {
            line,
            message: message.to_string(),
        };
        let mut next = |what: &str| -> Result<(usize, Vec<String>)> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| err(0, &format!("unexpected end of input, wanted {what}")))?;
            Ok((n, l.split_whitespace().map(str::to_string).collect()))
        };
        let (n, head) = next("header")?;
        if head.join(" ") != HEADER {
            return Err(err(n, "not a sptlab-gbt v1 model"));
        }
        fn field<T: std::str::FromStr>((n, toks): (usize, Vec<String>), key: &str) -> Result<T> {
            if toks.len() != 2 || toks[0] != key {
                return Err(Error::ModelFormat {
                    line: n,
                    message: format!("expected `{key} <value>`"),
                });
            }
            toks[1].parse().map_err(|_| Error::ModelFormat {
                line: n,
                message: format!("bad value for {key}"),
            })
        }
        let n_features: usize = field(next("n_features")?, "n_features")?;
        let base_score: f64 = field(next("base_score")?, "base_score")?;
        let learning_rate: f64 = field(next("learning_rate")?, "learning_rate")?;
        let n_trees: usize = field(next("trees")?, "trees")?;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let (n, toks) = next("tree header")?;
            if toks.len() != 3 || toks[0] != "tree" || toks[1] != t.to_string() {
                return Err(err(n, &format!("expected `tree {t} <nodes>`")));
            }
            let count: usize = toks[2].parse().map_err(|_| err(n, "bad node count"))?;
            let mut nodes = Vec::with_capacity(count);
            for id in 0..count {
                let (n, toks) = next("node")?;
                if toks.len() != 6 || toks[0] != id.to_string() {
                    return Err(err(n, &format!("expected 6 fields for node {id}")));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| err(n, "bad number"));
                let idx = |s: &str| s.parse::<usize>().map_err(|_| err(n, "bad index"));
                let node = if toks[1] == "-" {
                    GbtNode::Leaf {
                        value: num(&toks[5])?,
                    }
                } else {
                    let node = GbtNode::Split {
                        feature: idx(&toks[1])?,
                        threshold: num(&toks[2])?,
                        left: idx(&toks[3])?,
                        right: idx(&toks[4])?,
                    };
                    if let GbtNode::Split {
                        feature,
                        left,
                        right,
                        ..
                    } = node
                    {
                        if feature > n_features
                            || left >= count
                            || right >= count
                            || left <= id
                            || right <= id
                        {
                            return Err(err(n, "split refers to an invalid feature or child"));
                        }
                    }
                    node
                };
                nodes.push(node);
            }
            trees.push(GbtTree { nodes });
        }
        Ok(Self {
            n_features,
            base_score,
            learning_rate,
            trees,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl DemandModel for GbtModel {
    fn n_features(&self) -> Option<usize> {
        Some(self.n_features)
    }

    fn predict_proba(&self, x: &[f64], price: f64) -> Result<f64> {
        check_dim(Some(self.n_features), x)?;
        Ok(sigmoid(self.raw_score_prefix(x, price, self.trees.len())))
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Sums {
    grad: f64,
    hess: f64,
    count: usize,
}

struct Grower<'a> {
    /// Column-major inputs, price last.
    columns: &'a [Vec<f64>],
    /// Row indices sorted by each column.
    sorted: &'a [Vec<u32>],
    grad: &'a [f64],
    hess: &'a [f64],
    min_child_samples: usize,
}

impl Grower<'_> {
    fn score(s: Sums) -> f64 {
        s.grad * s.grad / s.hess
    }

    /// Best split for each of the given leaves, in one pass per feature.
    fn best_splits(&self, leaf_of: &[u32], leaves: &[(u32, Sums)]) -> Vec<Option<Candidate>> {
        let mut best: Vec<Option<Candidate>> = vec![None; leaves.len()];
        let slot = |leaf: u32| leaves.iter().position(|&(l, _)| l == leaf);
        for (f, order) in self.sorted.iter().enumerate() {
            let col = &self.columns[f];
            let mut acc = vec![Sums::default(); leaves.len()];
            let mut last: Vec<Option<f64>> = vec![None; leaves.len()];
            for &i in order {
                let i = i as usize;
                let Some(s) = slot(leaf_of[i]) else { continue };
                let v = col[i];
                if let Some(prev) = last[s] {
                    if v > prev {
                        let left = acc[s];
                        let total = leaves[s].1;
                        let right = Sums {
                            grad: total.grad - left.grad,
                            hess: total.hess - left.hess,
                            count: total.count - left.count,
                        };
                        if left.count >= self.min_child_samples
                            && right.count >= self.min_child_samples
                            && left.hess >= MIN_CHILD_HESSIAN
                            && right.hess >= MIN_CHILD_HESSIAN
                        {
                            let gain = Self::score(left) + Self::score(right) - Self::score(total);
                            if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                                let mid = prev + (v - prev) / 2.0;
                                let threshold = if mid < v { mid } else { prev };
                                best[s] = Some(Candidate {
                                    gain,
                                    feature: f,
                                    threshold,
                                });
                            }
                        }
                    }
                }
                acc[s].grad += self.grad[i];
                acc[s].hess += self.hess[i];
                acc[s].count += 1;
                last[s] = Some(v);
            }
        }
        best
    }

    /// Grows one tree over the rows with `leaf_of[i] == 0`; other rows must be `u32::MAX`.
    fn grow(&self, leaf_of: &mut [u32], max_leaves: usize) -> GbtTree {
        let mut nodes = vec![GbtNode::Leaf { value: 0.0 }];
        let mut root = Sums::default();
        for (i, &l) in leaf_of.iter().enumerate() {
            if l == 0 {
                root.grad += self.grad[i];
                root.hess += self.hess[i];
                root.count += 1;
            }
        }
        // open leaves: (node id, sums, best candidate)
        let mut open: Vec<(u32, Sums, Option<Candidate>)> = Vec::new();
        let first = self.best_splits(leaf_of, &[(0, root)]);
        open.push((0, root, first[0]));
        let mut n_leaves = 1;
        while n_leaves < max_leaves {
            let pick = open
                .iter()
                .enumerate()
                .filter_map(|(k, (_, _, c))| c.map(|c| (k, c.gain)))
                .fold(None::<(usize, f64)>, |acc, (k, g)| match acc {
                    Some((_, bg)) if bg >= g => acc,
                    _ => Some((k, g)),
                });
            let Some((k, _)) = pick else { break };
            let (node, _, cand) = open.swap_remove(k);
            let cand = cand.expect("picked leaves have a candidate");
            let left = nodes.len() as u32;
            let right = left + 1;
            nodes[node as usize] = GbtNode::Split {
                feature: cand.feature,
                threshold: cand.threshold,
                left: left as usize,
                right: right as usize,
            };
            nodes.push(GbtNode::Leaf { value: 0.0 });
            nodes.push(GbtNode::Leaf { value: 0.0 });
            let col = &self.columns[cand.feature];
            let (mut ls, mut rs) = (Sums::default(), Sums::default());
            for (i, l) in leaf_of.iter_mut().enumerate() {
                if *l == node {
                    let s = if col[i] <= cand.threshold {
                        *l = left;
                        &mut ls
                    } else {
                        *l = right;
                        &mut rs
                    };
                    s.grad += self.grad[i];
                    s.hess += self.hess[i];
                    s.count += 1;
                }
            }
            let children = [(left, ls), (right, rs)];
            let cands = self.best_splits(leaf_of, &children);
            open.push((left, ls, cands[0]));
            open.push((right, rs, cands[1]));
            n_leaves += 1;
        }
        for (id, sums, _) in open {
            nodes[id as usize] = GbtNode::Leaf {
                value: -sums.grad / sums.hess,
            };
        }
        GbtTree { nodes }
    }
}

/// Fits the teacher on `(x, p) -> y` with logistic loss.
pub fn fit_gbt(train: &Dataset, config: &GbtConfig) -> Result<GbtModel> {
    config.validate()?;
    let n = train.n_rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let positives = train.outcomes().iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == n {
        return Err(Error::SingleClass);
    }
    let d = train.n_features();
    let mut columns: Vec<Vec<f64>> = (0..d).map(|j| train.features().column(j)).collect();
    columns.push(train.prices().to_vec());
    let sorted: Vec<Vec<u32>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let y: Vec<f64> = train.outcomes().iter().map(|&v| v as f64).collect();
    let rate = positives as f64 / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let mut raw = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut leaf_of = vec![0u32; n];
    let mut trees = Vec::with_capacity(config.rounds);
    let mut input = vec![0.0; d + 1];
    for round in 0..config.rounds {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        if config.subsample < 1.0 {
            let mut s = Stream::new(derive_seed(config.seed, &[round as u64]));
            for l in leaf_of.iter_mut() {
                *l = if s.uniform() < config.subsample {
                    0
                } else {
                    u32::MAX
                };
            }
        } else {
            leaf_of.fill(0);
        }
        let grower = Grower {
            columns: &columns,
            sorted: &sorted,
            grad: &grad,
            hess: &hess,
            min_child_samples: config.min_child_samples.max(1),
        };
        let tree = grower.grow(&mut leaf_of, config.max_leaves);
        for (i, r) in raw.iter_mut().enumerate() {
            for (j, col) in columns.iter().enumerate() {
                input[j] = col[i];
            }
            *r += config.learning_rate * tree.predict(&input);
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        n_features: d,
        base_score,
        learning_rate: config.learning_rate,
        trees,
    })
}
