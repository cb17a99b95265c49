use std::cmp::Ordering;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Features, PriceGrid};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::tree::{self, FitConfig, Node, PolicyTree, SplitCriterion};

use super::TreatmentAssignment;

/// Minimum treated and control rows on each side of a split.
const MIN_GROUP: usize = 2;

/// Adaptive causal-tree criterion: `n * (mean_treated - mean_control)^2`,
/// undefined (minus infinity) when either group is too small.
struct EffectCriterion<'a> {
    treated: &'a [bool],
    outcome: &'a [f64],
    treatment: usize,
}

#[derive(Clone, Copy, Default)]
struct Groups {
    n_treated: usize,
    sum_treated: f64,
    n_control: usize,
    sum_control: f64,
}

impl SplitCriterion for EffectCriterion<'_> {
    type Acc = Groups;

    fn empty(&self) -> Groups {
        Groups::default()
    }

    fn push(&self, acc: &mut Groups, row: usize) {
        if self.treated[row] {
            acc.n_treated += 1;
            acc.sum_treated += self.outcome[row];
        } else {
            acc.n_control += 1;
            acc.sum_control += self.outcome[row];
        }
    }

    fn objective(&self, g: &Groups) -> f64 {
        if g.n_treated < MIN_GROUP || g.n_control < MIN_GROUP {
            return f64::NEG_INFINITY;
        }
        let effect = g.sum_treated / g.n_treated as f64 - g.sum_control / g.n_control as f64;
        (g.n_treated + g.n_control) as f64 * effect * effect
    }

    fn leaf(&self, _: &Groups) -> (usize, f64) {
        (self.treatment, 0.0)
    }

    fn content_cmp(&self, a: usize, b: usize) -> Ordering {
        self.treated[a]
            .cmp(&self.treated[b])
            .then_with(|| self.outcome[a].total_cmp(&self.outcome[b]))
    }
}

/// Honest estimate attached to a node. Counts are the estimation rows that
/// reached the node; when either group is empty the means are inherited from
/// the parent and `inherited` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    pub n_treated: usize,
    pub n_control: usize,
    pub treated_mean: f64,
    pub control_mean: f64,
    pub inherited: bool,
}

impl NodeEstimate {
    pub fn effect(&self) -> f64 {
        self.treated_mean - self.control_mean
    }
}

/// Effect of one price against all others, as a function of features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectTree {
    pub treatment: usize,
    pub structure: PolicyTree,
    /// Indexed by node id.
    pub estimates: Vec<NodeEstimate>,
}

impl EffectTree {
    pub fn estimate(&self, x: &[f64]) -> Result<&NodeEstimate> {
        Ok(&self.estimates[self.structure.leaf_for(x)?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneVsAllPolicy {
    pub grid: PriceGrid,
    pub trees: Vec<EffectTree>,
}

impl OneVsAllPolicy {
    /// `p_t * E[Y | x, P = t]` from each price's own tree.
    pub fn expected_revenues(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.trees
            .iter()
            .map(|t| Ok(self.grid.price(t.treatment) * t.estimate(x)?.treated_mean))
            .collect()
    }

    /// Price with the highest expected revenue, lowest on ties.
    pub fn prescribe(&self, x: &[f64]) -> Result<f64> {
        let scores = self.expected_revenues(x)?;
        let (k, _) = crate::spt::argmax(&scores);
        Ok(self.grid.price(self.trees[k].treatment))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
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

    fn validate(&self) -> Result<()> {
        if self.trees.len() != self.grid.len() {
            return Err(Error::Shape(format!(
                "{} effect trees for {} prices",
                self.trees.len(),
                self.grid.len()
            )));
        }
        for (k, t) in self.trees.iter().enumerate() {
            if t.treatment != k || t.estimates.len() != t.structure.nodes().len() {
                return Err(Error::InvalidData(format!("effect tree {k} is malformed")));
            }
        }
        Ok(())
    }
}

/// One honest causal tree per grid price. Rows are shuffled once by `seed`;
/// the first `ceil(n/2)` shape the trees and the rest estimate leaf means.
pub fn fit_ct_one_vs_all(
    data: &Dataset,
    grid: &PriceGrid,
    assign: &TreatmentAssignment,
    config: &FitConfig,
    seed: u64,
) -> Result<OneVsAllPolicy> {
    assign.check(data, grid)?;
    config.validate()?;
    let n = data.n_rows();
    for (t, &c) in assign.counts().iter().enumerate() {
        if c == 0 || c == n {
            return Err(Error::InvalidData(format!(
                "price {} needs both treated and control rows",
                grid.price(t)
            )));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut Stream::new(seed));
    let (structure_rows, estimation_rows) = order.split_at(n.div_ceil(2));
    let mut structure_rows = structure_rows.to_vec();
    let mut estimation_rows = estimation_rows.to_vec();
    structure_rows.sort_unstable();
    estimation_rows.sort_unstable();

    let features = data.features();
    let structure_features = features.select(&structure_rows);
    let outcome: Vec<f64> = structure_rows
        .iter()
        .map(|&i| f64::from(data.outcomes()[i]))
        .collect();

    let trees = (0..grid.len())
        .into_par_iter()
        .map(|t| {
            let treated: Vec<bool> = structure_rows.iter().map(|&i| assign.get(i) == t).collect();
            let crit = EffectCriterion {
                treated: &treated,
                outcome: &outcome,
                treatment: t,
            };
            let shape = tree::grow(&crit, &structure_features, grid, config)?;
            honest_estimates(shape, t, data, assign, &estimation_rows, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OneVsAllPolicy {
        grid: grid.clone(),
        trees,
    })
}

#[derive(Default, Clone, Copy)]
struct Counts {
    n_t: usize,
    s_t: f64,
    n_c: usize,
    s_c: f64,
}

fn route_counts(
    shape: &PolicyTree,
    features: &Features,
    rows: &[usize],
    treated: impl Fn(usize) -> bool,
    outcome: impl Fn(usize) -> f64,
) -> Vec<Counts> {
    let mut counts = vec![Counts::default(); shape.nodes().len()];
    for &i in rows {
        let x = features.row(i);
        let mut id = shape.root();
        loop {
            let c = &mut counts[id];
            if treated(i) {
                c.n_t += 1;
                c.s_t += outcome(i);
            } else {
                c.n_c += 1;
                c.s_c += outcome(i);
            }
            match shape.nodes()[id] {
                Node::Leaf { .. } => break,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[feature] <= threshold { left } else { right },
            }
        }
    }
    counts
}

fn honest_estimates(
    shape: PolicyTree,
    t: usize,
    data: &Dataset,
    assign: &TreatmentAssignment,
    estimation_rows: &[usize],
    grid: &PriceGrid,
) -> Result<EffectTree> {
    let treated = |i: usize| assign.get(i) == t;
    let outcome = |i: usize| f64::from(data.outcomes()[i]);
    let counts = route_counts(&shape, data.features(), estimation_rows, treated, outcome);

    // root falls back to the whole sample when the estimation half lacks a group
    let all: Vec<usize> = (0..data.n_rows()).collect();
    let whole = route_counts(&shape, data.features(), &all, treated, outcome)[shape.root()];

    let mut estimates: Vec<Option<NodeEstimate>> = vec![None; shape.nodes().len()];
    let mut stack = vec![(shape.root(), None::<usize>)];
    while let Some((id, parent)) = stack.pop() {
        let c = counts[id];
        let fallback = match parent {
            Some(p) => estimates[p].clone().expect("parent resolved first"),
            None => NodeEstimate {
                n_treated: whole.n_t,
                n_control: whole.n_c,
                treated_mean: whole.s_t / whole.n_t as f64,
                control_mean: whole.s_c / whole.n_c as f64,
                inherited: true,
            },
        };
        let est = if c.n_t > 0 && c.n_c > 0 {
            NodeEstimate {
                n_treated: c.n_t,
                n_control: c.n_c,
                treated_mean: c.s_t / c.n_t as f64,
                control_mean: c.s_c / c.n_c as f64,
                inherited: false,
            }
        } else {
            NodeEstimate {
                n_treated: c.n_t,
                n_control: c.n_c,
                inherited: true,
                ..fallback
            }
        };
        estimates[id] = Some(est);
        if let Node::Split { left, right, .. } = shape.nodes()[id] {
            stack.push((right, Some(id)));
            stack.push((left, Some(id)));
        }
    }
    let estimates: Vec<NodeEstimate> = estimates
        .into_iter()
        .map(|e| e.expect("reachable"))
        .collect();

    let price = grid.price(t);
    let nodes = shape
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, node)| match *node {
            Node::Leaf { n_train, .. } => Node::Leaf {
                price,
                revenue_sum: price * estimates[id].treated_mean * n_train as f64,
                n_train,
            },
            ref split => split.clone(),
        })
        .collect();
    let structure = PolicyTree::new(
        nodes,
        shape.root(),
        data.feature_names().to_vec(),
        grid.clone(),
    )?;
    Ok(EffectTree {
        treatment: t,
        structure,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> Dataset {
        // segment A (x=0) buys only at price 1; segment B (x=1) buys at both
        let mut rows = Vec::new();
        let mut prices = Vec::new();
        let mut sold = Vec::new();
        for rep in 0..40 {
            for (x, p) in [(0.0, 1.0), (0.0, 2.0), (1.0, 1.0), (1.0, 2.0)] {
                rows.push([x, rep as f64]);
                prices.push(p);
                sold.push(u8::from(x == 1.0 || p == 1.0));
            }
        }
        Dataset::with_default_names(Features::from_rows(&rows).unwrap(), prices, sold).unwrap()
    }

    fn fit(data: &Dataset, depth: usize) -> OneVsAllPolicy {
        let g = PriceGrid::explicit(vec![1.0, 2.0]).unwrap();
        let a = TreatmentAssignment::snap(data.prices(), &g);
        fit_ct_one_vs_all(data, &g, &a, &FitConfig::depth(depth), 9).unwrap()
    }

    #[test]
    fn two_segment_fixture() {
        let p = fit(&fixture(), 2);
        assert_eq!(p.prescribe(&[0.0, 5.0]).unwrap(), 1.0);
        assert_eq!(p.prescribe(&[1.0, 5.0]).unwrap(), 2.0);
    }

    #[test]
    fn no_sales_means_lowest_price() {
        let d = fixture();
        let zero = Dataset::with_default_names(
            d.features().clone(),
            d.prices().to_vec(),
            vec![0; d.n_rows()],
        )
        .unwrap();
        let p = fit(&zero, 2);
        for x in d.features().rows() {
            assert_eq!(p.prescribe(x).unwrap(), 1.0);
            assert!(p
                .trees
                .iter()
                .all(|t| t.estimate(x).unwrap().effect() == 0.0));
        }
    }

    #[test]
    fn depth_zero_is_constant() {
        let d = fixture();
        let p = fit(&d, 0);
        let first = p.prescribe(d.features().row(0)).unwrap();
        assert!(d
            .features()
            .rows()
            .all(|x| p.prescribe(x).unwrap() == first));
    }

    #[test]
    fn json_round_trip() {
        let p = fit(&fixture(), 2);
        let back = OneVsAllPolicy::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn relabeling_prices_permutes_consistently() {
        // negate the price order by mapping p -> 3 - p on a symmetric grid;
        // expected revenues are recomputed, so compare the treated means instead
        let d = fixture();
        let p = fit(&d, 2);
        let flipped_prices: Vec<f64> = d.prices().iter().map(|&x| 3.0 - x).collect();
        let flipped = Dataset::with_default_names(
            d.features().clone(),
            flipped_prices,
            d.outcomes().to_vec(),
        )
        .unwrap();
        let q = fit(&flipped, 2);
        for x in d.features().rows() {
            for t in 0..2 {
                assert_eq!(
                    p.trees[t].estimate(x).unwrap().treated_mean,
                    q.trees[1 - t].estimate(x).unwrap().treated_mean
                );
            }
        }
    }

    #[test]
    fn missing_treatment_is_an_error() {
        let d = fixture();
        let g = PriceGrid::explicit(vec![1.0, 2.0, 5.0]).unwrap();
        let a = TreatmentAssignment::snap(d.prices(), &g);
        assert!(fit_ct_one_vs_all(&d, &g, &a, &FitConfig::depth(1), 0).is_err());
    }
}
