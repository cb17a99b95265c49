use std::cmp::Ordering;

use crate::dataset::{Features, PriceGrid};
use crate::error::Result;
use crate::teacher::{probability_table, DemandModel};
use crate::tree::{self, cmp_slices, FitConfig, PolicyTree, SplitCriterion};

/// Multi-output regression on the teacher's demand curve: node value is minus
/// the summed squared error around the node mean.
struct CurveCriterion<'a> {
    targets: &'a [f64],
    prices: &'a [f64],
}

#[derive(Clone)]
struct Moments {
    n: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl CurveCriterion<'_> {
    fn row(&self, i: usize) -> &[f64] {
        let m = self.prices.len();
        &self.targets[i * m..(i + 1) * m]
    }
}

impl SplitCriterion for CurveCriterion<'_> {
    type Acc = Moments;

    fn empty(&self) -> Moments {
        let m = self.prices.len();
        Moments {
            n: 0,
            sum: vec![0.0; m],
            sum_sq: vec![0.0; m],
        }
    }

    fn push(&self, acc: &mut Moments, row: usize) {
        acc.n += 1;
        for (k, &v) in self.row(row).iter().enumerate() {
            acc.sum[k] += v;
            acc.sum_sq[k] += v * v;
        }
    }

    fn objective(&self, acc: &Moments) -> f64 {
        if acc.n == 0 {
            return 0.0;
        }
        let n = acc.n as f64;
        let sse: f64 = acc
            .sum
            .iter()
            .zip(&acc.sum_sq)
            .map(|(s, q)| (q - s * s / n).max(0.0))
            .sum();
        -sse
    }

    fn leaf(&self, acc: &Moments) -> (usize, f64) {
        let revenue: Vec<f64> = acc
            .sum
            .iter()
            .zip(self.prices)
            .map(|(s, p)| p * s)
            .collect();
        crate::spt::argmax(&revenue)
    }

    fn content_cmp(&self, a: usize, b: usize) -> Ordering {
        cmp_slices(self.row(a), self.row(b))
    }
}

/// Fit a regression tree to the teacher's predicted demand curves, then price
/// each leaf at the revenue-maximizing grid price of its mean curve.
pub fn fit_naive_distill(
    teacher: &(impl DemandModel + ?Sized),
    features: &Features,
    grid: &PriceGrid,
    config: &FitConfig,
) -> Result<PolicyTree> {
    let targets = probability_table(teacher, features, grid)?;
    let crit = CurveCriterion {
        targets: &targets,
        prices: grid.prices(),
    };
    tree::grow(&crit, features, grid, config)
}

/// Mean squared error of the tree's leaf-mean curves against the teacher,
/// averaged over rows and grid prices.
pub fn naive_training_mse(
    tree: &PolicyTree,
    teacher: &(impl DemandModel + ?Sized),
    features: &Features,
    grid: &PriceGrid,
) -> Result<f64> {
    let m = grid.len();
    let targets = probability_table(teacher, features, grid)?;
    let mut sums = vec![vec![0.0; m]; tree.nodes().len()];
    let mut counts = vec![0usize; tree.nodes().len()];
    let leaves: Vec<usize> = features
        .rows()
        .map(|x| tree.leaf_for(x))
        .collect::<Result<_>>()?;
    for (i, &l) in leaves.iter().enumerate() {
        counts[l] += 1;
        for k in 0..m {
            sums[l][k] += targets[i * m + k];
        }
    }
    let mut sse = 0.0;
    for (i, &l) in leaves.iter().enumerate() {
        for k in 0..m {
            let d = targets[i * m + k] - sums[l][k] / counts[l] as f64;
            sse += d * d;
        }
    }
    Ok(sse / (features.n_rows() * m) as f64)
}
