//! Student prescriptive trees: greedy partitioning of feature space under the
//! revenue criterion. A node's value is the best single grid price's summed
//! teacher-predicted revenue over its rows.

use std::cmp::Ordering;

use crate::dataset::Features;
use crate::error::{Error, Result};
use crate::teacher::RevenueMatrix;
use crate::tree::{self, cmp_slices, SplitCriterion};

pub use crate::tree::{FitConfig, Node, PolicyTree, SplitCandidate};

pub(crate) struct RevenueCriterion<'a> {
    revmat: &'a RevenueMatrix,
}

impl<'a> RevenueCriterion<'a> {
    pub(crate) fn new(revmat: &'a RevenueMatrix) -> Self {
        Self { revmat }
    }
}

/// First index of the maximum; lower prices win ties.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

impl SplitCriterion for RevenueCriterion<'_> {
    type Acc = Vec<f64>;

    fn empty(&self) -> Vec<f64> {
        vec![0.0; self.revmat.n_prices()]
    }

    fn push(&self, acc: &mut Vec<f64>, row: usize) {
        for (a, r) in acc.iter_mut().zip(self.revmat.row(row)) {
            *a += r;
        }
    }

    fn objective(&self, acc: &Vec<f64>) -> f64 {
        argmax(acc).1
    }

    fn leaf(&self, acc: &Vec<f64>) -> (usize, f64) {
        argmax(acc)
    }

    fn content_cmp(&self, a: usize, b: usize) -> Ordering {
        cmp_slices(self.revmat.row(a), self.revmat.row(b))
    }
}

fn check_shape(features: &Features, revmat: &RevenueMatrix) -> Result<()> {
    if features.n_rows() != revmat.n_rows() {
        return Err(Error::Shape(format!(
            "{} feature rows but {} revenue rows",
            features.n_rows(),
            revmat.n_rows()
        )));
    }
    Ok(())
}

/// Best grid column over `rows` and its summed revenue.
pub fn leaf_revenue(revmat: &RevenueMatrix, rows: &[usize]) -> Result<(usize, f64)> {
    if rows.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= revmat.n_rows()) {
        return Err(Error::RowOutOfRange {
            row: r,
            rows: revmat.n_rows(),
        });
    }
    let crit = RevenueCriterion::new(revmat);
    let mut sorted = rows.to_vec();
    sorted.sort_by(|&a, &b| crit.content_cmp(a, b));
    Ok(crit.leaf(&crit.accumulate(&sorted)))
}

/// Best improving split of `rows`, if any.
pub fn best_split(
    revmat: &RevenueMatrix,
    features: &Features,
    rows: &[usize],
    config: &FitConfig,
) -> Result<Option<SplitCandidate>> {
    check_shape(features, revmat)?;
    config.validate()?;
    Ok(tree::best_split(
        &RevenueCriterion::new(revmat),
        features,
        rows,
        config,
    ))
}

pub fn fit_spt(
    features: &Features,
    revmat: &RevenueMatrix,
    config: &FitConfig,
) -> Result<PolicyTree> {
    check_shape(features, revmat)?;
    tree::grow(
        &RevenueCriterion::new(revmat),
        features,
        revmat.grid(),
        config,
    )
}
