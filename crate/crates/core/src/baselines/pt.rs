use std::cmp::Ordering;

use crate::dataset::{Dataset, PriceGrid};
use crate::error::Result;
use crate::tree::{self, FitConfig, PolicyTree, SplitCriterion};

use super::TreatmentAssignment;

/// Node value: the best per-treatment mean of observed revenue `p_i * y_i`,
/// over treatments present in the node.
struct ObservedRevenueCriterion<'a> {
    treatment: &'a [usize],
    revenue: Vec<f64>,
    m: usize,
}

#[derive(Clone)]
struct Tally {
    count: Vec<usize>,
    sum: Vec<f64>,
}

impl ObservedRevenueCriterion<'_> {
    fn best(&self, acc: &Tally) -> (usize, f64) {
        let mut best: Option<(usize, f64)> = None;
        for t in 0..self.m {
            if acc.count[t] == 0 {
                continue;
            }
            let mean = acc.sum[t] / acc.count[t] as f64;
            if best.is_none_or(|(_, b)| mean > b) {
                best = Some((t, mean));
            }
        }
        best.unwrap_or((0, f64::NEG_INFINITY))
    }
}

impl SplitCriterion for ObservedRevenueCriterion<'_> {
    type Acc = Tally;

    fn empty(&self) -> Tally {
        Tally {
            count: vec![0; self.m],
            sum: vec![0.0; self.m],
        }
    }

    fn push(&self, acc: &mut Tally, row: usize) {
        let t = self.treatment[row];
        acc.count[t] += 1;
        acc.sum[t] += self.revenue[row];
    }

    fn objective(&self, acc: &Tally) -> f64 {
        self.best(acc).1
    }

    fn leaf(&self, acc: &Tally) -> (usize, f64) {
        let (t, mean) = self.best(acc);
        let n: usize = acc.count.iter().sum();
        (t, mean * n as f64)
    }

    fn content_cmp(&self, a: usize, b: usize) -> Ordering {
        self.treatment[a]
            .cmp(&self.treatment[b])
            .then_with(|| self.revenue[a].total_cmp(&self.revenue[b]))
    }
}

/// Personalization tree: greedy splits on the observed-revenue criterion,
/// each leaf prescribing its best-performing treatment.
pub fn fit_pt(
    data: &Dataset,
    grid: &PriceGrid,
    assign: &TreatmentAssignment,
    config: &FitConfig,
) -> Result<PolicyTree> {
    assign.check(data, grid)?;
    let revenue = data
        .prices()
        .iter()
        .zip(data.outcomes())
        .map(|(&p, &y)| p * f64::from(y))
        .collect();
    let crit = ObservedRevenueCriterion {
        treatment: assign.indices(),
        revenue,
        m: grid.len(),
    };
    tree::grow(&crit, data.features(), grid, config)?
        .with_feature_names(data.feature_names().to_vec())
}
