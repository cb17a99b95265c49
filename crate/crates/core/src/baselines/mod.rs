//! Comparator policies for the student tree.

mod ct;
mod naive;
mod pt;

pub use ct::{fit_ct_one_vs_all, EffectTree, NodeEstimate, OneVsAllPolicy};
pub use naive::{fit_naive_distill, naive_training_mse};
pub use pt::fit_pt;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, PriceGrid};
use crate::error::{Error, Result};
use crate::spt::leaf_revenue;
use crate::teacher::{DemandModel, RevenueMatrix};
use crate::tree::PolicyTree;

/// Observed prices snapped to the grid; these are the treatments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    treatments: Vec<usize>,
    n_treatments: usize,
}

impl TreatmentAssignment {
    /// Nearest grid price, ties to the lower one.
    pub fn snap(prices: &[f64], grid: &PriceGrid) -> Self {
        Self {
            treatments: prices.iter().map(|&p| grid.snap(p)).collect(),
            n_treatments: grid.len(),
        }
    }

    pub fn from_indices(treatments: Vec<usize>, grid: &PriceGrid) -> Result<Self> {
        if let Some(&t) = treatments.iter().find(|&&t| t >= grid.len()) {
            return Err(Error::InvalidData(format!(
                "treatment {t} is outside a grid of {} prices",
                grid.len()
            )));
        }
        Ok(Self {
            treatments,
            n_treatments: grid.len(),
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.treatments
    }

    pub fn get(&self, row: usize) -> usize {
        self.treatments[row]
    }

    pub fn len(&self) -> usize {
        self.treatments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatments.is_empty()
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    /// Rows per treatment.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_treatments];
        for &t in &self.treatments {
            c[t] += 1;
        }
        c
    }

    pub(crate) fn check(&self, data: &Dataset, grid: &PriceGrid) -> Result<()> {
        if self.len() != data.n_rows() {
            return Err(Error::Shape(format!(
                "{} treatments for {} rows",
                self.len(),
                data.n_rows()
            )));
        }
        if self.n_treatments != grid.len() {
            return Err(Error::Shape(format!(
                "assignment built for {} prices, grid has {}",
                self.n_treatments,
                grid.len()
            )));
        }
        Ok(())
    }
}

/// One price for everyone: the column of the revenue matrix with the largest sum.
pub fn constant_price_policy(revmat: &RevenueMatrix, n_features: usize) -> Result<PolicyTree> {
    let rows: Vec<usize> = (0..revmat.n_rows()).collect();
    let (k, sum) = leaf_revenue(revmat, &rows)?;
    PolicyTree::constant(
        revmat.grid().price(k),
        sum,
        rows.len(),
        revmat.grid().clone(),
        n_features,
    )
}

/// Expected revenue per row of keeping the observed prices.
pub fn historical_policy_revenue(
    data: &Dataset,
    truth: &(impl DemandModel + ?Sized),
) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    let mut total = 0.0;
    for (i, (x, &p)) in data.features().rows().zip(data.prices()).enumerate() {
        total += p * truth.predict_row(i, x, p)?;
    }
    Ok(total / data.n_rows() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Features;
    use crate::teacher::FnModel;

    fn grid(p: &[f64]) -> PriceGrid {
        PriceGrid::explicit(p.to_vec()).unwrap()
    }

    #[test]
    fn snapping_is_identity_on_grid_prices() {
        let g = grid(&[1.0, 2.0, 4.0]);
        let a = TreatmentAssignment::snap(&[4.0, 1.0, 2.0], &g);
        assert_eq!(a.indices(), &[2, 0, 1]);
        let b = TreatmentAssignment::snap(&[1.5, 3.1, 0.0, 9.0], &g);
        assert_eq!(b.indices(), &[0, 2, 0, 2]);
        assert_eq!(b.counts(), vec![2, 0, 2]);
        assert!(TreatmentAssignment::from_indices(vec![3], &g).is_err());
    }

    #[test]
    fn constant_policy_examples() {
        let toy =
            RevenueMatrix::from_rows(&[[10.0, 0.0], [10.0, 12.0]], grid(&[10.0, 12.0])).unwrap();
        let t = constant_price_policy(&toy, 1).unwrap();
        assert_eq!(t.predict_price(&[3.0]).unwrap(), 10.0);
        assert_eq!(t.total_revenue(), 20.0);
        let single = RevenueMatrix::from_rows(&[[1.0], [2.0]], grid(&[7.0])).unwrap();
        assert_eq!(
            constant_price_policy(&single, 1)
                .unwrap()
                .predict_price(&[0.0])
                .unwrap(),
            7.0
        );
        let uniform = RevenueMatrix::from_rows(&[[1.0, 1.0, 1.0]], grid(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(
            constant_price_policy(&uniform, 1)
                .unwrap()
                .predict_price(&[0.0])
                .unwrap(),
            1.0
        );
    }

    #[test]
    fn historical_revenue_examples() {
        let f = Features::from_rows(&[[0.0], [1.0]]).unwrap();
        let data = Dataset::with_default_names(f, vec![2.0, 4.0], vec![0, 1]).unwrap();
        let one = FnModel::new(Some(1), |_: &[f64], _| 1.0);
        assert_eq!(historical_policy_revenue(&data, &one).unwrap(), 3.0);
        let zero = FnModel::new(Some(1), |_: &[f64], _| 0.0);
        assert_eq!(historical_policy_revenue(&data, &zero).unwrap(), 0.0);
        let mixed = FnModel::new(
            Some(1),
            |_: &[f64], p: f64| if p == 2.0 { 0.5 } else { 0.25 },
        );
        assert_eq!(historical_policy_revenue(&data, &mixed).unwrap(), 1.0);
    }
}
