//! Counterfactual policy evaluation, regret-bound checks and experiment sweeps.

mod experiment;
mod regret;

pub use experiment::{
    bundled_plan, run_experiment, write_reports_csv, write_results_csv, EvaluationReport,
    ExperimentOutput, Plan, PolicyKind, ResultRow, Setting, TeacherKind, TruthKind, BUNDLED_PLANS,
};
pub use regret::{
    designed_truth, hypercube_cells_per_axis, hypercube_policy, numeric_lipschitz, regret_bound,
    verify_regret_bound, RegretBoundParams, RegretCheck,
};

use rayon::prelude::*;

use crate::baselines::OneVsAllPolicy;
use crate::dataset::{Features, PriceGrid};
use crate::error::{Error, Result};
use crate::spt::argmax;
use crate::synth::SyntheticSpec;
use crate::teacher::DemandModel;
use crate::tree::PolicyTree;

/// Anything that maps a feature vector to a price.
pub trait PricingPolicy: Sync {
    fn price(&self, x: &[f64]) -> Result<f64>;

    /// Row-aware variant for policies backed by row-indexed tables.
    fn price_row(&self, _row: usize, x: &[f64]) -> Result<f64> {
        self.price(x)
    }
}

impl PricingPolicy for PolicyTree {
    fn price(&self, x: &[f64]) -> Result<f64> {
        self.predict_price(x)
    }
}

impl PricingPolicy for OneVsAllPolicy {
    fn price(&self, x: &[f64]) -> Result<f64> {
        self.prescribe(x)
    }
}

/// Same price for everyone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPrice(pub f64);

impl PricingPolicy for FixedPrice {
    fn price(&self, _: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

/// Full personalization by a demand model: the grid price with the highest
/// predicted revenue, lowest on ties.
pub struct ModelArgmaxPolicy<'a, M: ?Sized> {
    pub model: &'a M,
    pub grid: &'a PriceGrid,
}

impl<M: DemandModel + ?Sized> ModelArgmaxPolicy<'_, M> {
    fn best(&self, row: Option<usize>, x: &[f64]) -> Result<f64> {
        let revenue = self
            .grid
            .prices()
            .iter()
            .map(|&p| {
                let f = match row {
                    Some(i) => self.model.predict_row(i, x, p)?,
                    None => self.model.predict_proba(x, p)?,
                };
                Ok(p * f)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.grid.price(argmax(&revenue).0))
    }
}

impl<M: DemandModel + ?Sized> PricingPolicy for ModelArgmaxPolicy<'_, M> {
    fn price(&self, x: &[f64]) -> Result<f64> {
        self.best(None, x)
    }

    fn price_row(&self, row: usize, x: &[f64]) -> Result<f64> {
        self.best(Some(row), x)
    }
}

/// Pointwise optimum under the true demand of a synthetic world.
pub struct OracleOptimalPolicy<'a> {
    pub spec: &'a SyntheticSpec,
    pub grid: &'a PriceGrid,
}

impl PricingPolicy for OracleOptimalPolicy<'_> {
    fn price(&self, x: &[f64]) -> Result<f64> {
        Ok(self.spec.oracle_optimal(x, self.grid)?.0)
    }
}

fn per_row<T: Send>(
    features: &Features,
    f: impl Fn(usize, &[f64]) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    (0..features.n_rows())
        .into_par_iter()
        .map(|i| f(i, features.row(i)))
        .collect()
}

fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooFewRows { needed: 1, got: 0 });
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean of `price * truth(x, price)` over rows, with the policy's price.
/// Rows are evaluated in parallel and summed in row order.
pub fn expected_revenue(
    policy: &(impl PricingPolicy + ?Sized),
    features: &Features,
    truth: &(impl DemandModel + ?Sized),
) -> Result<f64> {
    let revenue = per_row(features, |i, x| {
        let p = policy.price_row(i, x)?;
        Ok(p * truth.predict_row(i, x, p)?)
    })?;
    mean(&revenue)
}

/// Mean squared difference between two policies' prices.
pub fn policy_mse(
    a: &(impl PricingPolicy + ?Sized),
    b: &(impl PricingPolicy + ?Sized),
    features: &Features,
) -> Result<f64> {
    let sq = per_row(features, |i, x| {
        let d = a.price_row(i, x)? - b.price_row(i, x)?;
        Ok(d * d)
    })?;
    mean(&sq)
}
