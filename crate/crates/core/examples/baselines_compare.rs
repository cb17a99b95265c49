//! Student tree against the personalization tree, causal trees, naive
//! distillation and a single price, all scored under the true demand.

use sptlab::baselines::{
    constant_price_policy, fit_ct_one_vs_all, fit_naive_distill, fit_pt, historical_policy_revenue,
    TreatmentAssignment,
};
use sptlab::dataset::PriceGrid;
use sptlab::eval::{expected_revenue, ModelArgmaxPolicy, PricingPolicy};
use sptlab::spt::{fit_spt, FitConfig};
use sptlab::synth::SyntheticSpec;
use sptlab::teacher::{fit_gbt, revenue_matrix, GbtConfig, OracleTeacher};

fn main() -> sptlab::Result<()> {
    let spec = SyntheticSpec::new(2, 5)?;
    let train = spec.generate(5000, 5)?;
    let test = spec.generate(5000, 6)?;
    let truth = OracleTeacher::new(spec.clone());
    let grid = PriceGrid::percentile(train.prices())?;
    let assign = TreatmentAssignment::snap(train.prices(), &grid);
    let config = FitConfig::depth(3);

    let teacher = fit_gbt(&train, &GbtConfig::default())?;
    let revenue = revenue_matrix(&teacher, train.features(), &grid)?;
    let d = train.n_features();

    let score = |name: &str, policy: &dyn PricingPolicy| -> sptlab::Result<()> {
        println!(
            "{name:<10} {:.4}",
            expected_revenue(policy, test.features(), &truth)?
        );
        Ok(())
    };
    score("spt", &fit_spt(train.features(), &revenue, &config)?)?;
    score("pt", &fit_pt(&train, &grid, &assign, &config)?)?;
    score(
        "ct",
        &fit_ct_one_vs_all(&train, &grid, &assign, &config, 5)?,
    )?;
    score(
        "naive",
        &fit_naive_distill(&teacher, train.features(), &grid, &config)?,
    )?;
    score("constant", &constant_price_policy(&revenue, d)?)?;
    score(
        "teacher",
        &ModelArgmaxPolicy {
            model: &teacher,
            grid: &grid,
        },
    )?;
    println!(
        "{:<10} {:.4}",
        "no_change",
        historical_policy_revenue(&test, &truth)?
    );
    Ok(())
}
