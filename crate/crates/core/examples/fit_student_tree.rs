//! Distill a boosted teacher into pricing trees of increasing depth.

use sptlab::dataset::PriceGrid;
use sptlab::eval::{expected_revenue, OracleOptimalPolicy};
use sptlab::spt::{fit_spt, FitConfig};
use sptlab::synth::SyntheticSpec;
use sptlab::teacher::{fit_gbt, revenue_matrix, GbtConfig, OracleTeacher};

fn main() -> sptlab::Result<()> {
    let spec = SyntheticSpec::new(4, 3)?;
    let train = spec.generate(5000, 3)?;
    let test = spec.generate(5000, 4)?;
    let grid = PriceGrid::percentile(train.prices())?;
    println!("price grid {:?}", grid.prices());

    let teacher = fit_gbt(&train, &GbtConfig::default())?;
    let revenue = revenue_matrix(&teacher, train.features(), &grid)?;
    let truth = OracleTeacher::new(spec.clone());

    for depth in 0..=5 {
        let tree = fit_spt(train.features(), &revenue, &FitConfig::depth(depth))?;
        println!(
            "depth {depth}: {:>2} leaves, teacher revenue {:.4}, true revenue {:.4}",
            tree.n_leaves(),
            tree.total_revenue() / train.n_rows() as f64,
            expected_revenue(&tree, test.features(), &truth)?
        );
    }
    let best = OracleOptimalPolicy {
        spec: &spec,
        grid: &grid,
    };
    println!(
        "per-item optimum on the grid {:.4}",
        expected_revenue(&best, test.features(), &truth)?
    );

    let tree = fit_spt(train.features(), &revenue, &FitConfig::minsplit(500))?;
    println!(
        "minsplit 500: {} leaves, depth {}",
        tree.n_leaves(),
        tree.depth()
    );
    Ok(())
}
