//! Hypercube policies on f(x, p) = Phi(x0 - p) over the unit square:
//! worst observed regret against the Lipschitz bound.

use sptlab::dataset::PriceGrid;
use sptlab::eval::{designed_truth, regret_bound, verify_regret_bound, RegretBoundParams};

fn main() -> sptlab::Result<()> {
    let grid = PriceGrid::linspace(0.0, 2.0, 201)?;
    let truth = designed_truth();
    println!("depth  cells/axis  max regret  bound    slack    holds");
    for depth in [0, 2, 4, 6, 8] {
        let c = verify_regret_bound(&truth, 2, &grid, depth, 20_000, 2_000, 11)?;
        println!(
            "{depth:>5}  {:>10}  {:>10.5}  {:.5}  {:.1e}  {}",
            c.cells_per_axis,
            c.max_regret,
            c.bound,
            c.slack,
            c.holds()
        );
    }
    let with_error = RegretBoundParams {
        lipschitz: 0.4,
        dim: 2,
        depth: 8,
        teacher_error: 0.05,
    };
    println!(
        "bound with teacher error 0.05: {:.4}",
        regret_bound(&with_error)?
    );
    Ok(())
}
