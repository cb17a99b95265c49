//! Two customer types: one pays at most 10, the other at most 12.
//! A single price earns 10 per customer; a depth-1 tree earns 11.

use sptlab::dataset::{Features, PriceGrid};
use sptlab::eval::{expected_revenue, FixedPrice};
use sptlab::spt::{fit_spt, FitConfig};
use sptlab::teacher::{revenue_matrix, FnModel};

fn main() -> sptlab::Result<()> {
    let truth = FnModel::new(Some(1), |x: &[f64], p: f64| {
        f64::from(u8::from(p <= 10.0 + 2.0 * x[0]))
    });
    let items = Features::from_rows(&[[0.0], [1.0]])?;
    let grid = PriceGrid::explicit(vec![10.0, 12.0])?;
    let revenue = revenue_matrix(&truth, &items, &grid)?;

    let flat = fit_spt(&items, &revenue, &FitConfig::depth(0))?;
    println!(
        "one price: {} -> {} per customer",
        flat.predict_price(&[0.0])?,
        expected_revenue(&flat, &items, &truth)?
    );
    println!(
        "average reservation price 11 -> {}",
        expected_revenue(&FixedPrice(11.0), &items, &truth)?
    );

    let split = fit_spt(&items, &revenue, &FitConfig::depth(1))?;
    println!(
        "depth 1 -> {} per customer",
        expected_revenue(&split, &items, &truth)?
    );
    print!("{}", split.to_dot());
    Ok(())
}
