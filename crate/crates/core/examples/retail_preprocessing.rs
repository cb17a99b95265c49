//! Price imputation helpers for transaction logs where non-purchases carry
//! no price.

use sptlab::dataset::{SaleHistory, SaleRecord};

fn main() -> sptlab::Result<()> {
    let sale = |timestamp, store_id, price| SaleRecord {
        timestamp,
        store_id,
        price,
    };
    let history = SaleHistory::new(vec![
        sale(1, 10, 2.49),
        sale(2, 11, 2.29),
        sale(3, 10, 2.49),
        sale(4, 12, 1.99),
        sale(5, 11, 2.29),
        sale(6, 10, 2.29),
    ])?;

    println!(
        "mode of last 3 sales: {}",
        history.impute_mode_of_last_k(3)?
    );
    println!(
        "mode of last 5 sales: {}",
        history.impute_mode_of_last_k(5)?
    );
    for store in [10, 11, 12] {
        println!(
            "store {store} last price: {}",
            history.impute_last_at_store(store)?
        );
    }
    let busy = history.filter_stores_min_sales(2);
    println!(
        "stores with 2+ sales keep {} of {} records",
        busy.len(),
        history.len()
    );
    Ok(())
}
