//! Fit the boosted demand model, score it, and round-trip its text format.

use sptlab::synth::SyntheticSpec;
use sptlab::teacher::{auc, fit_gbt, log_loss, DemandModel, GbtConfig, GbtModel};

fn main() -> sptlab::Result<()> {
    let spec = SyntheticSpec::new(4, 1)?;
    let train = spec.generate(5000, 1)?;
    let test = spec.generate(5000, 2)?;

    let model = fit_gbt(
        &train,
        &GbtConfig {
            seed: 1,
            ..GbtConfig::default()
        },
    )?;
    println!(
        "trees {}, held-out AUC {:.4}, log loss {:.4}",
        model.trees().len(),
        auc(&model, &test)?,
        log_loss(&model, &test)?
    );

    let x = test.features().row(0);
    for p in [1.0, 3.0, 5.0, 7.0] {
        println!(
            "p = {p}: model {:.4}, truth {:.4}",
            model.predict_proba(x, p)?,
            spec.true_probability(x, p)?
        );
    }

    let back = GbtModel::from_text(&model.to_text())?;
    assert_eq!(back.predict_proba(x, 3.0)?, model.predict_proba(x, 3.0)?);
    println!("text format round-trips ({} bytes)", model.to_text().len());
    Ok(())
}
