//! Save a fitted tree as JSON and Graphviz DOT, then reload it.

use sptlab::dataset::PriceGrid;
use sptlab::spt::{fit_spt, FitConfig, PolicyTree};
use sptlab::synth::SyntheticSpec;
use sptlab::teacher::{revenue_matrix, OracleTeacher};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec::new(3, 9)?;
    let data = spec.generate(3000, 9)?;
    let grid = PriceGrid::percentile(data.prices())?;
    let revenue = revenue_matrix(&OracleTeacher::new(spec), data.features(), &grid)?;
    let tree = fit_spt(data.features(), &revenue, &FitConfig::depth(2))?
        .with_feature_names(data.feature_names().to_vec())?;

    let dir = std::env::temp_dir().join("sptlab-export");
    std::fs::create_dir_all(&dir)?;
    let json = dir.join("policy.json");
    tree.save_json(&json)?;
    let dot = dir.join("policy.dot");
    std::fs::write(&dot, tree.to_dot())?;

    let back = PolicyTree::load_json(&json)?;
    assert_eq!(back, tree);
    println!("{}", tree.to_json()?);
    println!("wrote {} and {}", json.display(), dot.display());
    println!("render with: dot -Tpng {} -o policy.png", dot.display());
    Ok(())
}
