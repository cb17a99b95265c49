//! Run a small replicated sweep and print the per-setting summary.
//! Pass a bundled plan name or a TOML path to run something else.

use sptlab::eval::{run_experiment, Plan};

const DEFAULT: &str = r#"
name = "demo"
specs = [1, 4]
n_train = [1000]
depths = [1, 3]
reps = 3
seed = 7
n_test = 2000
truth = "oracle"
teacher = "gbt"
policies = ["spt", "pt", "const", "optimal"]
"#;

fn main() -> sptlab::Result<()> {
    let plan = match std::env::args().nth(1) {
        Some(name) => Plan::resolve(&name)?,
        None => Plan::from_toml(DEFAULT)?,
    };
    let out = run_experiment(&plan)?;
    println!("{} rows", out.results.len());
    for r in &out.reports {
        println!(
            "world {} {:<12} {:<7} depth {:?} minsplit {:?}: {:.4} ± {:.4} ({} reps)",
            r.spec, r.policy, r.scope, r.depth, r.minsplit, r.mean_revenue, r.std_error, r.reps
        );
    }
    if let Some(dir) = std::env::args().nth(2) {
        out.write(&dir)?;
        println!("written to {dir}");
    }
    Ok(())
}
