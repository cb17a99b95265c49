//! Command-line front end. Every command is deterministic given its flags.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::baselines::{
    constant_price_policy, fit_ct_one_vs_all, fit_naive_distill, fit_pt, OneVsAllPolicy,
    TreatmentAssignment,
};
use crate::dataset::{Dataset, PriceGrid};
use crate::error::{Error, Result};
use crate::eval::{expected_revenue, run_experiment, Plan, BUNDLED_PLANS};
use crate::spt::fit_spt;
use crate::synth::SyntheticSpec;
use crate::teacher::{
    fit_gbt, revenue_matrix, GbtConfig, GbtModel, OracleTeacher, TableTeacher, Teacher,
};
use crate::tree::{FitConfig, PolicyTree};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "SPTLAB_THREADS";

#[derive(Parser, Debug)]
#[command(
    name = "sptlab",
    version,
    about = "Interpretable personalized pricing trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Fit a pricing policy to a dataset.
    Fit(FitArgs),
    /// Score a saved policy on a dataset under a truth model.
    Evaluate(EvaluateArgs),
    /// Run a replicated experiment plan.
    Experiment(ExperimentArgs),
    /// Render a saved policy tree as JSON or Graphviz DOT.
    Export(ExportArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: u32,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Spt,
    Pt,
    Ct,
    Naive,
    Const,
}

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// `gbt[:key=value,...]`, `table:<path>`, `oracle:<id>[:<seed>]` or `model:<path>`.
    #[arg(long, default_value = "gbt")]
    pub teacher: String,
    #[arg(long, value_enum, default_value = "spt")]
    pub method: Method,
    /// `percentile`, `explicit:<p1>,<p2>,...` or `linspace:<lo>,<hi>,<count>`.
    #[arg(long, default_value = "percentile")]
    pub grid: String,
    #[arg(long, conflicts_with = "minsplit")]
    pub depth: Option<usize>,
    #[arg(long)]
    pub minsplit: Option<usize>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fitted boosted teacher in its text format.
    #[arg(long)]
    pub save_teacher: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Same forms as the fit teacher; tables are read on the policy's grid.
    #[arg(long)]
    pub truth: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ExperimentArgs {
    /// Bundled plan name or path to a TOML plan.
    #[arg(long, required_unless_present = "list")]
    pub plan: Option<String>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// List bundled plans and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Format {
    Json,
    Dot,
}

#[derive(Args, Debug, Serialize)]
pub struct ExportArgs {
    #[arg(long)]
    pub tree: PathBuf,
    #[arg(long, value_enum)]
    pub format: Format,
    /// Defaults to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses arguments, runs the command and maps errors to a nonzero status.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let mut stdout = std::io::stdout().lock();
    match run(&cli.command, &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value.trim().parse().map_err(|_| {
        Error::Config(format!(
            "{THREADS_ENV} must be a positive integer, got `{value}`"
        ))
    })?;
    // a pool may already exist when called twice in one process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    Ok(())
}

/// Runs one command, writing human-readable output to `out`.
pub fn run(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Evaluate(a) => cmd_evaluate(a, out),
        Command::Experiment(a) => cmd_experiment(a, out),
        Command::Export(a) => cmd_export(a, out),
    }
}

fn say(out: &mut dyn Write, line: std::fmt::Arguments) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
}

/// Records the command and its flags next to an output file.
fn write_provenance(output: &Path, command: &str, args: &impl Serialize) -> Result<()> {
    let mut name = output.as_os_str().to_owned();
    name.push(".run.json");
    let path = PathBuf::from(name);
    let doc = serde_json::json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "args": args });
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?).map_err(|e| Error::io(&path, e))
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SyntheticSpec::new(a.spec, a.seed)?;
    let data = spec.generate(a.n, a.seed)?;
    data.write_csv_file(&a.out)?;
    write_provenance(&a.out, "synth", a)?;
    say(
        out,
        format_args!(
            "n = {}, d = {}, positive rate = {:.4}",
            data.n_rows(),
            data.n_features(),
            data.positive_rate()
        ),
    )
}

/// Parses a grid flag against the observed prices.
pub fn parse_grid(flag: &str, observed: &[f64]) -> Result<PriceGrid> {
    let numbers = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad number `{v}` in grid flag")))
            })
            .collect()
    };
    match flag.split_once(':') {
        None if flag == "percentile" => PriceGrid::percentile(observed),
        Some(("explicit", list)) => PriceGrid::explicit(numbers(list)?),
        Some(("linspace", spec)) => match numbers(spec)?.as_slice() {
            [lo, hi, count] if *count >= 1.0 && count.fract() == 0.0 => {
                PriceGrid::linspace(*lo, *hi, *count as usize)
            }
            _ => Err(Error::Config("linspace needs <lo>,<hi>,<count>".into())),
        },
        _ => Err(Error::Config(format!(
            "unknown grid `{flag}` (expected percentile, explicit:..., linspace:...)"
        ))),
    }
}

/// Builds a demand model from a source flag. `gbt` sources are fit on `data`.
pub fn parse_teacher(source: &str, data: &Dataset, grid: &PriceGrid, seed: u64) -> Result<Teacher> {
    let (kind, rest) = source.split_once(':').unwrap_or((source, ""));
    match kind {
        "gbt" => {
            let mut config = GbtConfig::parse_overrides(rest)?;
            if !rest.split(',').any(|kv| kv.trim().starts_with("seed=")) {
                config.seed = seed;
            }
            Ok(Teacher::Gbt(fit_gbt(data, &config)?))
        }
        "model" => Ok(Teacher::Gbt(GbtModel::load(rest)?)),
        "table" => Ok(Teacher::Table(TableTeacher::load_csv(rest, grid.clone())?)),
        "oracle" => {
            let (id, spec_seed) = match rest.split_once(':') {
                Some((id, s)) => (
                    id,
                    s.parse::<u64>()
                        .map_err(|_| Error::Config(format!("bad seed `{s}`")))?,
                ),
                None => (rest, seed),
            };
            let id: u32 = id
                .parse()
                .map_err(|_| Error::Config(format!("bad spec id `{id}`")))?;
            Ok(Teacher::Oracle(OracleTeacher::new(SyntheticSpec::new(
                id, spec_seed,
            )?)))
        }
        other => Err(Error::Config(format!(
            "unknown teacher source `{other}` (expected gbt, model, table or oracle)"
        ))),
    }
}

fn fit_config(a: &FitArgs) -> Result<FitConfig> {
    let mut config = match (a.depth, a.minsplit) {
        (Some(k), _) => FitConfig::depth(k),
        (None, Some(m)) => FitConfig::minsplit(m),
        (None, None) => FitConfig::depth(3),
    };
    if let Some(l) = a.min_leaf {
        config.min_leaf = l;
    }
    config.validate()?;
    Ok(config)
}

pub fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let data = Dataset::load_csv(&a.data)?;
    let grid = parse_grid(&a.grid, data.prices())?;
    let config = fit_config(a)?;
    let assign = TreatmentAssignment::snap(data.prices(), &grid);
    let names = data.feature_names().to_vec();
    let n = data.n_rows() as f64;

    if a.method == Method::Ct {
        let policy = fit_ct_one_vs_all(&data, &grid, &assign, &config, a.seed)?;
        policy.save_json(&a.out)?;
        write_provenance(&a.out, "fit", a)?;
        let leaves: usize = policy.trees.iter().map(|t| t.structure.n_leaves()).sum();
        return say(
            out,
            format_args!(
                "method = ct, trees = {}, total leaves = {leaves}",
                policy.trees.len()
            ),
        );
    }
    let needs_teacher = matches!(a.method, Method::Spt | Method::Naive | Method::Const);
    let (tree, teacher) = if needs_teacher {
        let teacher = parse_teacher(&a.teacher, &data, &grid, a.seed)?;
        let tree = match a.method {
            Method::Spt => fit_spt(
                data.features(),
                &revenue_matrix(&teacher, data.features(), &grid)?,
                &config,
            )?,
            Method::Naive => fit_naive_distill(&teacher, data.features(), &grid, &config)?,
            _ => constant_price_policy(
                &revenue_matrix(&teacher, data.features(), &grid)?,
                data.n_features(),
            )?,
        };
        (tree, Some(teacher))
    } else {
        (fit_pt(&data, &grid, &assign, &config)?, None)
    };
    let tree = tree.with_feature_names(names)?;
    tree.save_json(&a.out)?;
    write_provenance(&a.out, "fit", a)?;
    if let (Some(path), Some(Teacher::Gbt(model))) = (&a.save_teacher, &teacher) {
        model.save(path)?;
    }
    let training = match &teacher {
        Some(t) => format!("{:.6}", expected_revenue(&tree, data.features(), t)?),
        None => format!("{:.6}", tree.total_revenue() / n),
    };
    say(
        out,
        format_args!(
            "method = {:?}, leaves = {}, depth = {}, training revenue per item = {training}",
            a.method,
            tree.n_leaves(),
            tree.depth()
        ),
    )
}

/// A saved single tree or one-vs-all policy.
pub enum SavedPolicy {
    Tree(PolicyTree),
    OneVsAll(OneVsAllPolicy),
}

impl SavedPolicy {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("trees").is_some() {
            Ok(Self::OneVsAll(OneVsAllPolicy::from_json(&text)?))
        } else {
            Ok(Self::Tree(PolicyTree::from_json(&text)?))
        }
    }

    pub fn grid(&self) -> &PriceGrid {
        match self {
            Self::Tree(t) => t.grid(),
            Self::OneVsAll(p) => &p.grid,
        }
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let policy = SavedPolicy::load(&a.tree)?;
    let data = Dataset::load_csv(&a.data)?;
    let truth = parse_teacher(&a.truth, &data, policy.grid(), a.seed)?;
    let revenue = match &policy {
        SavedPolicy::Tree(t) => expected_revenue(t, data.features(), &truth)?,
        SavedPolicy::OneVsAll(p) => expected_revenue(p, data.features(), &truth)?,
    };
    if let Some(path) = &a.out {
        let doc = serde_json::json!({ "expected_revenue": revenue, "rows": data.n_rows() });
        std::fs::write(path, serde_json::to_string_pretty(&doc)?)
            .map_err(|e| Error::io(path, e))?;
        write_provenance(path, "evaluate", a)?;
    }
    say(out, format_args!("{revenue:?}"))
}

pub fn cmd_experiment(a: &ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    if a.list {
        for (name, _) in BUNDLED_PLANS {
            say(out, format_args!("{name}"))?;
        }
        return Ok(());
    }
    let name = a
        .plan
        .as_deref()
        .ok_or_else(|| Error::Config("--plan is required".into()))?;
    let plan = Plan::resolve(name)?;
    let output = run_experiment(&plan)?;
    output.write(&a.out)?;
    say(
        out,
        format_args!(
            "{} result rows written to {}",
            output.results.len(),
            a.out.join("results.csv").display()
        ),
    )
}

pub fn cmd_export(a: &ExportArgs, out: &mut dyn Write) -> Result<()> {
    let tree = PolicyTree::load_json(&a.tree)?;
    let text = match a.format {
        Format::Json => tree.to_json()?,
        Format::Dot => tree.to_dot(),
    };
    match &a.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flags() {
        let observed: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(parse_grid("percentile", &observed).unwrap().len(), 9);
        assert_eq!(
            parse_grid("explicit:2,1", &observed).unwrap().prices(),
            &[1.0, 2.0]
        );
        assert_eq!(
            parse_grid("linspace:1,2,3", &observed).unwrap().prices(),
            &[1.0, 1.5, 2.0]
        );
        assert!(parse_grid("linspace:1,2", &observed).is_err());
        assert!(parse_grid("magic", &observed).is_err());
    }

    #[test]
    fn teacher_sources() {
        let data = SyntheticSpec::new(1, 0).unwrap().generate(200, 1).unwrap();
        let grid = PriceGrid::percentile(data.prices()).unwrap();
        assert!(matches!(
            parse_teacher("oracle:1", &data, &grid, 0).unwrap(),
            Teacher::Oracle(_)
        ));
        assert!(matches!(
            parse_teacher("gbt:rounds=3", &data, &grid, 0).unwrap(),
            Teacher::Gbt(_)
        ));
        assert!(parse_teacher("oracle:9", &data, &grid, 0).is_err());
        assert!(parse_teacher("forest", &data, &grid, 0).is_err());
        assert!(parse_teacher("gbt:depth=3", &data, &grid, 0).is_err());
    }
}
