//! Replicated experiment sweeps over synthetic worlds.
//!
//! A plan is a TOML document:
//!
//! ```toml
//! name = "table1_small"
//! specs = [1, 2, 3, 4, 5, 6]    # synthetic world ids
//! n_train = [2000]              # training sizes
//! depths = [3]                  # depth-limited fits
//! minsplits = []                # minsplit-limited fits (unbounded depth)
//! reps = 3
//! seed = 2024
//! n_test = 5000                 # fresh draws scored under oracle truth
//! truth = "oracle"              # or "evaluator"
//! teacher = "gbt"               # or "oracle"
//! policies = ["spt", "pt", "ct", "naive", "const", "lgbm", "optimal", "optimal_fine", "no_change"]
//!
//! [teacher_config]              # optional; boosting options
//! rounds = 50
//! ```
//!
//! With `truth = "oracle"` policies are scored with the world's true demand on
//! `n_test` fresh draws. With `truth = "evaluator"` the generated data is
//! halved: the first half trains the teacher and policies, a boosted model fit
//! on the second half scores them on the second half's rows.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    constant_price_policy, fit_ct_one_vs_all, fit_naive_distill, fit_pt, historical_policy_revenue,
    TreatmentAssignment,
};
use crate::dataset::{Dataset, Features, PriceGrid};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::spt::fit_spt;
use crate::synth::{fine_grid, SyntheticSpec};
use crate::teacher::{fit_gbt, revenue_matrix, DemandModel, GbtConfig, OracleTeacher, Teacher};
use crate::tree::{FitConfig, PolicyTree};

use super::{expected_revenue, ModelArgmaxPolicy, OracleOptimalPolicy};

pub const BUNDLED_PLANS: &[(&str, &str)] = &[
    (
        "table1_small",
        include_str!("../../plans/table1_small.toml"),
    ),
    ("table1", include_str!("../../plans/table1.toml")),
    ("table2", include_str!("../../plans/table2.toml")),
];

pub fn bundled_plan(name: &str) -> Option<&'static str> {
    BUNDLED_PLANS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    #[default]
    Oracle,
    Evaluator,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    #[default]
    Gbt,
    Oracle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Spt,
    Pt,
    Ct,
    Naive,
    Const,
    /// Full personalization by the teacher.
    Lgbm,
    /// Pointwise optimum over the price grid.
    Optimal,
    /// Pointwise optimum over 1000 prices spanning the observed range.
    OptimalFine,
    /// Observed prices.
    NoChange,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Spt => "spt",
            Self::Pt => "pt",
            Self::Ct => "ct",
            Self::Naive => "naive",
            Self::Const => "const",
            Self::Lgbm => "lgbm",
            Self::Optimal => "optimal",
            Self::OptimalFine => "optimal_fine",
            Self::NoChange => "no_change",
        }
    }

    /// Whether the policy is refit for every depth or minsplit setting.
    pub fn uses_setting(self) -> bool {
        matches!(self, Self::Spt | Self::Pt | Self::Ct | Self::Naive)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    #[serde(default)]
    pub name: String,
    pub specs: Vec<u32>,
    pub n_train: Vec<usize>,
    #[serde(default)]
    pub depths: Vec<usize>,
    #[serde(default)]
    pub minsplits: Vec<usize>,
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub truth: TruthKind,
    #[serde(default)]
    pub teacher: TeacherKind,
    #[serde(default)]
    pub teacher_config: GbtConfig,
    pub policies: Vec<PolicyKind>,
}

fn default_n_test() -> usize {
    5000
}

/// Tree-size control for one fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Setting {
    Depth(usize),
    Minsplit(usize),
}

impl Setting {
    pub fn fit_config(self) -> FitConfig {
        match self {
            Self::Depth(k) => FitConfig::depth(k),
            Self::Minsplit(m) => FitConfig::minsplit(m),
        }
    }

    fn columns(setting: Option<Self>) -> (Option<usize>, Option<usize>) {
        match setting {
            Some(Self::Depth(k)) => (Some(k), None),
            Some(Self::Minsplit(m)) => (None, Some(m)),
            None => (None, None),
        }
    }
}

impl Plan {
    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: Self = toml::from_str(text).map_err(|e| Error::Plan(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// A bundled plan name, or else a path to a plan file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match bundled_plan(name_or_path) {
            Some(text) if !Path::new(name_or_path).exists() => Self::from_toml(text),
            _ => Self::load(name_or_path),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Plan(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Plan(m));
        if self.specs.is_empty() {
            return bad("specs must not be empty".into());
        }
        if let Some(&id) = self.specs.iter().find(|&&id| !(1..=6).contains(&id)) {
            return bad(format!("unknown spec id {id}"));
        }
        if self.n_train.is_empty() {
            return bad("n_train must not be empty".into());
        }
        if let Some(&n) = self.n_train.iter().find(|&&n| n < 20) {
            return bad(format!("n_train {n} is too small (minimum 20)"));
        }
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.policies.is_empty() {
            return bad("policies must not be empty".into());
        }
        if self.truth == TruthKind::Oracle && self.n_test == 0 {
            return bad("n_test must be positive".into());
        }
        if self.policies.iter().any(|p| p.uses_setting()) && self.settings().is_empty() {
            return bad("tree policies need at least one entry in depths or minsplits".into());
        }
        if self.truth == TruthKind::Evaluator && self.policies.contains(&PolicyKind::OptimalFine) {
            return bad("optimal_fine needs oracle truth".into());
        }
        for &m in &self.minsplits {
            Setting::Minsplit(m)
                .fit_config()
                .validate()
                .map_err(|e| Error::Plan(e.to_string()))?;
        }
        self.teacher_config
            .validate()
            .map_err(|e| Error::Plan(e.to_string()))
    }

    pub fn settings(&self) -> Vec<Setting> {
        self.depths
            .iter()
            .map(|&k| Setting::Depth(k))
            .chain(self.minsplits.iter().map(|&m| Setting::Minsplit(m)))
            .collect()
    }

    /// Seed shared by everything in one replication.
    pub fn rep_seed(&self, spec: u32, n_train: usize, rep: usize) -> u64 {
        derive_seed(self.seed, &[u64::from(spec), n_train as u64, rep as u64])
    }
}

/// One fitted-and-scored policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub spec: u32,
    pub policy: String,
    pub depth: Option<usize>,
    pub minsplit: Option<usize>,
    pub n_train: usize,
    pub seed: u64,
    pub mean_revenue: f64,
    pub n_leaves: Option<usize>,
}

impl ResultRow {
    fn key(&self) -> (u32, &str, Option<usize>, Option<usize>, usize, u64) {
        (
            self.spec,
            &self.policy,
            self.depth,
            self.minsplit,
            self.n_train,
            self.seed,
        )
    }
}

/// Replication summary for one (spec, policy, n_train) and either one
/// setting or all settings pooled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub spec: u32,
    pub policy: String,
    pub scope: String,
    pub depth: Option<usize>,
    pub minsplit: Option<usize>,
    pub n_train: usize,
    pub reps: usize,
    pub mean_revenue: f64,
    pub std_error: f64,
    pub min_revenue: f64,
    pub max_revenue: f64,
    pub mean_leaves: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub plan: Plan,
    pub results: Vec<ResultRow>,
    pub reports: Vec<EvaluationReport>,
}

impl ExperimentOutput {
    /// Per-setting report of one policy, if present.
    pub fn report(
        &self,
        spec: u32,
        policy: PolicyKind,
        setting: Option<Setting>,
        n_train: usize,
    ) -> Option<&EvaluationReport> {
        let (depth, minsplit) = Setting::columns(setting);
        let scope = if policy.uses_setting() {
            "setting"
        } else {
            "pooled"
        };
        self.reports.iter().find(|r| {
            r.spec == spec
                && r.policy == policy.name()
                && r.scope == scope
                && r.depth == depth
                && r.minsplit == minsplit
                && r.n_train == n_train
        })
    }

    /// Report pooled over every setting for one policy.
    pub fn pooled(
        &self,
        spec: u32,
        policy: PolicyKind,
        n_train: usize,
    ) -> Option<&EvaluationReport> {
        self.reports.iter().find(|r| {
            r.spec == spec
                && r.policy == policy.name()
                && r.scope == "pooled"
                && r.n_train == n_train
        })
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_results_csv(&self.results, dir.join("results.csv"))?;
        write_reports_csv(&self.reports, dir.join("summary.csv"))?;
        let plan_path = dir.join("plan.toml");
        std::fs::write(&plan_path, self.plan.to_toml()?).map_err(|e| Error::io(&plan_path, e))
    }
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Header `spec,policy,depth,minsplit,n_train,seed,mean_revenue,n_leaves`;
/// settings that do not apply are left blank.
pub fn write_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, path.as_ref())
}

pub fn write_reports_csv(reports: &[EvaluationReport], path: impl AsRef<Path>) -> Result<()> {
    write_csv(reports, path.as_ref())
}

struct Cell {
    spec: u32,
    n_train: usize,
    rep: usize,
}

/// Fits and scores every requested policy for every cell of the plan.
/// Cells run in parallel; output order is fixed by sorting on the row key.
pub fn run_experiment(plan: &Plan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let cells: Vec<Cell> = plan
        .specs
        .iter()
        .flat_map(|&spec| {
            plan.n_train.iter().flat_map(move |&n_train| {
                (0..plan.reps).map(move |rep| Cell { spec, n_train, rep })
            })
        })
        .collect();
    let mut results: Vec<ResultRow> = cells
        .par_iter()
        .map(|cell| run_cell(plan, cell))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    results.sort_by(|a, b| a.key().cmp(&b.key()));
    let reports = summarize(&results);
    Ok(ExperimentOutput {
        plan: plan.clone(),
        results,
        reports,
    })
}

fn run_cell(plan: &Plan, cell: &Cell) -> Result<Vec<ResultRow>> {
    let seed = plan.rep_seed(cell.spec, cell.n_train, cell.rep);
    let stream = |k: u64| derive_seed(seed, &[k]);
    let spec = SyntheticSpec::new(cell.spec, seed)?;
    let data = spec.generate(cell.n_train, stream(1))?;

    let oracle = Teacher::Oracle(OracleTeacher::new(spec.clone()));
    let (train, test, truth): (Dataset, Dataset, Teacher) = match plan.truth {
        TruthKind::Oracle => {
            let test = spec.generate(plan.n_test, stream(2))?;
            (data, test, oracle)
        }
        TruthKind::Evaluator => {
            let (train, held) = data.split_halves(stream(2))?;
            let cfg = GbtConfig {
                seed: stream(5),
                ..plan.teacher_config.clone()
            };
            let evaluator = Teacher::Gbt(fit_gbt(&held, &cfg)?);
            (train, held, evaluator)
        }
    };
    let teacher = match plan.teacher {
        TeacherKind::Gbt => {
            let cfg = GbtConfig {
                seed: stream(3),
                ..plan.teacher_config.clone()
            };
            Teacher::Gbt(fit_gbt(&train, &cfg)?)
        }
        TeacherKind::Oracle => Teacher::Oracle(OracleTeacher::new(spec.clone())),
    };
    let grid = PriceGrid::percentile(train.prices())?;
    let revmat = revenue_matrix(&teacher, train.features(), &grid)?;
    let assign = TreatmentAssignment::snap(train.prices(), &grid);
    let test_x = test.features();

    let mut rows = Vec::new();
    let mut push =
        |policy: PolicyKind, setting: Option<Setting>, revenue: f64, leaves: Option<usize>| {
            let (depth, minsplit) = Setting::columns(setting);
            rows.push(ResultRow {
                spec: cell.spec,
                policy: policy.name().to_string(),
                depth,
                minsplit,
                n_train: cell.n_train,
                seed,
                mean_revenue: revenue,
                n_leaves: leaves,
            });
        };
    let score_tree = |t: &PolicyTree| -> Result<(f64, Option<usize>)> {
        Ok((expected_revenue(t, test_x, &truth)?, Some(t.n_leaves())))
    };

    for setting in plan.settings() {
        let config = setting.fit_config();
        for &policy in plan.policies.iter().filter(|p| p.uses_setting()) {
            let (revenue, leaves) = match policy {
                PolicyKind::Spt => score_tree(&fit_spt(train.features(), &revmat, &config)?)?,
                PolicyKind::Pt => score_tree(&fit_pt(&train, &grid, &assign, &config)?)?,
                PolicyKind::Naive => score_tree(&fit_naive_distill(
                    &teacher,
                    train.features(),
                    &grid,
                    &config,
                )?)?,
                PolicyKind::Ct => {
                    let p = fit_ct_one_vs_all(&train, &grid, &assign, &config, stream(4))?;
                    (expected_revenue(&p, test_x, &truth)?, None)
                }
                _ => unreachable!("filtered to setting-dependent policies"),
            };
            push(policy, Some(setting), revenue, leaves);
        }
    }
    for &policy in plan.policies.iter().filter(|p| !p.uses_setting()) {
        let (revenue, leaves) = match policy {
            PolicyKind::Const => score_tree(&constant_price_policy(&revmat, train.n_features())?)?,
            PolicyKind::Lgbm => (
                expected_revenue(
                    &ModelArgmaxPolicy {
                        model: &teacher,
                        grid: &grid,
                    },
                    test_x,
                    &truth,
                )?,
                None,
            ),
            PolicyKind::Optimal => (
                optimal_revenue(&spec, plan.truth, &grid, test_x, &truth)?,
                None,
            ),
            PolicyKind::OptimalFine => {
                let fine = fine_grid(train.prices())?;
                (
                    optimal_revenue(&spec, plan.truth, &fine, test_x, &truth)?,
                    None,
                )
            }
            PolicyKind::NoChange => (historical_policy_revenue(&test, &truth)?, None),
            _ => unreachable!("filtered to setting-free policies"),
        };
        push(policy, None, revenue, leaves);
    }
    Ok(rows)
}

fn optimal_revenue(
    spec: &SyntheticSpec,
    truth_kind: TruthKind,
    grid: &PriceGrid,
    test_x: &Features,
    truth: &(impl DemandModel + ?Sized),
) -> Result<f64> {
    match truth_kind {
        TruthKind::Oracle => expected_revenue(&OracleOptimalPolicy { spec, grid }, test_x, truth),
        TruthKind::Evaluator => {
            expected_revenue(&ModelArgmaxPolicy { model: truth, grid }, test_x, truth)
        }
    }
}

fn aggregate(
    first: &ResultRow,
    scope: &str,
    members: &[&ResultRow],
    per_setting: bool,
) -> EvaluationReport {
    let values: Vec<f64> = members.iter().map(|r| r.mean_revenue).collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_error = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let leaves: Option<Vec<f64>> = members
        .iter()
        .map(|r| r.n_leaves.map(|l| l as f64))
        .collect();
    EvaluationReport {
        spec: first.spec,
        policy: first.policy.clone(),
        scope: scope.to_string(),
        depth: if per_setting { first.depth } else { None },
        minsplit: if per_setting { first.minsplit } else { None },
        n_train: first.n_train,
        reps: values.len(),
        mean_revenue: mean,
        std_error,
        min_revenue: values.iter().copied().fold(f64::INFINITY, f64::min),
        max_revenue: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_leaves: leaves.map(|l| l.iter().sum::<f64>() / l.len() as f64),
    }
}

fn summarize(results: &[ResultRow]) -> Vec<EvaluationReport> {
    type Key<'a> = (u32, &'a str, usize);
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.spec, &r.policy, r.n_train))
            .or_default()
            .push(r);
    }
    let mut reports = Vec::new();
    for members in groups.values() {
        let mut by_setting: BTreeMap<(Option<usize>, Option<usize>), Vec<&ResultRow>> =
            BTreeMap::new();
        for r in members {
            by_setting.entry((r.depth, r.minsplit)).or_default().push(r);
        }
        let has_settings = by_setting.keys().any(|(d, m)| d.is_some() || m.is_some());
        if has_settings {
            for rows in by_setting.values() {
                reports.push(aggregate(rows[0], "setting", rows, true));
            }
        }
        reports.push(aggregate(members[0], "pooled", members, false));
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan() -> Plan {
        Plan::from_toml(
            r#"
            specs = [4]
            n_train = [400]
            depths = [1, 2]
            reps = 2
            seed = 11
            n_test = 500
            teacher = "oracle"
            policies = ["spt", "optimal", "const", "no_change"]
            "#,
        )
        .unwrap()
    }

    #[test]
    fn bundled_plans_parse() {
        for (name, text) in BUNDLED_PLANS {
            let plan = Plan::from_toml(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&plan.name, name);
        }
        assert!(bundled_plan("nope").is_none());
    }

    #[test]
    fn plan_validation() {
        let base = small_plan();
        let mut p = base.clone();
        p.specs = vec![9];
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.depths.clear();
        assert!(p.validate().is_err());
        let mut p = base.clone();
        p.reps = 0;
        assert!(p.validate().is_err());
        assert!(
            Plan::from_toml("specs = [1]\nn_train = [100]\nreps = 1\npolicies = [\"magic\"]")
                .is_err()
        );
        assert!(Plan::from_toml(
            "specs = [1]\nn_train = [100]\nreps = 1\npolicies = [\"optimal\"]\nbogus = 3"
        )
        .is_err());
        let round = Plan::from_toml(&base.to_toml().unwrap()).unwrap();
        assert_eq!(round, base);
    }

    #[test]
    fn results_are_deterministic_and_dominated() {
        let plan = small_plan();
        let a = run_experiment(&plan).unwrap();
        let b = run_experiment(&plan).unwrap();
        assert_eq!(a.results, b.results);
        // 2 reps x (2 depths x spt + 3 setting-free policies)
        assert_eq!(a.results.len(), 2 * (2 + 3));
        for r in a.results.iter().filter(|r| r.policy == "spt") {
            let best = a
                .results
                .iter()
                .find(|o| o.policy == "optimal" && o.seed == r.seed)
                .unwrap();
            assert!(r.mean_revenue <= best.mean_revenue);
            assert!(r.n_leaves.unwrap() <= 1 << r.depth.unwrap());
        }
        let rep = a
            .report(4, PolicyKind::Spt, Some(Setting::Depth(2)), 400)
            .unwrap();
        assert_eq!(rep.reps, 2);
        assert!(rep.std_error >= 0.0);
        assert!(rep.min_revenue <= rep.mean_revenue && rep.mean_revenue <= rep.max_revenue);
        assert_eq!(a.pooled(4, PolicyKind::Spt, 400).unwrap().reps, 4);
        assert_eq!(a.pooled(4, PolicyKind::Optimal, 400).unwrap().reps, 2);
    }

    #[test]
    fn csv_schema() {
        let out = run_experiment(&small_plan()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "spec,policy,depth,minsplit,n_train,seed,mean_revenue,n_leaves"
        );
        let optimal = text.lines().find(|l| l.contains(",optimal,")).unwrap();
        assert!(optimal.starts_with("4,optimal,,,400,"), "{optimal}");
        assert!(dir.path().join("summary.csv").exists());
        assert!(Plan::load(dir.path().join("plan.toml")).is_ok());
    }

    #[test]
    fn evaluator_truth_runs() {
        let plan = Plan::from_toml(
            r#"
            specs = [1]
            n_train = [600]
            depths = [2]
            reps = 1
            truth = "evaluator"
            policies = ["spt", "pt", "ct", "naive", "lgbm", "optimal"]
            [teacher_config]
            rounds = 10
            "#,
        )
        .unwrap();
        let out = run_experiment(&plan).unwrap();
        assert_eq!(out.results.len(), 6);
        assert!(out
            .results
            .iter()
            .all(|r| r.mean_revenue.is_finite() && r.mean_revenue >= 0.0));
    }
}
