use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sptlab::dataset::PriceGrid;
use sptlab::spt::{Node, PolicyTree};

fn sptlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sptlab"))
        .args(args)
        .output()
        .expect("spawn sptlab")
}

fn ok(args: &[&str]) -> String {
    let out = sptlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, spec: u32, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("w{spec}_{n}_{seed}.csv"));
    ok(&[
        "synth",
        "--spec",
        &spec.to_string(),
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&path),
    ]);
    path
}

fn split_counts(tree: &PolicyTree) -> Vec<usize> {
    tree.nodes()
        .iter()
        .filter_map(|n| match n {
            Node::Split { left, right, .. } => Some(count(tree, *left) + count(tree, *right)),
            Node::Leaf { .. } => None,
        })
        .collect()
}

fn count(tree: &PolicyTree, id: usize) -> usize {
    match &tree.nodes()[id] {
        Node::Leaf { n_train, .. } => *n_train,
        Node::Split { left, right, .. } => count(tree, *left) + count(tree, *right),
    }
}

#[test]
fn synth_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), 3, 500, 11);
    let first = std::fs::read(&a).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().count(), 501);
    assert!(text.lines().next().unwrap().ends_with("price,sold"));
    assert!(Path::new(&format!("{}.run.json", a.display())).exists());
    synth(dir.path(), 3, 500, 11);
    assert_eq!(std::fs::read(&a).unwrap(), first);

    let bad = sptlab(&[
        "synth",
        "--spec",
        "9",
        "--n",
        "10",
        "--out",
        s(&dir.path().join("x.csv")),
    ]);
    assert!(!bad.status.success());
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn fit_respects_depth_and_minsplit() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4, 5000, 5);
    let deep = dir.path().join("d3.json");
    let msg = ok(&[
        "fit",
        "--data",
        s(&data),
        "--method",
        "spt",
        "--depth",
        "3",
        "--out",
        s(&deep),
    ]);
    assert!(msg.contains("leaves"));
    let tree = PolicyTree::load_json(&deep).unwrap();
    assert!(tree.n_leaves() <= 8 && tree.depth() <= 3);

    let wide = dir.path().join("m1500.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--teacher",
        "oracle:4:5",
        "--minsplit",
        "1500",
        "--out",
        s(&wide),
    ]);
    let tree = PolicyTree::load_json(&wide).unwrap();
    assert!(split_counts(&tree).iter().all(|&c| c >= 1500));

    let both = sptlab(&[
        "fit",
        "--data",
        s(&data),
        "--depth",
        "2",
        "--minsplit",
        "10",
        "--out",
        s(&wide),
    ]);
    assert!(!both.status.success());
}

#[test]
fn fit_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 1, 800, 2);
    for method in ["spt", "pt", "naive", "const"] {
        let out = dir.path().join(format!("{method}.json"));
        ok(&[
            "fit",
            "--data",
            s(&data),
            "--teacher",
            "oracle:1:2",
            "--method",
            method,
            "--out",
            s(&out),
        ]);
        PolicyTree::load_json(&out).unwrap();
    }
    let ct = dir.path().join("ct.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--method",
        "ct",
        "--depth",
        "2",
        "--out",
        s(&ct),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&ct).unwrap()).unwrap();
    assert_eq!(doc["trees"].as_array().unwrap().len(), 9);
    let score = ok(&[
        "evaluate",
        "--tree",
        s(&ct),
        "--data",
        s(&data),
        "--truth",
        "oracle:1:2",
    ]);
    assert!(score.trim().parse::<f64>().unwrap() > 0.0);

    let teacher = dir.path().join("gbt.txt");
    let tree = dir.path().join("g.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--teacher",
        "gbt:rounds=20",
        "--out",
        s(&tree),
        "--save-teacher",
        s(&teacher),
    ]);
    let reused = dir.path().join("g2.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--teacher",
        &format!("model:{}", s(&teacher)),
        "--out",
        s(&reused),
    ]);
    assert_eq!(
        std::fs::read(&tree).unwrap(),
        std::fs::read(&reused).unwrap()
    );
}

#[test]
fn evaluate_against_tables() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy.csv");
    std::fs::write(&data, "x,price,sold\n0,10,1\n1,10,0\n").unwrap();

    let grid = PriceGrid::explicit(vec![10.0]).unwrap();
    let tree = PolicyTree::constant(10.0, 0.0, 2, grid, 1).unwrap();
    let tree_path = dir.path().join("c10.json");
    tree.save_json(&tree_path).unwrap();
    let table = dir.path().join("ones.csv");
    std::fs::write(&table, "1\n1\n").unwrap();
    let out = ok(&[
        "evaluate",
        "--tree",
        s(&tree_path),
        "--data",
        s(&data),
        "--truth",
        &format!("table:{}", s(&table)),
    ]);
    assert_eq!(out.trim(), "10.0");

    let grid = PriceGrid::explicit(vec![4.0]).unwrap();
    PolicyTree::constant(4.0, 0.0, 2, grid, 1)
        .unwrap()
        .save_json(&tree_path)
        .unwrap();
    std::fs::write(&table, "0.5\n0.5\n").unwrap();
    let json = dir.path().join("score.json");
    let out = ok(&[
        "evaluate",
        "--tree",
        s(&tree_path),
        "--data",
        s(&data),
        "--truth",
        &format!("table:{}", s(&table)),
        "--out",
        s(&json),
    ]);
    assert_eq!(out.trim(), "2.0");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc["expected_revenue"], 2.0);

    let missing = sptlab(&[
        "evaluate",
        "--tree",
        "/nonexistent.json",
        "--data",
        s(&data),
        "--truth",
        "oracle:1",
    ]);
    assert!(!missing.status.success());
    assert!(!missing.stderr.is_empty());
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let mut out = vec![header];
    out.extend(
        rdr.records()
            .map(|r| r.unwrap().iter().map(String::from).collect()),
    );
    out
}

#[test]
fn bundled_experiment_schema() {
    let dir = tempfile::tempdir().unwrap();
    let listed = ok(&["experiment", "--list"]);
    assert!(listed.lines().any(|l| l == "table1_small"));

    let out = dir.path().join("small");
    ok(&["experiment", "--plan", "table1_small", "--out", s(&out)]);
    let table = rows(&out.join("results.csv"));
    assert_eq!(
        table[0],
        [
            "spec",
            "policy",
            "depth",
            "minsplit",
            "n_train",
            "seed",
            "mean_revenue",
            "n_leaves"
        ]
    );
    let keys: HashSet<(String, String, String)> = table[1..]
        .iter()
        .map(|r| (r[0].clone(), r[1].clone(), r[5].clone()))
        .collect();
    assert_eq!(keys.len(), table.len() - 1);
    assert_eq!(keys.len(), 6 * 9 * 3);
    assert!(out.join("summary.csv").exists());
    assert!(out.join("plan.toml").exists());

    let again = dir.path().join("again");
    ok(&["experiment", "--plan", "table1_small", "--out", s(&again)]);
    assert_eq!(
        std::fs::read(out.join("results.csv")).unwrap(),
        std::fs::read(again.join("results.csv")).unwrap()
    );
}

#[test]
fn custom_depth_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("sweep.toml");
    std::fs::write(
        &plan,
        "name = \"sweep\"\nspecs = [4]\nn_train = [600]\ndepths = [1, 2, 3, 4, 5]\nreps = 1\nseed = 3\n\
         n_test = 500\ntruth = \"oracle\"\nteacher = \"oracle\"\npolicies = [\"spt\"]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&["experiment", "--plan", s(&plan), "--out", s(&out)]);
    let table = rows(&out.join("results.csv"));
    let depths: HashSet<&str> = table[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(depths.len(), 5);

    std::fs::write(&plan, "name = \"bad\"\nspecs = [4]\nsurprise = 1\n").unwrap();
    assert!(
        !sptlab(&["experiment", "--plan", s(&plan), "--out", s(&out)])
            .status
            .success()
    );
}

#[test]
fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 4, 3000, 8);
    let tree = dir.path().join("t.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--teacher",
        "oracle:4:8",
        "--depth",
        "3",
        "--out",
        s(&tree),
    ]);
    let fitted = PolicyTree::load_json(&tree).unwrap();

    let dot = ok(&["export", "--tree", s(&tree), "--format", "dot"]);
    assert!(dot.starts_with("digraph"));
    let nodes = dot
        .lines()
        .filter(|l| l.contains("label=") && !l.contains("->") && l.trim_start().starts_with('n'))
        .count();
    assert_eq!(nodes, fitted.nodes().len());
    assert_eq!(fitted.nodes().len(), 2 * fitted.n_leaves() - 1);

    let json = dir.path().join("copy.json");
    ok(&[
        "export",
        "--tree",
        s(&tree),
        "--format",
        "json",
        "--out",
        s(&json),
    ]);
    assert_eq!(PolicyTree::load_json(&json).unwrap(), fitted);

    assert!(!sptlab(&["export", "--tree", s(&tree), "--format", "svg"])
        .status
        .success());
}
