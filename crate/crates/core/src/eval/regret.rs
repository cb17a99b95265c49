//! Worst-case regret of depth-limited tree policies against the pointwise
//! optimum, and a constructive check of the bound on `[0,1]^d`.

use serde::{Deserialize, Serialize};

use crate::dataset::{default_feature_names, Features, PriceGrid};
use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::spt::leaf_revenue;
use crate::synth::{standard_normal_cdf, FINE_GRID_POINTS};
use crate::teacher::{revenue_matrix, DemandModel, FnModel};
use crate::tree::{Node, PolicyTree};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretBoundParams {
    /// Lipschitz constant of `p * f(x, p)` in `x` (Euclidean norm).
    pub lipschitz: f64,
    pub dim: usize,
    pub depth: usize,
    /// Uniform bound on the demand model's error.
    pub teacher_error: f64,
}

impl RegretBoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lipschitz >= 0.0 && self.lipschitz.is_finite()) {
            return Err(Error::Config(format!(
                "lipschitz constant {} must be finite and >= 0",
                self.lipschitz
            )));
        }
        if !(self.teacher_error >= 0.0 && self.teacher_error.is_finite()) {
            return Err(Error::Config(format!(
                "teacher error {} must be finite and >= 0",
                self.teacher_error
            )));
        }
        if self.dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        Ok(())
    }
}

/// `2^(1 - depth/dim) * L * sqrt(dim) + 2 * teacher_error`.
pub fn regret_bound(params: &RegretBoundParams) -> Result<f64> {
    params.validate()?;
    let d = params.dim as f64;
    Ok(
        (1.0 - params.depth as f64 / d).exp2() * params.lipschitz * d.sqrt()
            + 2.0 * params.teacher_error,
    )
}

/// Cells per axis of the largest regular grid a depth-`depth` tree can carve
/// out of `[0,1]^dim` with halving splits.
pub fn hypercube_cells_per_axis(depth: usize, dim: usize) -> usize {
    1usize << (depth / dim.max(1))
}

/// `f(x, p) = Phi(x0 - p)` on `[0,1]^2`.
pub fn designed_truth() -> FnModel<impl Fn(&[f64], f64) -> f64 + Send + Sync> {
    FnModel::new(Some(2), |x: &[f64], p: f64| standard_normal_cdf(x[0] - p))
}

/// Tree of equal-width cells over `[0,1]^dim`, each priced by the grid price
/// with the largest summed model revenue over the probe rows in the cell.
pub fn hypercube_policy(
    model: &(impl DemandModel + ?Sized),
    grid: &PriceGrid,
    depth: usize,
    dim: usize,
    probes: &Features,
) -> Result<PolicyTree> {
    if dim == 0 {
        return Err(Error::Config("dimension must be at least 1".into()));
    }
    if probes.n_cols() != dim {
        return Err(Error::Dimension {
            expected: dim,
            got: probes.n_cols(),
        });
    }
    if let Some(v) = probes.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidData(format!(
            "probe value {v} is outside [0, 1]"
        )));
    }
    let m = hypercube_cells_per_axis(depth, dim);
    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    carve(&mut nodes, &mut leaves, grid.price(0), 0, 0, m, m, dim);
    let names = default_feature_names(dim);
    let skeleton = PolicyTree::new(nodes, 0, names.clone(), grid.clone())?;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); skeleton.nodes().len()];
    for (i, x) in probes.rows().enumerate() {
        members[skeleton.leaf_for(x)?].push(i);
    }
    let revmat = revenue_matrix(model, probes, grid)?;
    let mut nodes = skeleton.nodes().to_vec();
    for (cell, &id) in leaves.iter().enumerate() {
        let rows = &members[id];
        if rows.is_empty() {
            return Err(Error::EmptyCell { cell });
        }
        let (k, revenue_sum) = leaf_revenue(&revmat, rows)?;
        nodes[id] = Node::Leaf {
            price: grid.price(k),
            revenue_sum,
            n_train: rows.len(),
        };
    }
    PolicyTree::new(nodes, 0, names, grid.clone())
}

/// Splits cell indices `[lo, hi)` along `axis` at `mid / m`, moving to the
/// next axis once a single cell remains.
#[allow(clippy::too_many_arguments)]
fn carve(
    nodes: &mut Vec<Node>,
    leaves: &mut Vec<usize>,
    placeholder: f64,
    axis: usize,
    lo: usize,
    hi: usize,
    m: usize,
    dim: usize,
) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf {
        price: placeholder,
        revenue_sum: 0.0,
        n_train: 0,
    });
    if hi - lo == 1 {
        if axis + 1 == dim {
            leaves.push(id);
            return id;
        }
        nodes.pop();
        return carve(nodes, leaves, placeholder, axis + 1, 0, m, m, dim);
    }
    let mid = (lo + hi) / 2;
    let left = carve(nodes, leaves, placeholder, axis, lo, mid, m, dim);
    let right = carve(nodes, leaves, placeholder, axis, mid, hi, m, dim);
    nodes[id] = Node::Split {
        feature: axis,
        threshold: mid as f64 / m as f64,
        left,
        right,
    };
    id
}

fn lattice(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(points.len() * per_axis);
        for p in &points {
            for j in 0..per_axis {
                let mut q = p.clone();
                q.push(j as f64 / (per_axis - 1) as f64);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Largest Euclidean norm of the finite-difference gradient of `p * f(x, p)`
/// in `x`, over a regular lattice on `[0,1]^dim` and the given prices.
pub fn numeric_lipschitz(
    model: &(impl DemandModel + ?Sized),
    dim: usize,
    prices: &[f64],
    per_axis: usize,
) -> Result<f64> {
    const H: f64 = 1e-5;
    let mut best: f64 = 0.0;
    for x in lattice(dim, per_axis.max(2)) {
        for &p in prices {
            let mut norm_sq = 0.0;
            for j in 0..dim {
                let (mut lo, mut hi) = (x.clone(), x.clone());
                lo[j] = (x[j] - H).max(0.0);
                hi[j] = (x[j] + H).min(1.0);
                let slope = p * (model.predict_proba(&hi, p)? - model.predict_proba(&lo, p)?)
                    / (hi[j] - lo[j]);
                norm_sq += slope * slope;
            }
            best = best.max(norm_sq.sqrt());
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegretCheck {
    pub max_regret: f64,
    pub bound: f64,
    pub slack: f64,
    pub lipschitz: f64,
    /// Depth actually realized by the cell construction.
    pub effective_depth: usize,
    pub cells_per_axis: usize,
}

impl RegretCheck {
    pub fn holds(&self) -> bool {
        self.max_regret <= self.bound + self.slack
    }
}

/// Builds the hypercube policy from `n_probe` uniform probes and measures its
/// worst pointwise regret over `n_test` uniform points, against the best of a
/// 1000-point price grid spanning `grid`. The model is treated as exact.
pub fn verify_regret_bound(
    truth: &(impl DemandModel + ?Sized),
    dim: usize,
    grid: &PriceGrid,
    depth: usize,
    n_probe: usize,
    n_test: usize,
    seed: u64,
) -> Result<RegretCheck> {
    let mut stream = Stream::new(seed);
    let mut uniform_rows = |n: usize| {
        let data: Vec<f64> = (0..n * dim).map(|_| stream.uniform()).collect();
        Features::new(data, n, dim)
    };
    let probes = uniform_rows(n_probe)?;
    let tests = uniform_rows(n_test)?;
    let policy = hypercube_policy(truth, grid, depth, dim, &probes)?;

    let prices = grid.prices();
    let lo = prices[0];
    let hi = prices[prices.len() - 1];
    let fine = if hi > lo {
        PriceGrid::linspace(lo, hi, FINE_GRID_POINTS)?
    } else {
        grid.clone()
    };
    let mut candidates: Vec<f64> = fine.prices().iter().chain(prices).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let revenue = |x: &[f64], p: f64| -> Result<f64> { Ok(p * truth.predict_proba(x, p)?) };
    let mut max_regret: f64 = 0.0;
    let mut max_price_slope: f64 = 0.0;
    for x in tests.rows() {
        let mut best = f64::NEG_INFINITY;
        let mut prev: Option<(f64, f64)> = None;
        for &p in &candidates {
            let r = revenue(x, p)?;
            best = best.max(r);
            if let Some((p0, r0)) = prev {
                max_price_slope = max_price_slope.max(((r - r0) / (p - p0)).abs());
            }
            prev = Some((p, r));
        }
        let chosen = revenue(x, policy.predict_price(x)?)?;
        max_regret = max_regret.max(best - chosen);
    }
    let spacing = fine
        .prices()
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);

    let cells = hypercube_cells_per_axis(depth, dim);
    let effective_depth = dim * (depth / dim);
    let lipschitz = numeric_lipschitz(truth, dim, fine.prices(), 41)?;
    let bound = regret_bound(&RegretBoundParams {
        lipschitz,
        dim,
        depth: effective_depth,
        teacher_error: 0.0,
    })?;
    Ok(RegretCheck {
        max_regret,
        bound,
        slack: spacing * max_price_slope,
        lipschitz,
        effective_depth,
        cells_per_axis: cells,
    })
}
