//! Teacher demand models `f(x, p)` and the revenue matrix the student learns from.

mod gbt;

use std::fs::File;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{Dataset, Features, PriceGrid};
use crate::error::{Error, Result};
use crate::synth::SyntheticSpec;

pub use gbt::{fit_gbt, GbtConfig, GbtModel, GbtNode};

/// Estimator of the probability that an item with features `x` sells at price `p`.
///
/// Implementations must be deterministic and return values in `[0, 1]`.
pub trait DemandModel: Send + Sync {
    /// Feature dimension the model was built for, when it has one.
    fn n_features(&self) -> Option<usize>;

    fn predict_proba(&self, x: &[f64], price: f64) -> Result<f64>;

    /// Query for a specific training row. Models that cannot answer arbitrary
    /// feature vectors (see [`TableTeacher`]) override this.
    fn predict_row(&self, row: usize, x: &[f64], price: f64) -> Result<f64> {
        let _ = row;
        self.predict_proba(x, price)
    }
}

pub(crate) fn check_dim(expected: Option<usize>, x: &[f64]) -> Result<()> {
    match expected {
        Some(d) if d != x.len() => Err(Error::Dimension {
            expected: d,
            got: x.len(),
        }),
        _ => Ok(()),
    }
}

/// Ground-truth probabilities of a synthetic world.
#[derive(Clone, Debug)]
pub struct OracleTeacher {
    spec: SyntheticSpec,
}

impl OracleTeacher {
    pub fn new(spec: SyntheticSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }
}

impl DemandModel for OracleTeacher {
    fn n_features(&self) -> Option<usize> {
        Some(self.spec.dimension())
    }

    fn predict_proba(&self, x: &[f64], price: f64) -> Result<f64> {
        self.spec.true_probability(x, price)
    }
}

/// Precomputed probabilities for fixed rows at fixed grid prices, typically
/// produced by a model trained outside this crate.
#[derive(Clone, Debug, PartialEq)]
pub struct TableTeacher {
    probs: Vec<f64>,
    n_rows: usize,
    grid: PriceGrid,
}

impl TableTeacher {
    pub fn new(probs: Vec<f64>, n_rows: usize, grid: PriceGrid) -> Result<Self> {
        let m = grid.len();
        if probs.len() != n_rows * m {
            return Err(Error::Shape(format!(
                "{} probabilities do not form {n_rows} rows of {m} grid prices",
                probs.len()
            )));
        }
        if let Some(pos) = probs
            .iter()
            .position(|p| !(p.is_finite() && (0.0..=1.0).contains(p)))
        {
            return Err(Error::Probability {
                row: pos / m,
                col: pos % m,
                value: probs[pos],
            });
        }
        Ok(Self {
            probs,
            n_rows,
            grid,
        })
    }

    /// Headerless CSV, one row per item and one column per grid price.
    pub fn load_csv(path: impl AsRef<Path>, grid: PriceGrid) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(file);
        let mut probs = Vec::new();
        let mut n_rows = 0;
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            if record.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "row {} has {} columns but the grid has {} prices",
                    r + 1,
                    record.len(),
                    grid.len()
                )));
            }
            for (c, cell) in record.iter().enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Cell {
                    row: r + 1,
                    column: c.to_string(),
                    message: format!("`{cell}` is not a number"),
                })?;
                probs.push(v);
            }
            n_rows += 1;
        }
        Self::new(probs, n_rows, grid)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn get(&self, row: usize, k: usize) -> f64 {
        self.probs[row * self.grid.len() + k]
    }
}

impl DemandModel for TableTeacher {
    fn n_features(&self) -> Option<usize> {
        None
    }

    fn predict_proba(&self, _x: &[f64], _price: f64) -> Result<f64> {
        Err(Error::RowIndexRequired)
    }

    fn predict_row(&self, row: usize, _x: &[f64], price: f64) -> Result<f64> {
        if row >= self.n_rows {
            return Err(Error::RowOutOfRange {
                row,
                rows: self.n_rows,
            });
        }
        let k = self.grid.index_of(price).ok_or(Error::OffGrid(price))?;
        Ok(self.get(row, k))
    }
}

/// Wraps a closure as a demand model.
pub struct FnModel<F> {
    f: F,
    n_features: Option<usize>,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    pub fn new(n_features: Option<usize>, f: F) -> Self {
        Self { f, n_features }
    }
}

impl<F> DemandModel for FnModel<F>
where
    F: Fn(&[f64], f64) -> f64 + Send + Sync,
{
    fn n_features(&self) -> Option<usize> {
        self.n_features
    }

    fn predict_proba(&self, x: &[f64], price: f64) -> Result<f64> {
        check_dim(self.n_features, x)?;
        Ok((self.f)(x, price))
    }
}

/// The three teacher variants behind one type.
#[derive(Clone, Debug)]
pub enum Teacher {
    Gbt(GbtModel),
    Oracle(OracleTeacher),
    Table(TableTeacher),
}

impl Teacher {
    fn inner(&self) -> &dyn DemandModel {
        match self {
            Teacher::Gbt(m) => m,
            Teacher::Oracle(m) => m,
            Teacher::Table(m) => m,
        }
    }
}

impl DemandModel for Teacher {
    fn n_features(&self) -> Option<usize> {
        self.inner().n_features()
    }

    fn predict_proba(&self, x: &[f64], price: f64) -> Result<f64> {
        self.inner().predict_proba(x, price)
    }

    fn predict_row(&self, row: usize, x: &[f64], price: f64) -> Result<f64> {
        self.inner().predict_row(row, x, price)
    }
}

/// `r[i][k] = p_k * f(x_i, p_k)` for every row and grid price.
#[derive(Clone, Debug, PartialEq)]
pub struct RevenueMatrix {
    values: Vec<f64>,
    n_rows: usize,
    grid: PriceGrid,
}

impl RevenueMatrix {
    pub fn new(values: Vec<f64>, n_rows: usize, grid: PriceGrid) -> Result<Self> {
        if values.len() != n_rows * grid.len() {
            return Err(Error::Shape(format!(
                "{} revenues do not form {n_rows} rows of {} prices",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite revenue".into()));
        }
        Ok(Self {
            values,
            n_rows,
            grid,
        })
    }

    /// Builds the matrix straight from row vectors of revenues.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], grid: PriceGrid) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * grid.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != grid.len() {
                return Err(Error::Shape(format!(
                    "revenue row has {} entries, grid has {}",
                    r.len(),
                    grid.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(values, rows.len(), grid)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_prices(&self) -> usize {
        self.grid.len()
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.grid.len() + k]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[i * m..(i + 1) * m]
    }

    pub fn grid(&self) -> &PriceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Evaluates the teacher at every (row, grid price) pair. Rows are computed in
/// parallel; the result does not depend on scheduling.
pub fn revenue_matrix(
    model: &(impl DemandModel + ?Sized),
    features: &Features,
    grid: &PriceGrid,
) -> Result<RevenueMatrix> {
    let values = grid_table(model, features, grid, true)?;
    RevenueMatrix::new(values, features.n_rows(), grid.clone())
}

/// Row-major `n x m` table of `f(x_i, p_k)`.
pub fn probability_table(
    model: &(impl DemandModel + ?Sized),
    features: &Features,
    grid: &PriceGrid,
) -> Result<Vec<f64>> {
    grid_table(model, features, grid, false)
}

fn grid_table(
    model: &(impl DemandModel + ?Sized),
    features: &Features,
    grid: &PriceGrid,
    times_price: bool,
) -> Result<Vec<f64>> {
    let rows: Vec<Vec<f64>> = (0..features.n_rows())
        .into_par_iter()
        .map(|i| {
            let x = features.row(i);
            grid.prices()
                .iter()
                .map(|&p| {
                    let f = model.predict_row(i, x, p)?;
                    Ok(if times_price { p * f } else { f })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.concat())
}

/// Mann-Whitney AUC of `scores` against binary `labels`; tied scores count one half.
pub fn auc_from_scores(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUC of the teacher's probability at each observed price against the observed sale.
pub fn auc(model: &(impl DemandModel + ?Sized), test: &Dataset) -> Result<f64> {
    let scores = (0..test.n_rows())
        .map(|i| model.predict_row(i, test.features().row(i), test.prices()[i]))
        .collect::<Result<Vec<_>>>()?;
    auc_from_scores(&scores, test.outcomes())
}

/// Mean binary cross-entropy at observed prices.
pub fn log_loss(model: &(impl DemandModel + ?Sized), test: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..test.n_rows() {
        let p = model
            .predict_row(i, test.features().row(i), test.prices()[i])?
            .clamp(1e-15, 1.0 - 1e-15);
        total -= if test.outcomes()[i] == 1 {
            p.ln()
        } else {
            (1.0 - p).ln()
        };
    }
    Ok(total / test.n_rows() as f64)
}
