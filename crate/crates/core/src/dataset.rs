//! Tabular pricing data: feature matrices, observed prices and sale outcomes,
//! price grids, and the retail price-imputation helpers used when a sale
//! record does not carry the price the customer saw.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Column reserved for the observed price.
pub const PRICE_COLUMN: &str = "price";
/// Column reserved for the binary sale outcome.
pub const SOLD_COLUMN: &str = "sold";

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl Features {
    pub fn new(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
        })
    }

    /// Builds a matrix from equally sized rows. An empty input yields a 0x0 matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            data,
            n_rows: rows.len(),
            n_cols,
        })
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Copies the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n_rows: rows.len(),
            n_cols: self.n_cols,
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Observational pricing data `(x_i, p_i, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Features,
    prices: Vec<f64>,
    outcomes: Vec<u8>,
    feature_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: Features,
        prices: Vec<f64>,
        outcomes: Vec<u8>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if n == 0 {
            return Err(Error::InvalidData("dataset has no rows".into()));
        }
        if prices.len() != n || outcomes.len() != n {
            return Err(Error::InvalidData(format!(
                "row counts differ: features {n}, prices {}, outcomes {}",
                prices.len(),
                outcomes.len()
            )));
        }
        if feature_names.len() != features.n_cols() {
            return Err(Error::InvalidData(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.n_cols()
            )));
        }
        if let Some(pos) = features.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite feature at row {}, column {}",
                pos / features.n_cols(),
                pos % features.n_cols()
            )));
        }
        if let Some(i) = prices.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite price at row {i}")));
        }
        if let Some(i) = outcomes.iter().position(|&y| y > 1) {
            return Err(Error::InvalidData(format!(
                "outcome {} at row {i} is not 0 or 1",
                outcomes[i]
            )));
        }
        Ok(Self {
            features,
            prices,
            outcomes,
            feature_names,
        })
    }

    /// Feature names default to `x0, x1, ...`.
    pub fn with_default_names(
        features: Features,
        prices: Vec<f64>,
        outcomes: Vec<u8>,
    ) -> Result<Self> {
        let names = default_feature_names(features.n_cols());
        Self::new(features, prices, outcomes, names)
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn outcomes(&self) -> &[u8] {
        &self.outcomes
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn positive_rate(&self) -> f64 {
        self.outcomes.iter().map(|&y| y as f64).sum::<f64>() / self.n_rows() as f64
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(rows),
            prices: rows.iter().map(|&i| self.prices[i]).collect(),
            outcomes: rows.iter().map(|&i| self.outcomes[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Reads a dataset from CSV. The `price` and `sold` columns are reserved;
    /// every other column is a numeric feature, kept in file order.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers: Vec<String> = rdr
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let price_col = headers
            .iter()
            .position(|h| h == PRICE_COLUMN)
            .ok_or(Error::MissingColumn(PRICE_COLUMN))?;
        let sold_col = headers
            .iter()
            .position(|h| h == SOLD_COLUMN)
            .ok_or(Error::MissingColumn(SOLD_COLUMN))?;
        let feature_cols: Vec<usize> = (0..headers.len())
            .filter(|&c| c != price_col && c != sold_col)
            .collect();

        let mut data = Vec::new();
        let mut prices = Vec::new();
        let mut outcomes = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            let parse = |c: usize| -> Result<f64> {
                let raw = record.get(c).unwrap_or("").trim();
                let v: f64 = raw.parse().map_err(|_| Error::Cell {
                    row,
                    column: headers[c].clone(),
                    message: format!("`{raw}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Cell {
                        row,
                        column: headers[c].clone(),
                        message: format!("`{raw}` is not finite"),
                    });
                }
                Ok(v)
            };
            for &c in &feature_cols {
                data.push(parse(c)?);
            }
            prices.push(parse(price_col)?);
            let sold = record.get(sold_col).unwrap_or("").trim();
            outcomes.push(match sold {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Cell {
                        row,
                        column: SOLD_COLUMN.into(),
                        message: format!("`{other}` is not 0 or 1"),
                    })
                }
            });
        }
        let n = prices.len();
        let features = Features::new(data, n, feature_cols.len())?;
        let names = feature_cols.iter().map(|&c| headers[c].clone()).collect();
        Self::new(features, prices, outcomes, names)
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    /// Writes features (in order), then `price`, then `sold`. Floats use the
    /// shortest representation that parses back to the same value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(PRICE_COLUMN);
        header.push(SOLD_COLUMN);
        w.write_record(&header)?;
        let mut buf = Vec::with_capacity(header.len());
        for i in 0..self.n_rows() {
            buf.clear();
            buf.extend(self.features.row(i).iter().map(|v| v.to_string()));
            buf.push(self.prices[i].to_string());
            buf.push(self.outcomes[i].to_string());
            w.write_record(&buf)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Random partition into halves of size `ceil(n/2)` and `floor(n/2)`.
    /// Each half keeps the original relative row order.
    pub fn split_halves(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let n = self.n_rows();
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, got: n });
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut Stream::new(seed));
        let (a, b) = order.split_at_mut(n.div_ceil(2));
        a.sort_unstable();
        b.sort_unstable();
        Ok((self.select(a), self.select(b)))
    }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Ordered set of candidate prices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PriceGrid {
    prices: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PriceGrid {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        PriceGrid::explicit(values)
    }
}

impl From<PriceGrid> for Vec<f64> {
    fn from(grid: PriceGrid) -> Self {
        grid.prices
    }
}

impl PriceGrid {
    /// Sorts `values` ascending; rejects empty input, duplicates and non-finite values.
    pub fn explicit(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidGrid("no prices".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite price {v}")));
        }
        values.sort_by(f64::total_cmp);
        if let Some(w) = values.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGrid(format!("duplicate price {}", w[0])));
        }
        Ok(Self { prices: values })
    }

    /// 10th, 20th, ..., 90th nearest-rank percentiles of `observed`, deduplicated.
    ///
    /// The p-th percentile is the value at 1-based position `ceil(p * n / 100)`
    /// of the ascending sort, so every grid price is an observed price.
    pub fn percentile(observed: &[f64]) -> Result<Self> {
        let n = observed.len();
        if n < 9 {
            return Err(Error::TooFewRows { needed: 9, got: n });
        }
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite observed price".into()));
        }
        let mut sorted = observed.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut prices: Vec<f64> = (1..=9)
            .map(|decile| {
                let rank = (decile * 10 * n).div_ceil(100);
                sorted[rank.max(1) - 1]
            })
            .collect();
        prices.dedup();
        Ok(Self { prices })
    }

    /// `count` equispaced prices over `[lo, hi]`.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 || !(lo.is_finite() && hi.is_finite()) || (count > 1 && hi <= lo) {
            return Err(Error::InvalidGrid(format!(
                "cannot place {count} prices on [{lo}, {hi}]"
            )));
        }
        if count == 1 {
            return Ok(Self { prices: vec![lo] });
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut prices: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
        prices[count - 1] = hi;
        Self::explicit(prices)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    #[inline]
    pub fn price(&self, k: usize) -> f64 {
        self.prices[k]
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn contains(&self, price: f64) -> bool {
        self.index_of(price).is_some()
    }

    /// Exact-match lookup.
    pub fn index_of(&self, price: f64) -> Option<usize> {
        self.prices.binary_search_by(|p| p.total_cmp(&price)).ok()
    }

    /// Index of the nearest grid price; equidistant prices resolve to the lower one.
    pub fn snap(&self, price: f64) -> usize {
        let pos = self.prices.partition_point(|&p| p < price);
        if pos == 0 {
            return 0;
        }
        if pos == self.prices.len() {
            return pos - 1;
        }
        let below = price - self.prices[pos - 1];
        let above = self.prices[pos] - price;
        if above < below {
            pos
        } else {
            pos - 1
        }
    }
}

/// One recorded sale of a product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaleRecord {
    pub timestamp: i64,
    pub store_id: i64,
    pub price: f64,
}

/// Time-ordered sales of one product, across stores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SaleHistory {
    records: Vec<SaleRecord>,
}

impl SaleHistory {
    pub fn new(records: Vec<SaleRecord>) -> Result<Self> {
        if let Some(i) = records
            .windows(2)
            .position(|w| w[1].timestamp < w[0].timestamp)
        {
            return Err(Error::InvalidData(format!(
                "sale history timestamps decrease at record {}",
                i + 1
            )));
        }
        if let Some(r) = records.iter().find(|r| !r.price.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite price at timestamp {}",
                r.timestamp
            )));
        }
        Ok(Self { records })
    }

    /// Reads `timestamp,store_id,price` CSV.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let records = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<SaleRecord>, _>>()?;
        Self::new(records)
    }

    pub fn records(&self) -> &[SaleRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Most frequent price among the latest `k` sales. Ties go to the tied
    /// price seen most recently.
    pub fn impute_mode_of_last_k(&self, k: usize) -> Result<f64> {
        if self.records.is_empty() {
            return Err(Error::EmptyHistory);
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let start = self.records.len().saturating_sub(k);
        // price bits -> (count, latest position)
        let mut tally: HashMap<u64, (usize, usize)> = HashMap::new();
        for (pos, rec) in self.records[start..].iter().enumerate() {
            let e = tally.entry(rec.price.to_bits()).or_insert((0, pos));
            e.0 += 1;
            e.1 = pos;
        }
        let (bits, _) = tally
            .into_iter()
            .max_by_key(|&(_, (count, latest))| (count, latest))
            .expect("window is nonempty");
        Ok(f64::from_bits(bits))
    }

    /// Price of the most recent sale at `store_id`.
    pub fn impute_last_at_store(&self, store_id: i64) -> Result<f64> {
        self.records
            .iter()
            .rev()
            .find(|r| r.store_id == store_id)
            .map(|r| r.price)
            .ok_or(Error::UnknownStore(store_id))
    }

    /// Keeps only the records of stores with at least `min_sales` sales.
    pub fn filter_stores_min_sales(&self, min_sales: usize) -> SaleHistory {
        let mut counts: HashMap<i64, usize> = HashMap::new();
        for r in &self.records {
            *counts.entry(r.store_id).or_default() += 1;
        }
        let records = self
            .records
            .iter()
            .filter(|r| counts[&r.store_id] >= min_sales)
            .copied()
            .collect();
        SaleHistory { records }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(timestamp: i64, store_id: i64, price: f64) -> SaleRecord {
        SaleRecord {
            timestamp,
            store_id,
            price,
        }
    }

    fn history(prices: &[f64]) -> SaleHistory {
        SaleHistory::new(
            prices
                .iter()
                .enumerate()
                .map(|(t, &p)| rec(t as i64, 1, p))
                .collect(),
        )
        .unwrap()
    }

    fn dataset(n: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64, (i * i) as f64]).collect();
        Dataset::with_default_names(
            Features::from_rows(&rows).unwrap(),
            (0..n).map(|i| 1.0 + i as f64 / 10.0).collect(),
            (0..n).map(|i| (i % 2) as u8).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_csv() {
        let d = Dataset::read_csv("x0,price,sold\n1.0,5.0,1\n2.0,4.0,0\n".as_bytes()).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.n_features(), 1);
        assert_eq!(d.prices(), &[5.0, 4.0]);
        assert_eq!(d.outcomes(), &[1, 0]);
        assert_eq!(d.features().row(1), &[2.0]);
    }

    #[test]
    fn feature_order_follows_file() {
        let d = Dataset::read_csv("b,price,a,sold\n1,2,3,0\n".as_bytes()).unwrap();
        assert_eq!(d.feature_names(), &["b".to_string(), "a".to_string()]);
        assert_eq!(d.features().row(0), &[1.0, 3.0]);
    }

    #[test]
    fn rejects_bad_sold_value_with_location() {
        let err = Dataset::read_csv("x0,price,sold\n1,5,1\n2,4,2\n".as_bytes()).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "sold");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_cell_and_missing_columns() {
        let err = Dataset::read_csv("x0,price,sold\nabc,5,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Cell { row: 1, ref column, .. } if column == "x0"));
        let err = Dataset::read_csv("x0,sold\n1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn("price")));
        let err = Dataset::read_csv("x0,price\n1,1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn("sold")));
    }

    #[test]
    fn csv_round_trip() {
        let mut rows = Vec::new();
        for i in 0..20 {
            let v = (i as f64).sin() * 1e3 / 7.0;
            rows.push(vec![v, -v / 3.0, 1e-17 * v]);
        }
        let d = Dataset::with_default_names(
            Features::from_rows(&rows).unwrap(),
            (0..20).map(|i| 0.1 * i as f64 + 1.0 / 3.0).collect(),
            (0..20).map(|i| (i % 3 == 0) as u8).collect(),
        )
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn split_sizes() {
        let (a, b) = dataset(4).split_halves(0).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (2, 2));
        let (a, b) = dataset(101).split_halves(3).unwrap();
        assert_eq!((a.n_rows(), b.n_rows()), (51, 50));
        assert!(matches!(
            dataset(1).split_halves(0),
            Err(Error::TooFewRows { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn split_is_deterministic_partition() {
        let d = dataset(37);
        let first = d.split_halves(11).unwrap();
        let second = d.split_halves(11).unwrap();
        assert_eq!(first, second);
        let mut seen: Vec<f64> = first
            .0
            .features()
            .column(0)
            .into_iter()
            .chain(first.1.features().column(0))
            .collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, (0..37).map(|i| i as f64).collect::<Vec<_>>());
        assert_ne!(d.split_halves(12).unwrap(), first);
    }

    #[test]
    fn percentile_grid_nearest_rank() {
        let prices: Vec<f64> = (1..=10).map(f64::from).collect();
        let grid = PriceGrid::percentile(&prices).unwrap();
        assert_eq!(
            grid.prices(),
            &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]
        );
        let grid = PriceGrid::percentile(&[5.0; 12]).unwrap();
        assert_eq!(grid.prices(), &[5.0]);
        assert!(PriceGrid::percentile(&[1.0; 8]).is_err());
    }

    #[test]
    fn percentile_grid_matches_sort_and_index() {
        let mut s = Stream::new(99);
        let prices: Vec<f64> = (0..5000).map(|_| 5.0 + s.normal()).collect();
        let grid = PriceGrid::percentile(&prices).unwrap();
        let mut sorted = prices.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<f64> = (1..=9).map(|q| sorted[q * 500 - 1]).collect();
        assert_eq!(grid.prices(), expected.as_slice());
        assert!(grid.price(0) < 5.0 && grid.price(8) > 5.0);
    }

    #[test]
    fn explicit_ladders() {
        let ladder = [4.99, 1.99, 2.49, 3.99, 2.99, 3.49, 4.49];
        let grid = PriceGrid::explicit(ladder.to_vec()).unwrap();
        assert_eq!(grid.prices(), &[1.99, 2.49, 2.99, 3.49, 3.99, 4.49, 4.99]);
        let grid = PriceGrid::explicit(vec![2.69, 2.32, 2.49]).unwrap();
        assert_eq!(grid.prices(), &[2.32, 2.49, 2.69]);
        assert!(PriceGrid::explicit(vec![3.0, 3.0]).is_err());
        assert!(PriceGrid::explicit(vec![]).is_err());
    }

    #[test]
    fn snap_ties_go_down() {
        let grid = PriceGrid::explicit(vec![1.0, 2.0, 4.0]).unwrap();
        assert_eq!(grid.snap(-3.0), 0);
        assert_eq!(grid.snap(1.5), 0);
        assert_eq!(grid.snap(1.6), 1);
        assert_eq!(grid.snap(3.0), 1);
        assert_eq!(grid.snap(9.0), 2);
        assert_eq!(grid.snap(4.0), 2);
    }

    #[test]
    fn mode_of_last_k() {
        assert_eq!(
            history(&[2.49, 1.99, 1.99])
                .impute_mode_of_last_k(3)
                .unwrap(),
            1.99
        );
        assert_eq!(
            history(&[1.99, 2.49, 2.99])
                .impute_mode_of_last_k(3)
                .unwrap(),
            2.99
        );
        assert_eq!(history(&[3.49]).impute_mode_of_last_k(3).unwrap(), 3.49);
        // older sales outside the window do not count
        assert_eq!(
            history(&[1.0, 1.0, 1.0, 2.0, 3.0, 2.0])
                .impute_mode_of_last_k(3)
                .unwrap(),
            2.0
        );
        assert!(matches!(
            SaleHistory::default().impute_mode_of_last_k(3),
            Err(Error::EmptyHistory)
        ));
    }

    #[test]
    fn last_at_store() {
        let h = SaleHistory::new(vec![rec(1, 7, 2.32), rec(2, 9, 2.69), rec(3, 7, 2.49)]).unwrap();
        assert_eq!(h.impute_last_at_store(7).unwrap(), 2.49);
        assert_eq!(h.impute_last_at_store(9).unwrap(), 2.69);
        assert!(matches!(
            h.impute_last_at_store(4),
            Err(Error::UnknownStore(4))
        ));
    }

    #[test]
    fn store_filter() {
        let mut records = Vec::new();
        for t in 0..99 {
            records.push(rec(t, if t % 2 == 0 { 1 } else { 2 }, 1.0));
        }
        let h = SaleHistory::new(records).unwrap();
        let kept = h.filter_stores_min_sales(50);
        assert_eq!(kept.len(), 50);
        assert!(kept.records().iter().all(|r| r.store_id == 1));
        assert_eq!(h.filter_stores_min_sales(1), h);
        assert!(SaleHistory::default()
            .filter_stores_min_sales(50)
            .is_empty());
    }

    #[test]
    fn history_rejects_time_travel() {
        assert!(SaleHistory::new(vec![rec(2, 1, 1.0), rec(1, 1, 1.0)]).is_err());
    }

    fn arb_history() -> impl Strategy<Value = SaleHistory> {
        prop::collection::vec((0i64..3, 0i64..4, 0usize..4), 1..60).prop_map(|raw| {
            let mut t = 0;
            let records = raw
                .into_iter()
                .map(|(dt, store, p)| {
                    t += dt;
                    rec(t, store, [1.99, 2.49, 2.99, 3.49][p])
                })
                .collect();
            SaleHistory::new(records).unwrap()
        })
    }

    proptest! {
        #[test]
        fn percentile_grid_permutation_invariant(
            mut prices in prop::collection::vec(-50.0f64..50.0, 9..200),
            seed in any::<u64>(),
        ) {
            let grid = PriceGrid::percentile(&prices).unwrap();
            prices.shuffle(&mut Stream::new(seed));
            prop_assert_eq!(PriceGrid::percentile(&prices).unwrap(), grid);
        }

        #[test]
        fn mode_with_k1_is_latest(h in arb_history()) {
            prop_assert_eq!(h.impute_mode_of_last_k(1).unwrap(), h.records().last().unwrap().price);
        }

        #[test]
        fn store_filter_idempotent(h in arb_history(), min_sales in 1usize..20) {
            let once = h.filter_stores_min_sales(min_sales);
            prop_assert_eq!(once.filter_stores_min_sales(min_sales), once.clone());
        }
    }
}
