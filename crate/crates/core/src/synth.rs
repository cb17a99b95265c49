//! Synthetic pricing worlds from a latent probit model.
//!
//! A customer buys when `g(x) + h(x) * p + eps > 0` with `eps ~ N(0, 1)`, so
//! the true sale probability is `Phi(g(x) + h(x) * p)`. Six worlds are
//! available by id:
//!
//! | id | d  | g(x)          | h(x)                         | X            | P            |
//! |----|----|---------------|------------------------------|--------------|--------------|
//! | 1  | 2  | x0            | -1                           | N(5, I)      | N(5, 1)      |
//! | 2  | 20 | 5             | -1.5 x'beta (beta_6.. = 0)   | N(0, I)      | N(0, 2)      |
//! | 3  | 2  | 5             | step in x0                   | N(0, I)      | N(x0 + 5, 2) |
//! | 4  | 2  | 5             | step in x0 and x1            | N(0, I)      | N(x0 + 5, 2) |
//! | 5  | 2  | x0            | -1                           | N(5, I)      | N(x0 + 5, 2) |
//! | 6  | 2  | 4 abs(x0+x1)  | -abs(x0+x1)                  | N(0, I)      | N(x0 + 5, 2) |
//!
//! The second parameter of every normal law is a variance.
//!
//! Rows are drawn one at a time from a single [`Stream`]: the `d` features in
//! order, then the price, then the latent noise. World 2 draws its five
//! nonzero coefficients from a separate stream derived from the seed given to
//! [`SyntheticSpec::new`].

use statrs::function::erf::erfc_inv;

use crate::dataset::{default_feature_names, Dataset, Features, PriceGrid};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};

const BETA_STREAM: u64 = 0xBE7A;
const DATASET2_DIM: usize = 20;
const DATASET2_ACTIVE: usize = 5;

/// Number of points in the fine price grid used to approximate the continuous optimum.
pub const FINE_GRID_POINTS: usize = 1000;

/// `Phi(z)` via the complementary error function, accurate in both tails.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn standard_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `Phi^-1(u)` for `u` in (0, 1).
pub fn standard_normal_quantile(u: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * u)
}

/// One of the six synthetic worlds.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    id: u32,
    beta: Vec<f64>,
}

impl SyntheticSpec {
    /// `seed` only matters for world 2, where it fixes the coefficient vector.
    pub fn new(id: u32, seed: u64) -> Result<Self> {
        let beta = match id {
            1 | 3..=6 => Vec::new(),
            2 => {
                let mut s = Stream::new(derive_seed(seed, &[BETA_STREAM]));
                let mut beta = vec![0.0; DATASET2_DIM];
                for b in beta.iter_mut().take(DATASET2_ACTIVE) {
                    *b = s.normal();
                }
                beta
            }
            other => return Err(Error::UnknownSpec(other)),
        };
        Ok(Self { id, beta })
    }

    /// World 2 with a caller-chosen coefficient vector.
    pub fn dataset2_with_beta(beta: Vec<f64>) -> Result<Self> {
        if beta.len() != DATASET2_DIM {
            return Err(Error::Dimension {
                expected: DATASET2_DIM,
                got: beta.len(),
            });
        }
        Ok(Self { id: 2, beta })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn dimension(&self) -> usize {
        if self.id == 2 {
            DATASET2_DIM
        } else {
            2
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Baseline utility.
    pub fn g(&self, x: &[f64]) -> f64 {
        match self.id {
            1 | 5 => x[0],
            2..=4 => 5.0,
            6 => 4.0 * (x[0] + x[1]).abs(),
            _ => unreachable!("validated at construction"),
        }
    }

    /// Price sensitivity.
    pub fn h(&self, x: &[f64]) -> f64 {
        match self.id {
            1 | 5 => -1.0,
            2 => -1.5 * x.iter().zip(&self.beta).map(|(a, b)| a * b).sum::<f64>(),
            3 => {
                if x[0] < -1.0 {
                    -1.2
                } else if x[0] < 0.0 {
                    -1.1
                } else if x[0] < 1.0 {
                    -0.9
                } else {
                    -0.8
                }
            }
            4 => {
                let step = if x[0] < -1.0 {
                    -1.25
                } else if x[0] < 0.0 {
                    -1.1
                } else if x[0] < 1.0 {
                    -0.9
                } else {
                    -0.75
                };
                step + if x[1] < 0.0 { -0.1 } else { 0.1 }
            }
            6 => -(x[0] + x[1]).abs(),
            _ => unreachable!("validated at construction"),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// `Phi(g(x) + h(x) p)`.
    pub fn true_probability(&self, x: &[f64], price: f64) -> Result<f64> {
        self.check_dim(x)?;
        Ok(standard_normal_cdf(self.g(x) + self.h(x) * price))
    }

    /// Revenue-maximizing grid price under the true model; ties go to the lower price.
    pub fn oracle_optimal(&self, x: &[f64], grid: &PriceGrid) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        let (g, h) = (self.g(x), self.h(x));
        let mut best = (grid.price(0), f64::NEG_INFINITY);
        for &p in grid.prices() {
            let r = p * standard_normal_cdf(g + h * p);
            if r > best.1 {
                best = (p, r);
            }
        }
        Ok(best)
    }

    fn sample_row(&self, s: &mut Stream, x: &mut [f64]) -> (f64, u8) {
        match self.id {
            1 | 5 => {
                for v in x.iter_mut() {
                    *v = s.normal_mv(5.0, 1.0);
                }
            }
            _ => {
                for v in x.iter_mut() {
                    *v = s.normal();
                }
            }
        }
        let price = match self.id {
            1 => s.normal_mv(5.0, 1.0),
            2 => s.normal_mv(0.0, 2.0),
            _ => s.normal_mv(x[0] + 5.0, 2.0),
        };
        let eps = s.normal();
        let latent = self.g(x) + self.h(x) * price + eps;
        (price, (latent > 0.0) as u8)
    }

    /// `n` i.i.d. rows. Bit-identical for a fixed `(spec, n, seed)`.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::TooFewRows { needed: 1, got: 0 });
        }
        let d = self.dimension();
        let mut s = Stream::new(seed);
        let mut data = vec![0.0; n * d];
        let mut prices = Vec::with_capacity(n);
        let mut outcomes = Vec::with_capacity(n);
        for row in data.chunks_exact_mut(d) {
            let (p, y) = self.sample_row(&mut s, row);
            prices.push(p);
            outcomes.push(y);
        }
        Dataset::new(
            Features::new(data, n, d)?,
            prices,
            outcomes,
            default_feature_names(d),
        )
    }
}

/// `FINE_GRID_POINTS` equispaced prices spanning the observed price range.
pub fn fine_grid(observed: &[f64]) -> Result<PriceGrid> {
    let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    PriceGrid::linspace(lo, hi, FINE_GRID_POINTS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent `Phi` from the Maclaurin series of erf (|z| small) and the
    /// Laplace continued fraction for the upper tail.
    fn phi_oracle(z: f64) -> f64 {
        if z.abs() < 3.0 {
            let x = z / std::f64::consts::SQRT_2;
            let mut term = x;
            let mut sum = x;
            for n in 1..200 {
                term *= -x * x / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            0.5 + sum / std::f64::consts::PI.sqrt()
        } else {
            let t = z.abs();
            // Q(t) = phi(t) / (t + 1/(t + 2/(t + 3/(t + ...))))
            let mut frac = t;
            for k in (1..300).rev() {
                frac = t + k as f64 / frac;
            }
            let q = standard_normal_pdf(t) / frac;
            if z > 0.0 {
                1.0 - q
            } else {
                q
            }
        }
    }

    #[test]
    fn cdf_matches_independent_oracle() {
        let mut z = -8.0;
        while z <= 8.0 {
            assert_abs_diff_eq!(standard_normal_cdf(z), phi_oracle(z), epsilon = 1e-12);
            z += 0.0625;
        }
    }

    #[test]
    fn cdf_reference_points() {
        assert_eq!(standard_normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(standard_normal_cdf(1.959963985), 0.975, epsilon = 1e-9);
        assert!(standard_normal_cdf(-8.0) < 1e-15);
        assert!(standard_normal_cdf(-8.0) > 0.0);
        for z in [0.1, 0.7, 1.3, 2.9, 4.4] {
            assert_abs_diff_eq!(
                standard_normal_cdf(-z),
                1.0 - standard_normal_cdf(z),
                epsilon = 2.0 * f64::EPSILON
            );
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for u in [1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999] {
            let z = standard_normal_quantile(u);
            assert_abs_diff_eq!(standard_normal_cdf(z), u, epsilon = 1e-12 + 1e-10 * u);
        }
    }

    #[test]
    fn dataset1_probabilities() {
        let spec = SyntheticSpec::new(1, 0).unwrap();
        assert_eq!(spec.true_probability(&[5.0, 0.0], 5.0).unwrap(), 0.5);
        // Phi(1) = 0.841344746...
        assert_abs_diff_eq!(
            spec.true_probability(&[5.0, 3.0], 4.0).unwrap(),
            0.841345,
            epsilon = 5e-7
        );
        assert!(spec.true_probability(&[5.0], 4.0).is_err());
    }

    #[test]
    fn dataset6_is_price_insensitive_at_origin() {
        let spec = SyntheticSpec::new(6, 0).unwrap();
        for p in [-3.0, 0.0, 5.0, 100.0] {
            assert_eq!(spec.true_probability(&[0.0, 0.0], p).unwrap(), 0.5);
        }
    }

    #[test]
    fn step_sensitivities() {
        let s3 = SyntheticSpec::new(3, 0).unwrap();
        assert_eq!(s3.h(&[-2.0, 0.0]), -1.2);
        assert_eq!(s3.h(&[-1.0, 0.0]), -1.1);
        assert_eq!(s3.h(&[0.0, 0.0]), -0.9);
        assert_eq!(s3.h(&[1.0, 0.0]), -0.8);
        let s4 = SyntheticSpec::new(4, 0).unwrap();
        assert_abs_diff_eq!(s4.h(&[1.5, -0.5]), -0.85, epsilon = 1e-15);
        assert_abs_diff_eq!(s4.h(&[-1.5, 0.5]), -1.15, epsilon = 1e-15);
    }

    #[test]
    fn dataset2_has_sparse_beta() {
        let spec = SyntheticSpec::new(2, 17).unwrap();
        assert_eq!(spec.dimension(), 20);
        assert!(spec.beta()[5..].iter().all(|&b| b == 0.0));
        assert!(spec.beta()[..5].iter().all(|&b| b != 0.0));
        assert_eq!(spec, SyntheticSpec::new(2, 17).unwrap());
        assert_ne!(spec, SyntheticSpec::new(2, 18).unwrap());
    }

    #[test]
    fn unknown_ids_rejected() {
        assert!(matches!(
            SyntheticSpec::new(0, 0),
            Err(Error::UnknownSpec(0))
        ));
        assert!(matches!(
            SyntheticSpec::new(9, 0),
            Err(Error::UnknownSpec(9))
        ));
    }

    #[test]
    fn oracle_optimal_cases() {
        let spec = SyntheticSpec::new(1, 0).unwrap();
        let grid = PriceGrid::explicit(vec![4.0, 5.0, 6.0]).unwrap();
        let (p, r) = spec.oracle_optimal(&[5.0, 0.0], &grid).unwrap();
        assert_eq!(p, 4.0);
        assert_abs_diff_eq!(r, 4.0 * phi_oracle(1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(r, 3.3654, epsilon = 5e-5);

        // h = 0 at the origin of world 6: revenue rises with price
        let s6 = SyntheticSpec::new(6, 0).unwrap();
        assert_eq!(s6.oracle_optimal(&[0.0, 0.0], &grid).unwrap().0, 6.0);

        let single = PriceGrid::explicit(vec![7.5]).unwrap();
        assert_eq!(spec.oracle_optimal(&[5.0, 0.0], &single).unwrap().0, 7.5);
    }

    #[test]
    fn generation_is_reproducible() {
        for id in 1..=6 {
            let spec = SyntheticSpec::new(id, 3).unwrap();
            let a = spec.generate(500, 21).unwrap();
            assert_eq!(a, spec.generate(500, 21).unwrap());
            assert_ne!(a, spec.generate(500, 22).unwrap());
            assert_eq!(a.n_features(), spec.dimension());
        }
    }

    #[test]
    fn probit_symmetry_near_zero_utility() {
        let spec = SyntheticSpec::new(1, 0).unwrap();
        let d = spec.generate(100_000, 4).unwrap();
        let (mut hits, mut total) = (0.0, 0.0);
        for i in 0..d.n_rows() {
            let x = d.features().row(i);
            let u = spec.g(x) + spec.h(x) * d.prices()[i];
            if u.abs() < 0.05 {
                total += 1.0;
                hits += d.outcomes()[i] as f64;
            }
        }
        let rate = hits / total;
        assert!(total > 1000.0);
        assert!(
            (rate - 0.5).abs() < 4.0 * (0.25 / total).sqrt(),
            "rate {rate}"
        );
    }

    #[test]
    fn dataset2_ignores_inactive_features() {
        let spec = SyntheticSpec::new(2, 5).unwrap();
        let d = spec.generate(50, 1).unwrap();
        for i in 0..d.n_rows() {
            let x = d.features().row(i).to_vec();
            let mut y = x.clone();
            y[5..].reverse();
            for p in [-1.0, 0.5, 2.0] {
                assert_eq!(
                    spec.true_probability(&x, p).unwrap(),
                    spec.true_probability(&y, p).unwrap()
                );
            }
        }
    }
}
