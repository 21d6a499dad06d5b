//! Domain value types and elementary portfolio arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the unit-sum constraint of a stored portfolio.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Largest unit-sum drift that constructors silently renormalize away.
pub const RENORMALIZE_TOL: f64 = 1e-6;

/// A long-only, fully invested portfolio: non-negative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Portfolio(Vec<f64>);

impl Portfolio {
    /// Validates `weights`. A unit-sum drift above [`SIMPLEX_TOL`] and at most
    /// [`RENORMALIZE_TOL`] is renormalized; smaller drift is kept bit-exact.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidPortfolio(format!(
                "need at least 2 assets, got {}",
                weights.len()
            )));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPortfolio(format!("weight {i} is {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::InvalidPortfolio(format!("weights sum to {sum}, not 1")));
        }
        let mut weights = weights;
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            weights.iter_mut().for_each(|w| *w /= sum);
        }
        Ok(Portfolio(weights))
    }

    /// Clips and rescales an arbitrary vector onto the simplex. Returns `None`
    /// when nothing positive remains.
    pub fn normalized(mut raw: Vec<f64>) -> Option<Self> {
        raw.iter_mut().for_each(|w| {
            if !w.is_finite() || *w < 0.0 {
                *w = 0.0
            }
        });
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return None;
        }
        raw.iter_mut().for_each(|w| *w /= sum);
        Some(Portfolio(raw))
    }

    pub fn uniform(n: usize) -> Self {
        Portfolio(vec![1.0 / n as f64; n])
    }

    /// Unit vector concentrated in asset `i`.
    pub fn vertex(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Portfolio(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Euclidean distance in weight space.
    pub fn distance(&self, other: &Portfolio) -> f64 {
        euclidean(&self.0, &other.0)
    }

    /// True when the stored weights satisfy the simplex invariants.
    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|w| *w >= 0.0 && w.is_finite()) && (self.0.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
    }
}

impl TryFrom<Vec<f64>> for Portfolio {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Portfolio::new(v)
    }
}

impl From<Portfolio> for Vec<f64> {
    fn from(p: Portfolio) -> Self {
        p.0
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Asset names, sector membership and market capitalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetUniverse {
    names: Vec<String>,
    sector_of: Vec<usize>,
    market_cap: Vec<f64>,
    sector_names: Vec<String>,
}

impl AssetUniverse {
    pub fn new(
        names: Vec<String>,
        sector_of: Vec<usize>,
        market_cap: Vec<f64>,
        sector_names: Vec<String>,
    ) -> Result<Self> {
        let n = names.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "universe needs at least 2 assets, got {n}"
            )));
        }
        if sector_of.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: sector_of.len(),
            });
        }
        if market_cap.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: market_cap.len(),
            });
        }
        if let Some(cap) = market_cap.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "market capitalization must be positive, got {cap}"
            )));
        }
        let n_sectors = sector_names.len();
        if let Some(s) = sector_of.iter().find(|s| **s >= n_sectors) {
            return Err(Error::InvalidInput(format!(
                "sector index {s} out of range for {n_sectors} sectors"
            )));
        }
        Ok(AssetUniverse {
            names,
            sector_of,
            market_cap,
            sector_names,
        })
    }

    /// Builds a universe from per-asset sector labels; sectors are indexed in
    /// sorted label order.
    pub fn from_labels(names: Vec<String>, sectors: &[String], market_cap: Vec<f64>) -> Result<Self> {
        let mut sector_names: Vec<String> = sectors.to_vec();
        sector_names.sort();
        sector_names.dedup();
        let sector_of = sectors
            .iter()
            .map(|s| sector_names.binary_search(s).expect("label present"))
            .collect();
        AssetUniverse::new(names, sector_of, market_cap, sector_names)
    }

    /// Every asset in its own sector with unit capitalization.
    pub fn trivial(names: Vec<String>) -> Result<Self> {
        let n = names.len();
        let sector_names = names.clone();
        AssetUniverse::new(names, (0..n).collect(), vec![1.0; n], sector_names)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn sector_of(&self) -> &[usize] {
        &self.sector_of
    }

    pub fn market_cap(&self) -> &[f64] {
        &self.market_cap
    }

    pub fn sector_names(&self) -> &[String] {
        &self.sector_names
    }

    pub fn n_sectors(&self) -> usize {
        self.sector_names.len()
    }

    pub fn max_market_cap(&self) -> f64 {
        self.market_cap.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Expected annual returns and the annual return covariance, both in decimal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    mu: Vec<f64>,
    /// Row-major `n x n`.
    sigma: Vec<f64>,
}

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-8;

impl Estimates {
    /// Validates shape, symmetry and positive semi-definiteness.
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!(
                "estimates need at least 2 assets, got {n}"
            )));
        }
        if sigma.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: sigma.len(),
            });
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite estimate".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (sigma[i * n + j], sigma[j * n + i]);
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let min_eig = min_eigenvalue(n, &sigma);
        if min_eig < PSD_TOL {
            return Err(Error::NotPsd { eigenvalue: min_eig });
        }
        Ok(Estimates { mu, sigma })
    }

    pub fn from_rows(mu: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = mu.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!("covariance must be {n}x{n}")));
        }
        Estimates::new(mu, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Row-major covariance.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn cov(&self, i: usize, j: usize) -> f64 {
        self.sigma[i * self.dim() + j]
    }

    pub fn sigma_rows(&self) -> Vec<Vec<f64>> {
        self.sigma.chunks(self.dim()).map(<[f64]>::to_vec).collect()
    }

    pub fn expected_return(&self, w: &[f64]) -> f64 {
        dot(&self.mu, w)
    }

    /// `wᵀ Σ w`.
    pub fn variance(&self, w: &[f64]) -> f64 {
        let n = self.dim();
        self.sigma
            .chunks_exact(n)
            .zip(w)
            .filter(|(_, wi)| **wi != 0.0)
            .map(|(row, wi)| wi * dot(row, w))
            .sum()
    }

    /// `Σ w`.
    pub fn sigma_times(&self, w: &[f64]) -> Vec<f64> {
        self.sigma.chunks_exact(self.dim()).map(|row| dot(row, w)).collect()
    }

    /// Copy with assets reordered so that new asset `k` is old asset `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Estimates {
        let n = self.dim();
        let mu = perm.iter().map(|&p| self.mu[p]).collect();
        let mut sigma = vec![0.0; n * n];
        for (a, &pa) in perm.iter().enumerate() {
            for (b, &pb) in perm.iter().enumerate() {
                sigma[a * n + b] = self.sigma[pa * n + pb];
            }
        }
        Estimates { mu, sigma }
    }

    /// Per-asset volatilities and the correlation matrix.
    pub fn stds_and_corr(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim();
        let stds: Vec<f64> = (0..n).map(|i| self.cov(i, i).max(0.0).sqrt()).collect();
        let mut corr = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let d = stds[i] * stds[j];
                corr[i * n + j] = if i == j {
                    1.0
                } else if d > 0.0 {
                    self.cov(i, j) / d
                } else {
                    0.0
                };
            }
        }
        (stds, corr)
    }
}

pub(crate) fn min_eigenvalue(n: usize, sigma: &[f64]) -> f64 {
    let m = nalgebra::DMatrix::from_row_slice(n, n, sigma);
    let m = (&m + m.transpose()) * 0.5;
    m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A point in the (expected return, volatility) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskReturnPoint {
    pub mu: f64,
    pub sigma: f64,
}

impl RiskReturnPoint {
    pub fn distance(&self, other: &RiskReturnPoint) -> f64 {
        (self.mu - other.mu).hypot(self.sigma - other.sigma)
    }
}

/// Maps raw weights to their (μ, σ) point.
pub fn risk_return_raw(w: &[f64], est: &Estimates) -> Result<RiskReturnPoint> {
    if w.len() != est.dim() {
        return Err(Error::DimensionMismatch {
            expected: est.dim(),
            actual: w.len(),
        });
    }
    let var = est.variance(w);
    let var = if var < 0.0 {
        if var >= -1e-12 {
            0.0
        } else {
            return Err(Error::Numerical(format!("negative portfolio variance {var:e}")));
        }
    } else {
        var
    };
    Ok(RiskReturnPoint {
        mu: est.expected_return(w),
        sigma: var.sqrt(),
    })
}

pub fn risk_return(w: &Portfolio, est: &Estimates) -> Result<RiskReturnPoint> {
    risk_return_raw(w.weights(), est)
}

pub fn sharpe_of(rr: RiskReturnPoint, rf: f64) -> Result<f64> {
    if rr.sigma <= 0.0 {
        return Err(Error::ZeroVolatility);
    }
    Ok((rr.mu - rf) / rr.sigma)
}

/// Excess return per unit volatility.
pub fn sharpe(w: &Portfolio, est: &Estimates, rf: f64) -> Result<f64> {
    sharpe_of(risk_return(w, est)?, rf)
}
