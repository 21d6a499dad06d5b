//! Turning historical returns (or summary moments) into [`Estimates`].

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::types::{AssetUniverse, Estimates};

pub const DEFAULT_TRADING_DAYS: f64 = 252.0;

/// `T` consecutive trading days of simple daily returns for `N` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsWindow {
    assets: Vec<String>,
    dates: Vec<NaiveDate>,
    /// Row-major `T x N`.
    returns: Vec<f64>,
}

impl ReturnsWindow {
    pub fn new(assets: Vec<String>, dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        let n = assets.len();
        let t = dates.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 assets, got {n}")));
        }
        if t < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {t}")));
        }
        if returns.len() != t * n {
            return Err(Error::DimensionMismatch {
                expected: t * n,
                actual: returns.len(),
            });
        }
        if let Some(pos) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "missing or non-finite return on {} for {}",
                dates[pos / n],
                assets[pos % n]
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(format!(
                "dates not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(ReturnsWindow { assets, dates, returns })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let n = self.n_assets();
        &self.returns[t * n..(t + 1) * n]
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        (0..self.n_days()).map(|t| self.row(t)[i]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.returns.chunks_exact(self.n_assets())
    }

    /// The most recent `t` rows.
    pub fn trailing(&self, t: usize) -> Result<ReturnsWindow> {
        if t > self.n_days() {
            return Err(Error::InvalidInput(format!(
                "window of {t} days exceeds the {} available",
                self.n_days()
            )));
        }
        let start = self.n_days() - t;
        let n = self.n_assets();
        ReturnsWindow::new(
            self.assets.clone(),
            self.dates[start..].to_vec(),
            self.returns[start * n..].to_vec(),
        )
    }

    fn means(&self) -> Vec<f64> {
        let t = self.n_days() as f64;
        let mut m = vec![0.0; self.n_assets()];
        for row in self.rows() {
            m.iter_mut().zip(row).for_each(|(a, r)| *a += r);
        }
        m.iter_mut().for_each(|a| *a /= t);
        m
    }

    /// Mean-centered returns, row-major.
    fn centered(&self) -> Vec<f64> {
        let m = self.means();
        self.rows()
            .flat_map(|row| row.iter().zip(&m).map(|(r, mi)| r - mi))
            .collect()
    }
}

/// Cross-product `XᵀX` of a row-major `t x n` matrix.
fn cross_product(x: &[f64], t: usize, n: usize) -> Vec<f64> {
    let mut s = vec![0.0; n * n];
    for row in x.chunks_exact(n).take(t) {
        for i in 0..n {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            let dst = &mut s[i * n..(i + 1) * n];
            for (d, rj) in dst.iter_mut().zip(row) {
                *d += ri * rj;
            }
        }
    }
    // Exact symmetry regardless of accumulation order.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (s[i * n + j] + s[j * n + i]);
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    s
}

/// Builds estimates from annual means and volatilities in percent plus a
/// correlation matrix.
pub fn estimates_from_moments(means_pct: &[f64], stds_pct: &[f64], corr: &[Vec<f64>]) -> Result<Estimates> {
    let n = means_pct.len();
    if stds_pct.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: stds_pct.len(),
        });
    }
    if corr.len() != n || corr.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput(format!("correlation must be {n}x{n}")));
    }
    if let Some(s) = stds_pct.iter().find(|s| **s < 0.0) {
        return Err(Error::InvalidInput(format!("negative volatility {s}")));
    }
    let mut sigma = vec![0.0; n * n];
    for i in 0..n {
        if (corr[i][i] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "correlation diagonal entry {i} is {}",
                corr[i][i]
            )));
        }
        for j in 0..n {
            let r = corr[i][j];
            if !(-1.0..=1.0).contains(&r) {
                return Err(Error::InvalidInput(format!(
                    "correlation ({i}, {j}) = {r} outside [-1, 1]"
                )));
            }
            if (r - corr[j][i]).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("correlation not symmetric at ({i}, {j})")));
            }
            sigma[i * n + j] = r * stds_pct[i] * stds_pct[j] / 1e4;
        }
    }
    Estimates::new(means_pct.iter().map(|m| m / 100.0).collect(), sigma)
}

/// The three-asset stocks / bonds / T-bills example (annual, 1980-1990).
pub fn toy_estimates() -> Estimates {
    let corr = vec![
        vec![1.0, 0.341, -0.081],
        vec![0.341, 1.0, 0.050],
        vec![-0.081, 0.050, 1.0],
    ];
    estimates_from_moments(&[15.876, 12.324, 8.748], &[16.603, 13.801, 0.759], &corr).expect("toy estimates are valid")
}

pub const TOY_ASSETS: [&str; 3] = ["stocks", "bonds", "t-bills"];

/// Reference weights of the toy example at moderate risk aversion.
pub const TOY_REFERENCE: [f64; 3] = [0.581, 0.228, 0.191];

/// Annualized sample mean and covariance (denominator `T - 1`).
pub fn sample_estimates(win: &ReturnsWindow, trading_days_per_year: f64) -> Result<Estimates> {
    let mu = sample_mean(win, trading_days_per_year);
    let sigma = sample_cov(win, trading_days_per_year);
    Estimates::new(mu, sigma)
}

fn sample_mean(win: &ReturnsWindow, days: f64) -> Vec<f64> {
    win.means().into_iter().map(|m| m * days).collect()
}

fn sample_cov(win: &ReturnsWindow, days: f64) -> Vec<f64> {
    let (t, n) = (win.n_days(), win.n_assets());
    let x = win.centered();
    let scale = days / (t as f64 - 1.0);
    cross_product(&x, t, n).into_iter().map(|v| v * scale).collect()
}

/// Result of Ledoit-Wolf shrinkage towards the average-variance identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Shrunk {
    /// Row-major annualized covariance.
    pub cov: Vec<f64>,
    /// Shrinkage intensity in `[0, 1]`.
    pub intensity: f64,
}

/// Ledoit-Wolf shrinkage of the sample covariance towards `v̄ I`, where `v̄` is
/// the mean sample variance.
///
/// The intensity is `min(b̄², d²) / d²` with `d² = ‖S - v̄I‖²/N` and
/// `b̄² = Σ_t ‖x_t x_tᵀ - S‖² / (N T²)`, computed on the maximum-likelihood
/// covariance `S = XᵀX / T` of the centered returns. A sample covariance that
/// already equals its target gets intensity 0.
pub fn ledoit_wolf_cov(win: &ReturnsWindow, trading_days_per_year: f64) -> Result<Shrunk> {
    let (t, n) = (win.n_days(), win.n_assets());
    let x = win.centered();
    let mut s_ml = cross_product(&x, t, n);
    s_ml.iter_mut().for_each(|v| *v /= t as f64);

    let trace_mean = (0..n).map(|i| s_ml[i * n + i]).sum::<f64>() / n as f64;
    let d2 = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let target = if i == j { trace_mean } else { 0.0 };
            let diff = s_ml[i * n + j] - target;
            diff * diff
        })
        .sum::<f64>()
        / n as f64;

    // ‖x xᵀ - S‖² = ‖x‖⁴ - 2 xᵀSx + ‖S‖²
    let s_norm2: f64 = s_ml.iter().map(|v| v * v).sum();
    let mut b_bar2 = 0.0;
    for row in x.chunks_exact(n) {
        let xx: f64 = row.iter().map(|v| v * v).sum();
        let xsx: f64 = s_ml
            .chunks_exact(n)
            .zip(row)
            .map(|(srow, xi)| xi * srow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>())
            .sum();
        b_bar2 += (xx * xx - 2.0 * xsx + s_norm2).max(0.0);
    }
    b_bar2 /= n as f64 * (t as f64) * (t as f64);

    let relative = d2 / s_norm2.max(f64::MIN_POSITIVE);
    let intensity = if d2 <= 0.0 || relative < 1e-24 {
        0.0
    } else {
        (b_bar2.min(d2) / d2).clamp(0.0, 1.0)
    };

    let mut cov = sample_cov(win, trading_days_per_year);
    let v_bar = (0..n).map(|i| cov[i * n + i]).sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { v_bar } else { 0.0 };
            let v = &mut cov[i * n + j];
            *v = if intensity == 1.0 {
                target
            } else {
                (1.0 - intensity) * *v + intensity * target
            };
        }
    }
    Ok(Shrunk { cov, intensity })
}

/// Source of the market return series used for CAPM betas.
#[derive(Debug, Clone, PartialEq)]
pub enum MarketProxy {
    /// Equal-weighted average of the window's columns.
    EqualWeighted,
    /// Capitalization-weighted average of the window's columns.
    CapWeighted(Vec<f64>),
    /// An externally supplied daily series aligned with the window.
    External(Vec<f64>),
}

impl MarketProxy {
    pub fn series(&self, win: &ReturnsWindow) -> Result<Vec<f64>> {
        let n = win.n_assets();
        match self {
            MarketProxy::EqualWeighted => Ok(win.rows().map(|r| r.iter().sum::<f64>() / n as f64).collect()),
            MarketProxy::CapWeighted(caps) => {
                if caps.len() != n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        actual: caps.len(),
                    });
                }
                let total: f64 = caps.iter().sum();
                Ok(win
                    .rows()
                    .map(|r| r.iter().zip(caps).map(|(x, c)| x * c).sum::<f64>() / total)
                    .collect())
            }
            MarketProxy::External(series) => {
                // An external series may be longer than a trailing window; align on the end.
                if series.len() < win.n_days() {
                    return Err(Error::DimensionMismatch {
                        expected: win.n_days(),
                        actual: series.len(),
                    });
                }
                Ok(series[series.len() - win.n_days()..].to_vec())
            }
        }
    }
}

/// CAPM expected returns `rf + β_i (μ_m - rf)` with betas regressed on `market`.
pub fn capm_expected_returns(
    win: &ReturnsWindow,
    market: &[f64],
    rf: f64,
    trading_days_per_year: f64,
) -> Result<Vec<f64>> {
    let t = win.n_days();
    if market.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            actual: market.len(),
        });
    }
    let m_mean = market.iter().sum::<f64>() / t as f64;
    let m_dev: Vec<f64> = market.iter().map(|m| m - m_mean).collect();
    let m_var: f64 = m_dev.iter().map(|d| d * d).sum();
    let scale = market.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    if !(m_var > t as f64 * (1e-12 * scale).powi(2)) {
        return Err(Error::Numerical("market return series has zero variance".into()));
    }
    let x = win.centered();
    let n = win.n_assets();
    let mut cov = vec![0.0; n];
    for (row, md) in x.chunks_exact(n).zip(&m_dev) {
        cov.iter_mut().zip(row).for_each(|(c, xi)| *c += xi * md);
    }
    let market_annual = m_mean * trading_days_per_year;
    Ok(cov
        .into_iter()
        .map(|c| rf + (c / m_var) * (market_annual - rf))
        .collect())
}

/// Estimates covariance from a returns window.
pub trait CovarianceEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn covariance(&self, win: &ReturnsWindow, trading_days_per_year: f64) -> Result<Vec<f64>>;
}

/// Estimates the expected-return vector from a returns window.
pub trait ReturnModel: Send + Sync {
    fn name(&self) -> &'static str;
    fn expected_returns(&self, win: &ReturnsWindow, trading_days_per_year: f64) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SampleCovariance;

impl CovarianceEstimator for SampleCovariance {
    fn name(&self) -> &'static str {
        "sample"
    }
    fn covariance(&self, win: &ReturnsWindow, days: f64) -> Result<Vec<f64>> {
        Ok(sample_cov(win, days))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LedoitWolf;

impl CovarianceEstimator for LedoitWolf {
    fn name(&self) -> &'static str {
        "ledoit-wolf"
    }
    fn covariance(&self, win: &ReturnsWindow, days: f64) -> Result<Vec<f64>> {
        Ok(ledoit_wolf_cov(win, days)?.cov)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SampleMean;

impl ReturnModel for SampleMean {
    fn name(&self) -> &'static str {
        "sample"
    }
    fn expected_returns(&self, win: &ReturnsWindow, days: f64) -> Result<Vec<f64>> {
        Ok(sample_mean(win, days))
    }
}

#[derive(Debug, Clone)]
pub struct Capm {
    pub market: MarketProxy,
    pub rf: f64,
}

impl ReturnModel for Capm {
    fn name(&self) -> &'static str {
        "capm"
    }
    fn expected_returns(&self, win: &ReturnsWindow, days: f64) -> Result<Vec<f64>> {
        let market = self.market.series(win)?;
        capm_expected_returns(win, &market, self.rf, days)
    }
}

/// A return model paired with a covariance estimator.
pub struct EstimatorSettings {
    pub returns: Box<dyn ReturnModel>,
    pub covariance: Box<dyn CovarianceEstimator>,
    pub trading_days_per_year: f64,
}

impl EstimatorSettings {
    pub fn estimate(&self, win: &ReturnsWindow) -> Result<Estimates> {
        let mu = self.returns.expected_returns(win, self.trading_days_per_year)?;
        let sigma = self.covariance.covariance(win, self.trading_days_per_year)?;
        Estimates::new(mu, sigma)
    }

    /// Ledoit-Wolf covariance with CAPM means on an equal-weighted market proxy.
    pub fn shrunk_capm(rf: f64) -> Self {
        EstimatorSettings {
            returns: Box::new(Capm {
                market: MarketProxy::EqualWeighted,
                rf,
            }),
            covariance: Box::new(LedoitWolf),
            trading_days_per_year: DEFAULT_TRADING_DAYS,
        }
    }
}

/// Cap-weighted CAPM market proxy for `universe`.
pub fn cap_weighted(universe: &AssetUniverse) -> MarketProxy {
    MarketProxy::CapWeighted(universe.market_cap().to_vec())
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn dates(t: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        (0..t).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    pub fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("a{i}")).collect()
    }

    pub fn random_window(t: usize, n: usize, seed: u64) -> ReturnsWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let returns = (0..t * n).map(|_| rng.random_range(-0.05..0.05)).collect();
        ReturnsWindow::new(names(n), dates(t), returns).unwrap()
    }

    pub fn window_from_columns(cols: &[Vec<f64>]) -> ReturnsWindow {
        let t = cols[0].len();
        let n = cols.len();
        let returns = (0..t).flat_map(|r| cols.iter().map(move |c| c[r])).collect();
        ReturnsWindow::new(names(n), dates(t), returns).unwrap()
    }
}
