//! Synthetic equity universes with a market factor, sector factors and
//! idiosyncratic noise. Used where real constituent data is unavailable.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::error::{Error, Result};
use crate::estimation::ReturnsWindow;
use crate::types::AssetUniverse;

/// Daily return model parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthParams {
    /// Market factor drift and volatility (daily).
    pub market_drift: f64,
    pub market_vol: f64,
    /// Sector factor volatility (daily, zero drift).
    pub sector_vol: f64,
    /// Idiosyncratic volatility (daily).
    pub idio_vol: f64,
    /// Per-asset drift offsets are `N(0, alpha_sd)`.
    pub alpha_sd: f64,
    /// Market betas are uniform on `[beta_lo, beta_hi]`.
    pub beta_lo: f64,
    pub beta_hi: f64,
    /// Log-normal parameters of market capitalization.
    pub log_cap_mean: f64,
    pub log_cap_sd: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            market_drift: 4e-4,
            market_vol: 0.01,
            sector_vol: 0.006,
            idio_vol: 0.015,
            alpha_sd: 2e-4,
            beta_lo: 0.6,
            beta_hi: 1.4,
            log_cap_mean: 23.0,
            log_cap_sd: 1.0,
        }
    }
}

/// `n` consecutive weekdays starting at 2020-01-02.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2020, 1, 2).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Asset `i` belongs to sector `i mod n_sectors`, so every sector is non-empty.
pub fn generate_synthetic_universe(
    n_assets: usize,
    n_sectors: usize,
    t_days: usize,
    seed: u64,
) -> Result<(ReturnsWindow, AssetUniverse)> {
    generate_with(n_assets, n_sectors, t_days, seed, &SynthParams::default())
}

pub fn generate_with(
    n_assets: usize,
    n_sectors: usize,
    t_days: usize,
    seed: u64,
    p: &SynthParams,
) -> Result<(ReturnsWindow, AssetUniverse)> {
    if n_sectors == 0 || n_assets < n_sectors {
        return Err(Error::InvalidInput(format!(
            "need n_assets >= n_sectors >= 1, got {n_assets} assets and {n_sectors} sectors"
        )));
    }
    let bad = |e: rand_distr::NormalError| Error::InvalidInput(format!("synthetic parameters: {e}"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).map_err(bad)?;
    let caps = LogNormal::new(p.log_cap_mean, p.log_cap_sd).map_err(bad)?;

    let sector_of: Vec<usize> = (0..n_assets).map(|i| i % n_sectors).collect();
    let betas: Vec<f64> = (0..n_assets).map(|_| rng.random_range(p.beta_lo..=p.beta_hi)).collect();
    let alphas: Vec<f64> = (0..n_assets)
        .map(|_| p.alpha_sd * std_normal.sample(&mut rng))
        .collect();
    let market_cap: Vec<f64> = (0..n_assets).map(|_| caps.sample(&mut rng)).collect();

    let mut returns = Vec::with_capacity(t_days * n_assets);
    let mut sector_shock = vec![0.0; n_sectors];
    for _ in 0..t_days {
        let market = p.market_drift + p.market_vol * std_normal.sample(&mut rng);
        for s in sector_shock.iter_mut() {
            *s = p.sector_vol * std_normal.sample(&mut rng);
        }
        for i in 0..n_assets {
            let idio = p.idio_vol * std_normal.sample(&mut rng);
            returns.push(alphas[i] + betas[i] * market + sector_shock[sector_of[i]] + idio);
        }
    }

    let names: Vec<String> = (0..n_assets).map(|i| format!("A{:03}", i + 1)).collect();
    let sector_names: Vec<String> = (0..n_sectors).map(|s| format!("S{:02}", s + 1)).collect();
    let universe = AssetUniverse::new(names.clone(), sector_of, market_cap, sector_names)?;
    let window = ReturnsWindow::new(names, business_days(t_days), returns)?;
    Ok((window, universe))
}
