//! Long-only mean-variance optimization on the simplex.
//!
//! `solve_mv` maximizes `wᵀμ - γ wᵀΣw` with an away-step Frank-Wolfe method.
//! The Frank-Wolfe duality gap certifies the objective to within `tol`. Every
//! so often the active set is handed to an exact KKT solve, which usually
//! finishes the job in a handful of iterations.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{dot, risk_return, sharpe_of, Estimates, Portfolio, RiskReturnPoint};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MAX_ITERATIONS: usize = 50_000;
pub const GAMMA_MIN: f64 = 1e-3;
pub const GAMMA_MAX: f64 = 1e4;
const POLISH_EVERY: usize = 25;

/// Mean-variance objective `wᵀμ - γ wᵀΣw`.
pub fn mv_objective(w: &[f64], gamma: f64, est: &Estimates) -> f64 {
    est.expected_return(w) - gamma * est.variance(w)
}

/// Solver state for minimizing `γ wᵀΣw - μᵀw` over the simplex.
struct FrankWolfe<'a> {
    est: &'a Estimates,
    mu: &'a [f64],
    gamma: f64,
    w: Vec<f64>,
    sw: Vec<f64>,
}

impl<'a> FrankWolfe<'a> {
    fn new(est: &'a Estimates, mu: &'a [f64], gamma: f64) -> Self {
        // Start from the best vertex of the linear part.
        let n = est.dim();
        let start = (0..n)
            .map(|i| (i, gamma * est.cov(i, i) - mu[i]))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut w = vec![0.0; n];
        w[start] = 1.0;
        let sw = est.sigma_times(&w);
        FrankWolfe { est, mu, gamma, w, sw }
    }

    fn gradient(&self) -> Vec<f64> {
        self.sw
            .iter()
            .zip(self.mu)
            .map(|(s, m)| 2.0 * self.gamma * s - m)
            .collect()
    }

    fn objective(&self) -> f64 {
        self.gamma * dot(&self.w, &self.sw) - dot(self.mu, &self.w)
    }

    fn gap(&self) -> f64 {
        let g = self.gradient();
        let gw = dot(&g, &self.w);
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        gw - gmin
    }

    /// One away-step Frank-Wolfe iteration; returns the gap before the step.
    fn step(&mut self) -> f64 {
        let n = self.w.len();
        let g = self.gradient();
        let gw = dot(&g, &self.w);
        let (s, gs) = g
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        let away = (0..n)
            .filter(|&i| self.w[i] > 0.0)
            .max_by(|&a, &b| g[a].total_cmp(&g[b]).then(b.cmp(&a)))
            .expect("support non-empty");
        let fw_gap = gw - gs;
        let away_gap = g[away] - gw;
        let wsw = dot(&self.w, &self.sw);

        if fw_gap >= away_gap || self.w[away] >= 1.0 {
            // d = e_s - w
            let curvature = self.gamma * (self.est.cov(s, s) - 2.0 * self.sw[s] + wsw);
            let t = if curvature > 0.0 {
                (fw_gap / (2.0 * curvature)).min(1.0)
            } else {
                1.0
            };
            if t <= 0.0 {
                return fw_gap;
            }
            for i in 0..n {
                self.w[i] *= 1.0 - t;
                self.sw[i] = (1.0 - t) * self.sw[i] + t * self.est.cov(i, s);
            }
            self.w[s] += t;
        } else {
            // d = w - e_away
            let wa = self.w[away];
            let t_max = wa / (1.0 - wa);
            let curvature = self.gamma * (wsw - 2.0 * self.sw[away] + self.est.cov(away, away));
            let t = if curvature > 0.0 {
                (away_gap / (2.0 * curvature)).min(t_max)
            } else {
                t_max
            };
            if t <= 0.0 {
                return fw_gap;
            }
            for i in 0..n {
                self.w[i] *= 1.0 + t;
                self.sw[i] = (1.0 + t) * self.sw[i] - t * self.est.cov(i, away);
            }
            self.w[away] -= t;
            if t == t_max || self.w[away] < 0.0 {
                self.w[away] = 0.0;
            }
        }
        fw_gap
    }

    fn refresh(&mut self) {
        let sum: f64 = self.w.iter().sum();
        self.w.iter_mut().for_each(|x| {
            if *x < 0.0 {
                *x = 0.0
            }
            *x /= sum
        });
        self.sw = self.est.sigma_times(&self.w);
    }

    /// Exact equality-constrained solve on the current support. Kept only if it
    /// stays feasible and does not worsen the objective.
    fn polish(&mut self) {
        if self.gamma <= 0.0 {
            return;
        }
        let support: Vec<usize> = (0..self.w.len()).filter(|&i| self.w[i] > 0.0).collect();
        let k = support.len();
        let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
        let mut b = DVector::<f64>::zeros(k + 1);
        for (r, &i) in support.iter().enumerate() {
            for (c, &j) in support.iter().enumerate() {
                a[(r, c)] = 2.0 * self.gamma * self.est.cov(i, j);
            }
            a[(r, k)] = 1.0;
            a[(k, r)] = 1.0;
            b[r] = self.mu[i];
        }
        b[k] = 1.0;
        let Some(x) = a.lu().solve(&b) else { return };
        if x.iter().take(k).any(|v| !v.is_finite() || *v < 0.0) {
            return;
        }
        let mut cand = vec![0.0; self.w.len()];
        for (r, &i) in support.iter().enumerate() {
            cand[i] = x[r];
        }
        let sum: f64 = cand.iter().sum();
        cand.iter_mut().for_each(|v| *v /= sum);
        let prev = (self.w.clone(), self.sw.clone(), self.objective());
        self.w = cand;
        self.sw = self.est.sigma_times(&self.w);
        if self.objective() > prev.2 {
            self.w = prev.0;
            self.sw = prev.1;
        }
    }
}

fn frank_wolfe(est: &Estimates, mu: &[f64], gamma: f64, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!("risk aversion must be >= 0, got {gamma}")));
    }
    let mut fw = FrankWolfe::new(est, mu, gamma);
    let mut gap = f64::INFINITY;
    for it in 0..MAX_ITERATIONS {
        if it % 100 == 99 {
            fw.refresh();
        }
        if it % POLISH_EVERY == POLISH_EVERY - 1 {
            fw.polish();
        }
        gap = fw.gap();
        if gap <= tol {
            fw.refresh();
            return Ok(fw.w);
        }
        fw.step();
    }
    fw.refresh();
    let final_gap = fw.gap();
    if final_gap <= tol {
        return Ok(fw.w);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        gap: final_gap.min(gap),
    })
}

/// Maximizes `wᵀμ - γ wᵀΣw` over long-only fully invested portfolios.
pub fn solve_mv(gamma: f64, est: &Estimates, tol: f64) -> Result<Portfolio> {
    let w = frank_wolfe(est, est.mu(), gamma, tol)?;
    Portfolio::normalized(w).ok_or_else(|| Error::Numerical("solver produced zero weights".into()))
}

/// The global minimum-variance long-only portfolio.
pub fn min_variance(est: &Estimates, tol: f64) -> Result<Portfolio> {
    let zeros = vec![0.0; est.dim()];
    let w = frank_wolfe(est, &zeros, 1.0, tol)?;
    Portfolio::normalized(w).ok_or_else(|| Error::Numerical("solver produced zero weights".into()))
}

/// Logarithmically spaced risk-aversion values.
pub fn gamma_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Portfolio maximizing `(μ - rf) / σ` over the simplex.
///
/// Solves `min yᵀΣy` subject to `yᵀ(μ - rf) = 1, y >= 0` by accelerated
/// projected gradient followed by an exact KKT solve on the detected support,
/// then rescales `y` onto the simplex. Falls back to a scan over the
/// risk-aversion grid when the transformed problem cannot be solved.
pub fn max_sharpe(est: &Estimates, rf: f64, tol: f64) -> Result<Portfolio> {
    let excess: Vec<f64> = est.mu().iter().map(|m| m - rf).collect();
    if excess.iter().all(|e| *e <= 0.0) {
        return Err(Error::InvalidInput(
            "no asset has expected return above the risk-free rate; maximum Sharpe is undefined".into(),
        ));
    }
    let candidate = tangency_qp(est, &excess)
        .and_then(Portfolio::normalized)
        .filter(|p| risk_return(p, est).map(|rr| rr.sigma > 0.0).unwrap_or(false));
    match candidate {
        Some(p) => Ok(p),
        None => max_sharpe_scan(est, rf, tol),
    }
}

/// Best Sharpe ratio among grid solutions of `solve_mv` and the vertices.
pub fn max_sharpe_scan(est: &Estimates, rf: f64, tol: f64) -> Result<Portfolio> {
    let n = est.dim();
    let mut candidates: Vec<Portfolio> = gamma_grid(200, GAMMA_MIN, GAMMA_MAX)
        .into_par_iter()
        .map(|g| solve_mv(g, est, tol))
        .collect::<Result<_>>()?;
    candidates.extend((0..n).map(|i| Portfolio::vertex(n, i)));
    candidates
        .into_iter()
        .filter_map(|p| {
            let s = risk_return(&p, est).ok().and_then(|rr| sharpe_of(rr, rf).ok())?;
            Some((p, s))
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p)
        .ok_or(Error::ZeroVolatility)
}

/// Euclidean projection onto `{y >= 0, aᵀy = 1}`.
fn project_ratio_set(z: &[f64], a: &[f64]) -> Vec<f64> {
    let level = |nu: f64| -> f64 { z.iter().zip(a).map(|(zi, ai)| ai * (zi + nu * ai).max(0.0)).sum() };
    let (mut lo, mut hi) = (-1.0, 1.0);
    while level(hi) < 1.0 {
        hi *= 2.0;
    }
    while level(lo) > 1.0 {
        lo *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if level(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    z.iter().zip(a).map(|(zi, ai)| (zi + nu * ai).max(0.0)).collect()
}

fn tangency_qp(est: &Estimates, excess: &[f64]) -> Option<Vec<f64>> {
    let n = est.dim();
    let sigma = DMatrix::from_row_slice(n, n, est.sigma());
    let lipschitz = 2.0 * sigma.symmetric_eigenvalues().max();
    if !(lipschitz > 0.0) {
        return None;
    }
    // Feasible start: best single asset scaled onto the constraint.
    let best = (0..n).max_by(|&a, &b| excess[a].total_cmp(&excess[b]))?;
    let mut y = vec![0.0; n];
    y[best] = 1.0 / excess[best];
    let mut y_prev = y.clone();
    let mut momentum = 1.0f64;
    let objective = |v: &[f64]| est.variance(v);
    let mut f_prev = objective(&y);
    for _ in 0..20_000 {
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_m;
        let look: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a + beta * (a - b)).collect();
        let grad = est.sigma_times(&look);
        let z: Vec<f64> = look.iter().zip(&grad).map(|(l, g)| l - 2.0 * g / lipschitz).collect();
        let y_new = project_ratio_set(&z, excess);
        let f_new = objective(&y_new);
        if f_new > f_prev {
            // Adaptive restart.
            momentum = 1.0;
            y_prev = y.clone();
            continue;
        }
        let change = y_new.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = y.iter().copied().fold(0.0, f64::max);
        let stalled = change <= 1e-15 * scale.max(1.0);
        if stalled && beta > 0.0 {
            // An extrapolated step can land back on the iterate; only a plain
            // projected-gradient step certifies a fixed point.
            momentum = 1.0;
            y_prev = y.clone();
            continue;
        }
        y_prev = std::mem::replace(&mut y, y_new);
        momentum = next_m;
        f_prev = f_new;
        if stalled {
            break;
        }
    }
    Some(tangency_kkt(est, excess, &y).unwrap_or(y))
}

/// Exact tangency solve on the support of `y`, accepted when it satisfies the
/// KKT conditions of the full problem.
fn tangency_kkt(est: &Estimates, excess: &[f64], y: &[f64]) -> Option<Vec<f64>> {
    let n = est.dim();
    let scale = y.iter().copied().fold(0.0, f64::max);
    let support: Vec<usize> = (0..n).filter(|&i| y[i] > 1e-10 * scale).collect();
    let k = support.len();
    let sub = DMatrix::from_fn(k, k, |r, c| est.cov(support[r], support[c]));
    let rhs = DVector::from_iterator(k, support.iter().map(|&i| excess[i]));
    let x = sub.lu().solve(&rhs)?;
    let norm = rhs.dot(&x);
    if !(norm > 0.0) {
        return None;
    }
    let ys = x / norm;
    if ys.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return None;
    }
    let mut out = vec![0.0; n];
    for (r, &i) in support.iter().enumerate() {
        out[i] = ys[r];
    }
    // Multiplier of the equality constraint: 2Σy = ν a on the support.
    let sy = est.sigma_times(&out);
    let nu = 2.0 / norm;
    let ok = (0..n)
        .filter(|i| !support.contains(i))
        .all(|i| 2.0 * sy[i] - nu * excess[i] >= -1e-12 * nu.abs().max(1.0));
    ok.then_some(out)
}

/// One point of the efficient frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub gamma: f64,
    pub weights: Portfolio,
    pub rr: RiskReturnPoint,
}

/// Frontier traced by `solve_mv` over a logarithmic γ grid, sorted by σ with
/// dominated points removed.
pub fn efficient_frontier(est: &Estimates, n_points: usize) -> Result<Vec<FrontierPoint>> {
    if n_points < 2 {
        return Err(Error::InvalidInput(format!(
            "frontier needs at least 2 points, got {n_points}"
        )));
    }
    let mut points: Vec<FrontierPoint> = gamma_grid(n_points, GAMMA_MIN, GAMMA_MAX)
        .into_par_iter()
        .map(|gamma| {
            let weights = solve_mv(gamma, est, DEFAULT_TOL)?;
            let rr = risk_return(&weights, est)?;
            Ok(FrontierPoint { gamma, weights, rr })
        })
        .collect::<Result<_>>()?;
    points.sort_by(|a, b| a.rr.sigma.total_cmp(&b.rr.sigma).then(b.rr.mu.total_cmp(&a.rr.mu)));
    let mut best_mu = f64::NEG_INFINITY;
    points.retain(|p| {
        let keep = p.rr.mu >= best_mu;
        best_mu = best_mu.max(p.rr.mu);
        keep
    });
    Ok(points)
}

/// Result of searching for the risk aversion that reproduces target weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma: f64,
    pub weights: Portfolio,
    /// Largest absolute per-asset weight difference from the target.
    pub max_abs_error: f64,
}

/// Finds the γ whose `solve_mv` portfolio is closest (L∞) to `target`.
pub fn fit_gamma(est: &Estimates, target: &Portfolio) -> Result<GammaFit> {
    if target.len() != est.dim() {
        return Err(Error::DimensionMismatch {
            expected: est.dim(),
            actual: target.len(),
        });
    }
    let error = |gamma: f64| -> Result<(f64, Portfolio)> {
        let w = solve_mv(gamma, est, DEFAULT_TOL)?;
        let e = w
            .weights()
            .iter()
            .zip(target.weights())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok((e, w))
    };
    let grid = gamma_grid(400, GAMMA_MIN, GAMMA_MAX);
    let errors: Vec<f64> = grid.par_iter().map(|&g| error(g).map(|e| e.0)).collect::<Result<_>>()?;
    let best = (0..grid.len())
        .min_by(|&a, &b| errors[a].total_cmp(&errors[b]))
        .expect("grid non-empty");
    // Golden-section refinement in log γ between the neighbours of the best grid point.
    let mut lo = grid[best.saturating_sub(1)].ln();
    let mut hi = grid[(best + 1).min(grid.len() - 1)].ln();
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = error(x1.exp())?.0;
    let mut f2 = error(x2.exp())?.0;
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = error(x1.exp())?.0;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = error(x2.exp())?.0;
        }
    }
    let refined = 0.5 * (lo + hi);
    let (e_ref, w_ref) = error(refined.exp())?;
    let (gamma, (max_abs_error, weights)) = if e_ref <= errors[best] {
        (refined.exp(), (e_ref, w_ref))
    } else {
        (grid[best], error(grid[best])?)
    };
    Ok(GammaFit {
        gamma,
        weights,
        max_abs_error,
    })
}

/// How the reference optimal portfolio is derived from a set of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceRule {
    MaxSharpe,
    Gamma(f64),
    Weights(Portfolio),
}

impl ReferenceRule {
    /// Parses `max-sharpe`, `gamma:<value>` or `weights:<w1>,<w2>,...`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("max-sharpe") {
            return Ok(ReferenceRule::MaxSharpe);
        }
        let bad = || Error::InvalidInput(format!("unrecognized reference rule '{s}'"));
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "gamma" => {
                let g: f64 = arg.trim().parse().map_err(|_| bad())?;
                if !(g.is_finite() && g >= 0.0) {
                    return Err(Error::InvalidInput(format!("gamma must be non-negative, got {g}")));
                }
                Ok(ReferenceRule::Gamma(g))
            }
            "weights" => {
                let w = arg
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ReferenceRule::Weights(Portfolio::new(w)?))
            }
            _ => Err(bad()),
        }
    }

    pub fn resolve(&self, est: &Estimates, rf: f64) -> Result<Portfolio> {
        match self {
            ReferenceRule::MaxSharpe => max_sharpe(est, rf, DEFAULT_TOL),
            ReferenceRule::Gamma(g) => solve_mv(*g, est, DEFAULT_TOL),
            ReferenceRule::Weights(w) if w.len() != est.dim() => Err(Error::DimensionMismatch {
                expected: est.dim(),
                actual: w.len(),
            }),
            ReferenceRule::Weights(w) => Ok(w.clone()),
        }
    }
}

impl std::fmt::Display for ReferenceRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceRule::MaxSharpe => write!(f, "max-sharpe"),
            ReferenceRule::Gamma(g) => write!(f, "gamma:{g}"),
            ReferenceRule::Weights(w) => {
                let parts: Vec<String> = w.weights().iter().map(|x| x.to_string()).collect();
                write!(f, "weights:{}", parts.join(","))
            }
        }
    }
}
