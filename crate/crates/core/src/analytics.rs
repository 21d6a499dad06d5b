//! Archive metrics, convex-hull surfaces and the re-estimation robustness sweep.

use serde::{Deserialize, Serialize};

use crate::archive::{Archive, EliteRecord};
use crate::error::{Error, Result};
use crate::estimation::{EstimatorSettings, ReturnsWindow};
use crate::fitness::{in_region, Reference};
use crate::optimizer::ReferenceRule;
use crate::types::{risk_return, risk_return_raw, sharpe_of};

/// Fraction of all `M` niches whose elite is near-optimal.
pub fn modified_coverage(a: &Archive) -> f64 {
    a.near_optimal_count() as f64 / a.niches() as f64
}

fn min_max(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
    })
}

/// `(QDScore1, QDScoreMOD)`: min-max normalized fitness summed over all
/// elites and over near-optimal elites. Both use the full archive's range;
/// a zero range makes every normalized term 1.
pub fn qd_scores(a: &Archive) -> Result<(f64, f64)> {
    let (lo, hi) = min_max(a.iter().map(|(_, r)| r.fitness))
        .ok_or_else(|| Error::InvalidInput("QD-score of an empty archive".into()))?;
    let range = hi - lo;
    let norm = |f: f64| if range > 0.0 { (f - lo) / range } else { 1.0 };
    let mut all = 0.0;
    let mut near = 0.0;
    for (_, r) in a.iter() {
        let v = norm(r.fitness);
        all += v;
        if r.near_optimal {
            near += v;
        }
    }
    Ok((all, near))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub threshold: f64,
    pub count: usize,
    pub proportion: f64,
}

fn profile(fitnesses: &[f64], thresholds: &[f64]) -> Vec<ProfilePoint> {
    let denom = fitnesses.len().max(1) as f64;
    thresholds
        .iter()
        .map(|&t| {
            let count = fitnesses.iter().filter(|f| **f >= t).count();
            ProfilePoint {
                threshold: t,
                count,
                proportion: count as f64 / denom,
            }
        })
        .collect()
}

/// `n` evenly spaced thresholds spanning the range of `fitnesses`.
pub fn threshold_grid(fitnesses: &[f64], n: usize) -> Vec<f64> {
    match min_max(fitnesses.iter().copied()) {
        None => Vec::new(),
        Some((lo, hi)) if n <= 1 || hi == lo => vec![lo],
        Some((lo, hi)) => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn split_fitness(a: &Archive) -> (Vec<f64>, Vec<f64>) {
    let mut other = Vec::new();
    let mut near = Vec::new();
    for (_, r) in a.iter() {
        if r.near_optimal {
            near.push(r.fitness);
        } else {
            other.push(r.fitness);
        }
    }
    (other, near)
}

/// AP1 over non-near-optimal elites and AP2 over near-optimal ones, at the
/// same ascending thresholds.
pub fn archive_profiles(a: &Archive, thresholds: &[f64]) -> Result<(Vec<ProfilePoint>, Vec<ProfilePoint>)> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("profile thresholds must be ascending".into()));
    }
    let (other, near) = split_fitness(a);
    Ok((profile(&other, thresholds), profile(&near, thresholds)))
}

/// AP1 and AP2 each on a 100-point grid spanning its own subset's fitness range.
pub fn default_profiles(a: &Archive) -> (Vec<ProfilePoint>, Vec<ProfilePoint>) {
    let (other, near) = split_fitness(a);
    (
        profile(&other, &threshold_grid(&other, 100)),
        profile(&near, &threshold_grid(&near, 100)),
    )
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull vertices in counter-clockwise order (monotone chain), with
/// collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let twice: f64 = (0..poly.len())
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice.abs()
}

/// Area of the convex hull of `points`; zero for fewer than three points or
/// collinear input.
pub fn hull_area_2d(points: &[[f64; 2]]) -> f64 {
    polygon_area(&convex_hull(points))
}

/// Hull area of three-asset portfolios in the `(w1, w2)` coordinate plane.
///
/// The unit-sum constraint makes the points coplanar; dropping the third
/// weight projects the simplex face onto a right triangle of area 1/2. This
/// is the scale on which published hull surfaces for this problem are quoted.
/// The true in-plane area is `√3` times larger (see [`simplex_plane_area`]).
pub fn weight_hull_area_3assets<'a>(portfolios: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let pts = portfolios
        .into_iter()
        .map(|w| {
            if w.len() != 3 {
                return Err(Error::DimensionMismatch {
                    expected: 3,
                    actual: w.len(),
                });
            }
            Ok([w[0], w[1]])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hull_area_2d(&pts))
}

/// In-plane hull area of three-asset portfolios, measured in the orthonormal
/// basis `(1,-1,0)/√2`, `(1,1,-2)/√6` of the plane `Σx = 1`.
pub fn simplex_plane_area<'a>(portfolios: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let (s2, s6) = (2f64.sqrt(), 6f64.sqrt());
    let pts = portfolios
        .into_iter()
        .map(|w| {
            if w.len() != 3 {
                return Err(Error::DimensionMismatch {
                    expected: 3,
                    actual: w.len(),
                });
            }
            Ok([(w[0] - w[1]) / s2, (w[0] + w[1] - 2.0 * w[2]) / s6])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(hull_area_2d(&pts))
}

/// Hull area of the records' `(σ, μ)` points in decimal units.
pub fn rr_hull_area<'a>(records: impl IntoIterator<Item = &'a EliteRecord>) -> f64 {
    let pts: Vec<[f64; 2]> = records.into_iter().map(|r| [r.rr.sigma, r.rr.mu]).collect();
    hull_area_2d(&pts)
}

/// Mean and population standard deviation of the records' Sharpe ratios.
pub fn sharpe_stats<'a>(records: impl IntoIterator<Item = &'a EliteRecord>, rf: f64) -> Result<(f64, f64)> {
    let values = records
        .into_iter()
        .map(|r| sharpe_of(r.rr, rf))
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        return Err(Error::InvalidInput("Sharpe statistics of no portfolios".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub niches: usize,
    pub filled: usize,
    pub near_optimal: usize,
    pub eval_count: u64,
    pub coverage_mod: f64,
    pub qd_score1: f64,
    pub qd_score_mod: f64,
    pub ap1: Vec<ProfilePoint>,
    pub ap2: Vec<ProfilePoint>,
    pub sharpe_mean: Option<f64>,
    pub sharpe_std: Option<f64>,
    /// Near-optimal weight hull in the `(w1, w2)` plane; three assets only.
    pub hull_area_weights: Option<f64>,
    /// Near-optimal `(σ, μ)` hull in decimal units.
    pub hull_area_rr: Option<f64>,
}

impl MetricsReport {
    pub fn compute(a: &Archive, rf: f64) -> Result<Self> {
        let (qd_score1, qd_score_mod) = qd_scores(a)?;
        let (ap1, ap2) = default_profiles(a);
        let near: Vec<&EliteRecord> = a.near_optimal_records().collect();
        let (sharpe_mean, sharpe_std) = match sharpe_stats(near.iter().copied(), rf) {
            Ok((m, s)) => (Some(m), Some(s)),
            Err(_) => (None, None),
        };
        let three_assets = a.iter().next().map(|(_, r)| r.weights.len() == 3).unwrap_or(false);
        let hull_area_weights = if three_assets && near.len() >= 3 {
            Some(weight_hull_area_3assets(near.iter().map(|r| r.weights.weights()))?)
        } else {
            None
        };
        let hull_area_rr = (near.len() >= 3).then(|| rr_hull_area(near.iter().copied()));
        Ok(MetricsReport {
            niches: a.niches(),
            filled: a.filled(),
            near_optimal: a.near_optimal_count(),
            eval_count: a.eval_count(),
            coverage_mod: modified_coverage(a),
            qd_score1,
            qd_score_mod,
            ap1,
            ap2,
            sharpe_mean,
            sharpe_std,
            hull_area_weights,
            hull_area_rr,
        })
    }

    /// Tidy `metric,param,value` rows. The risk-return hull is reported ×10³.
    pub fn tidy_rows(&self) -> Vec<(String, String, f64)> {
        let mut rows = vec![
            ("niches".into(), String::new(), self.niches as f64),
            ("filled".into(), String::new(), self.filled as f64),
            ("near_optimal".into(), String::new(), self.near_optimal as f64),
            ("eval_count".into(), String::new(), self.eval_count as f64),
            ("coverage_mod".into(), String::new(), self.coverage_mod),
            ("qd_score1".into(), String::new(), self.qd_score1),
            ("qd_score_mod".into(), String::new(), self.qd_score_mod),
        ];
        let optional = [
            ("sharpe_mean", self.sharpe_mean),
            ("sharpe_std", self.sharpe_std),
            ("hull_area_weights", self.hull_area_weights),
            ("hull_area_rr_x1e3", self.hull_area_rr.map(|v| v * 1e3)),
        ];
        rows.extend(
            optional
                .into_iter()
                .filter_map(|(k, v)| v.map(|v| (k.to_string(), String::new(), v))),
        );
        for (name, curve) in [("ap1", &self.ap1), ("ap2", &self.ap2)] {
            for p in curve {
                rows.push((name.into(), format!("{}", p.threshold), p.proportion));
                rows.push((format!("{name}_count"), format!("{}", p.threshold), p.count as f64));
            }
        }
        rows
    }
}

/// Mean modified coverage over a grid of window lengths and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub t_grid: Vec<usize>,
    pub c_grid: Vec<f64>,
    /// `coverage[i][j]` for `t_grid[i]`, `c_grid[j]`.
    pub coverage: Vec<Vec<f64>>,
}

/// Re-estimates from the trailing `T` rows, re-derives the reference portfolio
/// and re-tests every archived portfolio for near-optimality at each `c`.
/// The archive itself is left untouched.
pub fn robustness_sweep(
    a: &Archive,
    data: &ReturnsWindow,
    t_grid: &[usize],
    c_grid: &[f64],
    settings: &EstimatorSettings,
    rule: &ReferenceRule,
    rf: f64,
) -> Result<SweepResult> {
    if let Some(t) = t_grid.iter().find(|t| **t > data.n_days()) {
        return Err(Error::InvalidInput(format!(
            "window of {t} days exceeds the {} available",
            data.n_days()
        )));
    }
    if let Some(c) = c_grid.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
        return Err(Error::InvalidInput(format!("c must lie in (0, 1), got {c}")));
    }
    let coverage = t_grid
        .iter()
        .map(|&t| {
            let est = settings.estimate(&data.trailing(t)?)?;
            let w0 = rule.resolve(&est, rf)?;
            let rr0 = risk_return(&w0, &est)?;
            let points = a
                .iter()
                .map(|(_, r)| risk_return_raw(r.weights.weights(), &est))
                .collect::<Result<Vec<_>>>()?;
            Ok(c_grid
                .iter()
                .map(|&c| points.iter().filter(|p| in_region(**p, rr0, c)).count() as f64 / a.niches() as f64)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(SweepResult {
        t_grid: t_grid.to_vec(),
        c_grid: c_grid.to_vec(),
        coverage,
    })
}

/// Coverage of `a` after swapping in `reference`.
pub fn coverage_under(a: &Archive, reference: Reference) -> f64 {
    modified_coverage(&a.with_reference(reference))
}
