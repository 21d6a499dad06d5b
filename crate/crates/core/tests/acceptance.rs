//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails. Lines marked INFO are diagnostics, not criteria.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qdfolio_core::analytics::{hull_area_2d, robustness_sweep, MetricsReport};
use qdfolio_core::archive::EliteRecord;
use qdfolio_core::behavior::{uniform_simplex, BehaviorDescriptor, SimplexSampler};
use qdfolio_core::cvt::CvtPartition;
use qdfolio_core::engine::{recombine, run_qd_with, RunHooks};
use qdfolio_core::estimation::{ledoit_wolf_cov, toy_estimates, MarketProxy, DEFAULT_TRADING_DAYS, TOY_REFERENCE};
use qdfolio_core::io::{self, ArchiveContext};
use qdfolio_core::optimizer::{fit_gamma, max_sharpe, mv_objective, solve_mv, DEFAULT_TOL};
use qdfolio_core::registry::estimator_settings;
use qdfolio_core::selection::select_portfolio;
use qdfolio_core::synth::{business_days, generate_synthetic_universe};
use qdfolio_core::types::{risk_return, SIMPLEX_TOL};
use qdfolio_core::{
    run_qd, Archive, AssetUniverse, Error, Portfolio, QdConfig, Reference, ReferenceRule, ReturnsWindow,
    RiskReturnPoint,
};

struct Gate {
    failed: Vec<String>,
    passed: usize,
}

impl Gate {
    fn check(&mut self, id: &str, ok: bool, detail: impl AsRef<str>) {
        println!("{} {id}: {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
        if ok {
            self.passed += 1;
        } else {
            self.failed.push(id.to_string());
        }
    }

    fn info(&self, id: &str, detail: impl AsRef<str>) {
        println!("INFO {id}: {}", detail.as_ref());
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

// ------------------------------------------------------------------ toy runs

fn toy_universe() -> AssetUniverse {
    AssetUniverse::trivial(vec!["stocks".into(), "bonds".into(), "t-bills".into()]).unwrap()
}

fn toy_w0() -> Portfolio {
    Portfolio::new(TOY_REFERENCE.to_vec()).unwrap()
}

#[derive(Default)]
struct ToyStats {
    coverage: f64,
    sharpe: f64,
    hull: f64,
    s_surface_x1e3: f64,
    max_seconds: f64,
    runs: usize,
}

const TOY_SEEDS: u64 = 20;

fn toy_stats(fitness: &str, sampler: SimplexSampler) -> ToyStats {
    let est = toy_estimates();
    let universe = toy_universe();
    let mut s = ToyStats::default();
    for seed in 1..=TOY_SEEDS {
        let cfg = QdConfig {
            fitness: fitness.into(),
            sampler,
            seed,
            ..QdConfig::default()
        };
        let start = Instant::now();
        let out = run_qd(&cfg, &est, &universe, &toy_w0()).expect("toy run");
        s.max_seconds = s.max_seconds.max(start.elapsed().as_secs_f64());
        let m = MetricsReport::compute(&out.archive, 0.0).expect("metrics");
        s.coverage += m.coverage_mod;
        s.sharpe += m.sharpe_mean.unwrap_or(f64::NAN);
        s.hull += m.hull_area_weights.unwrap_or(f64::NAN);
        s.s_surface_x1e3 += m.hull_area_rr.unwrap_or(f64::NAN) * 1e3;
        s.runs += 1;
    }
    let k = s.runs as f64;
    s.coverage /= k;
    s.sharpe /= k;
    s.hull /= k;
    s.s_surface_x1e3 /= k;
    s
}

fn describe(s: &ToyStats) -> String {
    format!(
        "coverage {:.4}, sharpe {:.4}, hull {:.4}, S x1e3 {:.4} over {} seeds",
        s.coverage, s.sharpe, s.hull, s.s_surface_x1e3, s.runs
    )
}

fn criterion_1(g: &mut Gate) {
    let sampler = SimplexSampler::NormalizedUniform;
    let m4 = toy_stats("f2", sampler);
    let m3 = toy_stats("f1", sampler);
    g.info("1 sampler", "normalized-uniform for CVT training and initialization");
    g.info("1 M4", describe(&m4));
    g.info("1 M3", describe(&m3));

    g.check(
        "1.M4.hull",
        within(m4.hull, 0.1746, 0.01),
        format!("{:.4} vs 0.1746 +- 0.01", m4.hull),
    );
    g.check(
        "1.M4.s_surface",
        within(m4.s_surface_x1e3, 0.3882, 0.03),
        format!("{:.4} vs 0.3882 +- 0.03", m4.s_surface_x1e3),
    );
    g.check(
        "1.M4.sharpe",
        within(m4.sharpe, 1.2824, 0.02),
        format!("{:.4} vs 1.2824 +- 0.02", m4.sharpe),
    );
    g.check(
        "1.M4.coverage",
        within(m4.coverage, 0.4907, 0.03),
        format!("{:.4} vs 0.4907 +- 0.03", m4.coverage),
    );
    g.check(
        "1.M3.hull",
        within(m3.hull, 0.1529, 0.01),
        format!("{:.4} vs 0.1529 +- 0.01", m3.hull),
    );
    g.check(
        "1.M3.sharpe",
        within(m3.sharpe, 1.2696, 0.02),
        format!("{:.4} vs 1.2696 +- 0.02", m3.sharpe),
    );
    g.check(
        "1.M3.s_surface",
        within(m3.s_surface_x1e3, 0.3652, 0.03),
        format!("{:.4} vs 0.3652 +- 0.03", m3.s_surface_x1e3),
    );
    g.check(
        "1.order.hull",
        m4.hull > m3.hull,
        format!("M4 {:.4} > M3 {:.4}", m4.hull, m3.hull),
    );
    g.check(
        "1.order.sharpe",
        m4.sharpe > m3.sharpe,
        format!("M4 {:.4} > M3 {:.4}", m4.sharpe, m3.sharpe),
    );
    g.check(
        "1.order.m1",
        m4.hull > 0.0948 && m3.hull > 0.0948,
        format!("M4 {:.4} and M3 {:.4} > 0.0948", m4.hull, m3.hull),
    );
    let slowest = m4.max_seconds.max(m3.max_seconds);
    g.check(
        "1.runtime",
        slowest <= 120.0,
        format!("slowest run {slowest:.2}s <= 120s, single-threaded"),
    );

    let d4 = toy_stats("f2", SimplexSampler::Dirichlet);
    let d3 = toy_stats("f1", SimplexSampler::Dirichlet);
    g.info("1 M4 dirichlet", describe(&d4));
    g.info("1 M3 dirichlet", describe(&d3));
}

// --------------------------------------------------------- toy arithmetic

fn criterion_2(g: &mut Gate) {
    let means = [0.15876, 0.12324, 0.08748];
    let stds = [0.16603, 0.13801, 0.00759];
    let rho = [[1.0, 0.341, -0.081], [0.341, 1.0, 0.050], [-0.081, 0.050, 1.0]];
    let w = TOY_REFERENCE;
    let mu: f64 = (0..3).map(|i| w[i] * means[i]).sum();
    let var = (0..3).map(|i| (w[i] * stds[i]).powi(2)).sum::<f64>()
        + 2.0 * w[0] * w[1] * rho[0][1] * stds[0] * stds[1]
        + 2.0 * w[0] * w[2] * rho[0][2] * stds[0] * stds[2]
        + 2.0 * w[1] * w[2] * rho[1][2] * stds[1] * stds[2];
    let oracle = RiskReturnPoint { mu, sigma: var.sqrt() };
    let rr = risk_return(&toy_w0(), &toy_estimates()).unwrap();
    g.check(
        "2.risk_return",
        within(rr.mu, oracle.mu, 1e-6) && within(rr.sigma, oracle.sigma, 1e-6),
        format!(
            "(mu, sigma) = ({:.8}, {:.8}) vs oracle ({:.8}, {:.8}) to 1e-6",
            rr.mu, rr.sigma, oracle.mu, oracle.sigma
        ),
    );
    g.check(
        "2.quoted_sigma",
        within(rr.sigma, 0.1111, 5e-5),
        format!("sigma {:.6} ~ 0.1111", rr.sigma),
    );
    g.info(
        "2 quoted_mu",
        format!(
            "quoted 0.137048 differs from the exact {:.8} by {:.2e} (rounding)",
            rr.mu,
            (rr.mu - 0.137048).abs()
        ),
    );
}

// ---------------------------------------------------------- MV solver

fn grid_best(gamma: f64, est: &qdfolio_core::Estimates) -> f64 {
    let steps = 1000;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=steps {
        for j in 0..=steps - i {
            let w = [
                i as f64 / steps as f64,
                j as f64 / steps as f64,
                (steps - i - j) as f64 / steps as f64,
            ];
            best = best.max(mv_objective(&w, gamma, est));
        }
    }
    best
}

fn criterion_3(g: &mut Gate) {
    let est = toy_estimates();
    for gamma in [0.1, 1.0, 5.0, 25.0] {
        let w = solve_mv(gamma, &est, DEFAULT_TOL).unwrap();
        let solver = mv_objective(w.weights(), gamma, &est);
        let grid = grid_best(gamma, &est);
        g.check(
            &format!("3.solve_mv.gamma={gamma}"),
            within(solver, grid, 1e-5),
            format!("solver {solver:.9} vs grid {grid:.9}, gap {:.2e}", solver - grid),
        );
    }
    let fit = fit_gamma(&est, &toy_w0()).unwrap();
    g.check(
        "3.fit_gamma",
        fit.max_abs_error <= 5e-3,
        format!(
            "gamma {:.4}, max per-weight error {:.2e} <= 5e-3",
            fit.gamma, fit.max_abs_error
        ),
    );
}

// ------------------------------------------------- synthetic 105 assets

fn criterion_4(g: &mut Gate) {
    let (win, universe) = generate_synthetic_universe(105, 11, 924, 1).unwrap();
    let settings = estimator_settings(
        "capm",
        "ledoit-wolf",
        MarketProxy::EqualWeighted,
        0.0,
        DEFAULT_TRADING_DAYS,
    )
    .unwrap();
    let est = settings.estimate(&win).unwrap();
    let w0 = max_sharpe(&est, 0.0, DEFAULT_TOL).unwrap();
    let cfg = QdConfig {
        niches: 5000,
        n_max: 2_200_000,
        n_cvt: 50_000,
        c: 0.01,
        fitness: "f1".into(),
        behavior: "b2".into(),
        seed: 1,
        ..QdConfig::default()
    };
    let start = Instant::now();
    let out = run_qd(&cfg, &est, &universe, &w0).expect("synthetic run");
    g.info(
        "4 run",
        format!(
            "B2, M 5000, N_CVT 50000, c 0.01, F1, max-Sharpe reference, {:.1}s",
            start.elapsed().as_secs_f64()
        ),
    );

    let snaps = &out.snapshots;
    let spaced = !snaps.is_empty()
        && snaps
            .iter()
            .enumerate()
            .all(|(i, s)| s.evals == (i as u64 + 1) * 10_000)
        && snaps.last().map(|s| s.evals) == Some(2_200_000);
    g.check(
        "4.snapshots",
        spaced,
        format!("{} snapshots every 1e4 evaluations up to 2.2e6", snaps.len()),
    );

    let final_cov = snaps.last().map_or(0.0, |s| s.coverage);
    g.check(
        "4.coverage_positive",
        final_cov > 0.0,
        format!("final coverage {final_cov:.4} > 0"),
    );

    let mut running = f64::NEG_INFINITY;
    let mut running_ok = true;
    for s in snaps {
        let next = running.max(s.coverage);
        running_ok &= next >= running;
        running = next;
    }
    let raw_drops = snaps.windows(2).filter(|p| p[1].coverage < p[0].coverage).count();
    g.check(
        "4.coverage_running_max",
        running_ok && running == final_cov.max(running),
        format!("running maximum non-decreasing, peak {running:.4}"),
    );
    g.info(
        "4 coverage_raw",
        format!("{raw_drops} snapshot-to-snapshot decreases of the raw coverage"),
    );

    let score_ok = snaps.iter().all(|s| s.qd_score_mod <= s.qd_score1);
    g.check("4.qd_scores", score_ok, "qd_score_mod <= qd_score1 at every snapshot");

    let t_grid = [424, 624, 824, 924];
    let c_grid = [0.005, 0.01, 0.025, 0.05, 0.1];
    match robustness_sweep(
        &out.archive,
        &win,
        &t_grid,
        &c_grid,
        &settings,
        &ReferenceRule::MaxSharpe,
        0.0,
    ) {
        Ok(sweep) => {
            g.check("4.sweep_completes", true, "4 x 5 grid evaluated");
            let nested = sweep.coverage.iter().all(|row| row.windows(2).all(|p| p[0] <= p[1]));
            g.check("4.sweep_nested", nested, "coverage non-decreasing in c at every T");
            for (t, row) in t_grid.iter().zip(&sweep.coverage) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
                g.info("4 sweep", format!("T={t}: {}", cells.join(" ")));
            }
        }
        Err(e) => {
            g.check("4.sweep_completes", false, format!("sweep failed: {e}"));
            g.check("4.sweep_nested", false, "no sweep");
        }
    }
}

// ---------------------------------------------------------- properties

fn recombine_suite(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rates = [0.0, 0.01, 0.05, 0.5, 2.0];
    let mut violations = 0usize;
    for k in 0..1_000_000usize {
        let n = 2 + k % 19;
        let a = uniform_simplex(n, &mut rng);
        let b = if k % 7 == 0 {
            Portfolio::vertex(n, k % n)
        } else {
            uniform_simplex(n, &mut rng)
        };
        match recombine(&a, &b, rates[k % rates.len()], &mut rng) {
            Ok(child) => {
                let w = child.weights();
                let sum: f64 = w.iter().sum();
                let bad = w.len() != n
                    || w.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0)
                    || (sum - 1.0).abs() > SIMPLEX_TOL;
                violations += bad as usize;
            }
            Err(_) => violations += 1,
        }
    }
    g.check(
        "5.recombine",
        violations == 0,
        format!("{violations} simplex violations in 1e6 offspring"),
    );
}

fn ledoit_wolf_suite(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut bad = 0usize;
    let mut min_rel_eig = f64::INFINITY;
    let mut deltas = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..1000usize {
        let n = rng.random_range(2..=30usize);
        let t = rng.random_range(3..=250usize);
        let scale = 10f64.powf(rng.random_range(-3.0..-1.0));
        let mut returns: Vec<f64> = (0..t * n).map(|_| scale * (rng.random::<f64>() - 0.5)).collect();
        if k % 10 == 0 {
            // Duplicate a column to force a singular sample covariance.
            for r in 0..t {
                returns[r * n + 1] = returns[r * n];
            }
        }
        let assets = (0..n).map(|i| format!("X{i}")).collect();
        let win = ReturnsWindow::new(assets, business_days(t), returns).unwrap();
        let shrunk = match ledoit_wolf_cov(&win, DEFAULT_TRADING_DAYS) {
            Ok(s) => s,
            Err(_) => {
                bad += 1;
                continue;
            }
        };
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, &shrunk.cov)).eigenvalues;
        let max = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        let min = eig.iter().fold(f64::INFINITY, |m, e| m.min(*e));
        min_rel_eig = min_rel_eig.min(min / max);
        deltas = (deltas.0.min(shrunk.intensity), deltas.1.max(shrunk.intensity));
        if !(0.0..=1.0).contains(&shrunk.intensity) || min < -1e-12 * max {
            bad += 1;
        }
    }
    g.check(
        "5.ledoit_wolf",
        bad == 0,
        format!(
            "{bad} failures in 1000 windows; intensity range [{:.3}, {:.3}], min eigenvalue / max {min_rel_eig:.2e}",
            deltas.0, deltas.1
        ),
    );
}

fn audit_suite(g: &mut Gate) {
    let cfg = QdConfig {
        seed: 3,
        ..QdConfig::default()
    };
    let hooks = RunHooks {
        audit: true,
        ..RunHooks::default()
    };
    let out = run_qd_with(&cfg, &toy_estimates(), &toy_universe(), &toy_w0(), hooks).unwrap();
    let log = out.archive.audit_log().unwrap_or(&[]);
    let mut last: HashMap<usize, f64> = HashMap::new();
    let mut violations = 0usize;
    for e in log {
        let prev = last.insert(e.niche, e.fitness);
        if prev != e.previous || e.previous.is_some_and(|p| e.fitness <= p) {
            violations += 1;
        }
    }
    for (niche, r) in out.archive.iter() {
        if last.get(&niche) != Some(&r.fitness) {
            violations += 1;
        }
    }
    let filled_ok = out.snapshots.windows(2).all(|p| p[0].filled <= p[1].filled);
    g.check(
        "5.archive_monotone",
        !log.is_empty() && violations == 0 && filled_ok && out.archive.eval_count() == cfg.n_max,
        format!("{} replacements audited, {violations} violations", log.len()),
    );
}

/// Gift-wrapping hull, counter-clockwise, collinear points dropped.
fn jarvis(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let start = *points
        .iter()
        .min_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
        .unwrap();
    let mut hull = vec![start];
    let mut p = start;
    loop {
        let mut q = if points[0] == p {
            points[1 % points.len()]
        } else {
            points[0]
        };
        for &r in points {
            let c = cross(p, q, r);
            if c < 0.0 || (c == 0.0 && d2(p, r) > d2(p, q)) {
                q = r;
            }
        }
        if q == start || hull.len() > points.len() {
            break;
        }
        hull.push(q);
        p = q;
    }
    hull
}

fn fan_area(hull: &[[f64; 2]]) -> f64 {
    if hull.len() < 3 {
        return 0.0;
    }
    let o = hull[0];
    hull.windows(2)
        .skip(1)
        .map(|e| 0.5 * ((e[0][0] - o[0]) * (e[1][1] - o[1]) - (e[0][1] - o[1]) * (e[1][0] - o[0])))
        .sum()
}

fn hull_suite(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for k in 0..100usize {
        let n = rng.random_range(3..=200usize);
        let mut pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        if k % 10 == 0 {
            // Grid-aligned duplicates and collinear runs.
            pts.iter_mut()
                .for_each(|p| *p = [(p[0] * 4.0).round() / 4.0, (p[1] * 4.0).round() / 4.0]);
        }
        worst = worst.max((hull_area_2d(&pts) - fan_area(&jarvis(&pts))).abs());
    }
    g.check(
        "5.hull_area",
        worst <= 1e-12,
        format!("max |area - fan oracle| {worst:.2e} on 100 point sets"),
    );
}

fn niche_index_suite(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut mismatches = 0usize;
    for _ in 0..10 {
        let dim = rng.random_range(2..=12usize);
        let m = rng.random_range(1..=500usize);
        let centroids: Vec<f64> = (0..m * dim).map(|_| rng.random::<f64>()).collect();
        let p = CvtPartition::from_centroids("b1".into(), 0, dim, centroids).unwrap();
        for q in 0..100usize {
            let query: Vec<f64> = if q % 10 == 0 {
                p.centroid(q % m).to_vec()
            } else {
                (0..dim).map(|_| rng.random::<f64>()).collect()
            };
            let mut best = (f64::INFINITY, 0usize);
            for k in 0..m {
                let d: f64 = p.centroid(k).iter().zip(&query).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
            mismatches += (p.niche_index(&query).unwrap() != best.1) as usize;
        }
    }
    g.check(
        "5.niche_index",
        mismatches == 0,
        format!("{mismatches} mismatches against a linear scan on 1000 queries"),
    );
}

fn determinism_suite(g: &mut Gate) {
    let dir = tempfile::tempdir().unwrap();
    let est = toy_estimates();
    let universe = toy_universe();
    let write = |name: &str, threads: usize| {
        let cfg = QdConfig {
            seed: 42,
            threads,
            ..QdConfig::default()
        };
        let out = run_qd(&cfg, &est, &universe, &toy_w0()).unwrap();
        let path = dir.path().join(name);
        // Thread count is left out of the header so batched runs compare by content.
        let ctx = ArchiveContext {
            config: &QdConfig {
                threads: 1,
                ..cfg.clone()
            },
            reference_rule: "weights:0.581,0.228,0.191",
            assets: universe.names(),
            est: &est,
            universe: &universe,
        };
        io::write_archive(&path, &out.archive, &ctx).unwrap();
        std::fs::read(path).unwrap()
    };
    let a = write("a.jsonl", 1);
    let b = write("b.jsonl", 1);
    g.check(
        "5.determinism",
        a == b,
        format!("two seeded runs, {} bytes each, identical", a.len()),
    );
    let c = write("c.jsonl", 2);
    let d = write("d.jsonl", 4);
    g.check(
        "5.determinism_batched",
        c == d,
        "batched mode with a fixed batch size: 2 and 4 threads give identical archives",
    );
}

// ----------------------------------------------------------- selection

fn selection_fixture(near: &[(usize, bool)]) -> Archive {
    let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
    let centroids = xs.iter().flat_map(|x| [*x, 0.0]).collect();
    let partition = CvtPartition::from_centroids("b1".into(), 0, 2, centroids).unwrap();
    let reference = Reference {
        weights: Portfolio::uniform(2),
        rr: RiskReturnPoint { mu: 0.1, sigma: 0.1 },
        c: 0.1,
    };
    let records = near
        .iter()
        .map(|&(k, near_optimal)| {
            let rr = if near_optimal {
                RiskReturnPoint { mu: 0.1, sigma: 0.1 }
            } else {
                RiskReturnPoint { mu: 0.01, sigma: 0.3 }
            };
            let record = EliteRecord {
                weights: Portfolio::uniform(2),
                bd: BehaviorDescriptor(vec![xs[k], 0.0]),
                fitness: -(k as f64),
                rr,
                near_optimal,
            };
            (k, record)
        })
        .collect();
    Archive::from_records(partition, reference, 100, records).unwrap()
}

fn criterion_6(g: &mut Gate) {
    let a = selection_fixture(&[(0, true), (1, false), (3, true)]);
    let direct = select_portfolio(&a, &[0.2, 0.1]).map(|s| (s.requested_niche, s.niche));
    g.check(
        "6.direct_hit",
        direct.as_ref().ok() == Some(&(0, 0)),
        format!("{direct:?} == (0, 0)"),
    );

    let fallback = select_portfolio(&a, &[1.1, 0.0]).map(|s| (s.requested_niche, s.niche));
    let empty = select_portfolio(&a, &[2.2, 0.0]).map(|s| (s.requested_niche, s.niche));
    g.check(
        "6.fallback",
        fallback.as_ref().ok() == Some(&(1, 0)) && empty.as_ref().ok() == Some(&(2, 3)),
        format!("non-near-optimal niche {fallback:?} == (1, 0); empty niche {empty:?} == (2, 3)"),
    );

    let tie = selection_fixture(&[(1, true), (3, true)]);
    let tied = select_portfolio(&tie, &[2.0, 0.3]).map(|s| s.niche);
    g.check(
        "6.tie_lowest_index",
        tied.as_ref().ok() == Some(&1),
        format!("{tied:?} == 1"),
    );

    let none = selection_fixture(&[(1, false), (2, false)]);
    let blank = selection_fixture(&[]);
    let ok = matches!(select_portfolio(&none, &[1.0, 0.0]), Err(Error::NoNearOptimal))
        && matches!(select_portfolio(&blank, &[1.0, 0.0]), Err(Error::NoNearOptimal));
    g.check(
        "6.no_candidate",
        ok,
        "archives without near-optimal elites yield NoNearOptimal",
    );
}

fn main() {
    let mut g = Gate {
        failed: Vec::new(),
        passed: 0,
    };
    let start = Instant::now();
    criterion_1(&mut g);
    criterion_2(&mut g);
    criterion_3(&mut g);
    criterion_4(&mut g);
    recombine_suite(&mut g);
    ledoit_wolf_suite(&mut g);
    audit_suite(&mut g);
    hull_suite(&mut g);
    niche_index_suite(&mut g);
    determinism_suite(&mut g);
    criterion_6(&mut g);
    println!(
        "acceptance: {} passed, {} failed in {:.1}s",
        g.passed,
        g.failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !g.failed.is_empty() {
        println!("failed: {}", g.failed.join(", "));
        std::process::exit(1);
    }
}
