//! Cross-run aggregation of snapshot trajectories and archive profiles.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};

use qdfolio_core::analytics::{archive_profiles, threshold_grid};
use qdfolio_core::io;

/// Percentile with linear interpolation between closest ranks; `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(mean, p5, p95)` of a non-empty sample.
pub fn summarize(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean, percentile(values, 0.05), percentile(values, 0.95))
}

pub fn run(snapshots: &[PathBuf], out: &Path, archives: &[PathBuf], profiles: Option<&Path>) -> Result<()> {
    ensure!(!snapshots.is_empty(), "no snapshot files given");
    // Per evaluation step, the values reached by each run at that step.
    let mut by_step: BTreeMap<u64, [Vec<f64>; 4]> = BTreeMap::new();
    for path in snapshots {
        let rows = io::read_snapshots_csv(path).with_context(|| format!("reading {}", path.display()))?;
        for s in rows {
            let slot = by_step.entry(s.evals).or_default();
            slot[0].push(s.coverage);
            slot[1].push(s.qd_score1);
            slot[2].push(s.qd_score_mod);
            slot[3].push(s.filled as f64);
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(out)?);
    writeln!(w, "evals,metric,mean,p5,p95,runs")?;
    for (evals, mut metrics) in by_step {
        for (name, values) in ["coverage", "qd_score1", "qd_score_mod", "filled"]
            .iter()
            .zip(metrics.iter_mut())
        {
            let runs = values.len();
            let (mean, p5, p95) = summarize(values);
            writeln!(w, "{evals},{name},{mean},{p5},{p95},{runs}")?;
        }
    }
    w.flush()?;

    if let Some(path) = profiles {
        write_profiles(archives, path)?;
    }
    Ok(())
}

/// Profiles on one threshold grid per curve, spanning every archive's subset.
fn write_profiles(archives: &[PathBuf], path: &Path) -> Result<()> {
    let loaded = archives
        .iter()
        .map(|p| {
            io::read_archive(p, None)
                .map(|(_, a)| a)
                .with_context(|| format!("reading {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = |near: bool| -> Vec<f64> {
        loaded
            .iter()
            .flat_map(|a| {
                a.iter()
                    .filter(move |(_, r)| r.near_optimal == near)
                    .map(|(_, r)| r.fitness)
            })
            .collect()
    };
    let grids = [threshold_grid(&pooled(false), 100), threshold_grid(&pooled(true), 100)];
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "curve,threshold,mean,p5,p95,runs")?;
    for (k, (name, grid)) in ["ap1", "ap2"].iter().zip(&grids).enumerate() {
        let curves = loaded
            .iter()
            .map(|a| archive_profiles(a, grid).map(|c| if k == 0 { c.0 } else { c.1 }))
            .collect::<qdfolio_core::Result<Vec<_>>>()?;
        for (i, t) in grid.iter().enumerate() {
            let mut values: Vec<f64> = curves.iter().map(|c| c[i].proportion).collect();
            let (mean, p5, p95) = summarize(&mut values);
            writeln!(w, "{name},{t},{mean},{p5},{p95},{}", values.len())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 10.0];
        assert_eq!(percentile(&v, 0.05), 0.5);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
        let mut s = vec![4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(summarize(&mut s), (3.0, 1.2, 4.8));
    }
}
