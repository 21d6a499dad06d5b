//! Centroidal Voronoi tessellation of behavior space via k-means.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::squared_distance;

pub const MAX_LLOYD_ITERATIONS: usize = 300;
pub const SHIFT_TOL: f64 = 1e-8;

/// `M` centroids in a `dim`-dimensional behavior space. Niche `k` is the
/// Voronoi cell of centroid `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PartitionFile", into = "PartitionFile")]
pub struct CvtPartition {
    behavior: String,
    seed: u64,
    dim: usize,
    /// Row-major `M x dim`.
    centroids: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PartitionFile {
    behavior: String,
    seed: u64,
    m: usize,
    dim: usize,
    centroids: Vec<Vec<f64>>,
}

impl TryFrom<PartitionFile> for CvtPartition {
    type Error = Error;
    fn try_from(f: PartitionFile) -> Result<Self> {
        if f.centroids.len() != f.m || f.centroids.iter().any(|c| c.len() != f.dim) {
            return Err(Error::Parse(format!(
                "partition declares {} x {} centroids",
                f.m, f.dim
            )));
        }
        CvtPartition::from_centroids(f.behavior, f.seed, f.dim, f.centroids.concat())
    }
}

impl From<CvtPartition> for PartitionFile {
    fn from(p: CvtPartition) -> Self {
        PartitionFile {
            m: p.len(),
            dim: p.dim,
            centroids: p.centroids.chunks(p.dim).map(<[f64]>::to_vec).collect(),
            behavior: p.behavior,
            seed: p.seed,
        }
    }
}

impl CvtPartition {
    pub fn from_centroids(behavior: String, seed: u64, dim: usize, centroids: Vec<f64>) -> Result<Self> {
        if dim == 0 || centroids.is_empty() || !centroids.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} centroid values do not form rows of dimension {dim}",
                centroids.len()
            )));
        }
        Ok(CvtPartition {
            behavior,
            seed,
            dim,
            centroids,
        })
    }

    /// Number of niches.
    pub fn len(&self) -> usize {
        self.centroids.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn behavior(&self) -> &str {
        &self.behavior
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k * self.dim..(k + 1) * self.dim]
    }

    pub fn centroids(&self) -> impl Iterator<Item = &[f64]> {
        self.centroids.chunks_exact(self.dim)
    }

    /// Index of the nearest centroid, lowest index on ties.
    pub fn niche_index(&self, bd: &[f64]) -> Result<usize> {
        if bd.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: bd.len(),
            });
        }
        Ok(nearest(&self.centroids, self.dim, bd).0)
    }
}

/// Nearest row of `centroids` to `x` and its squared distance.
#[inline]
fn nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Nearest and second-nearest distances (not squared).
fn two_nearest(centroids: &[f64], dim: usize, x: &[f64]) -> (usize, f64, f64) {
    let (mut bi, mut b1, mut b2) = (0, f64::INFINITY, f64::INFINITY);
    for (k, c) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_distance(c, x);
        if d < b1 {
            b2 = b1;
            b1 = d;
            bi = k;
        } else if d < b2 {
            b2 = d;
        }
    }
    (bi, b1.sqrt(), b2.sqrt())
}

/// Output of [`kmeans`].
#[derive(Debug, Clone)]
pub struct KMeans {
    /// Row-major `k x dim`.
    pub centroids: Vec<f64>,
    /// Nearest-centroid label of every sample under the final centroids.
    pub labels: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below [`SHIFT_TOL`] or [`MAX_LLOYD_ITERATIONS`] is reached.
///
/// Assignment uses Hamerly's upper/lower distance bounds to skip points whose
/// nearest centroid cannot have changed; the result is the same as plain Lloyd.
pub fn kmeans<R: Rng + ?Sized>(samples: &[f64], dim: usize, k: usize, rng: &mut R) -> Result<KMeans> {
    let n = samples.len() / dim;
    if k == 0 || n < k {
        return Err(Error::InvalidInput(format!(
            "need at least as many samples ({n}) as centroids ({k}), and k >= 1"
        )));
    }
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];

    // k-means++ seeding.
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(row(i), row(first))).collect();
    for chosen in 1..k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput(format!(
                "only {chosen} distinct behavior samples for {k} niches"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, d) in d2.iter().enumerate() {
            acc += d;
            if *d > 0.0 && acc >= target {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave `target` just above the final sum.
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).expect("total > 0"));
        centroids.extend_from_slice(row(pick));
        let c = row(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = squared_distance(row(i), c);
            if nd < *d {
                *d = nd;
            }
        }
    }

    Ok(lloyd(samples, dim, centroids))
}

/// Lloyd iterations with Hamerly bounds from the given initial centroids.
fn lloyd(samples: &[f64], dim: usize, mut centroids: Vec<f64>) -> KMeans {
    let n = samples.len() / dim;
    let k = centroids.len() / dim;
    let row = |i: usize| &samples[i * dim..(i + 1) * dim];
    let mut labels = vec![0usize; n];
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    for i in 0..n {
        let (a, u, l) = two_nearest(&centroids, dim, row(i));
        labels[i] = a;
        upper[i] = u;
        lower[i] = l;
    }
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    let mut shifts = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_LLOYD_ITERATIONS {
        iterations += 1;
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for i in 0..n {
            let a = labels[i];
            counts[a] += 1;
            sums[a * dim..(a + 1) * dim]
                .iter_mut()
                .zip(row(i))
                .for_each(|(s, x)| *s += x);
        }
        let mut max_shift = 0.0f64;
        for j in 0..k {
            if counts[j] == 0 {
                // Empty cell keeps its previous centroid.
                shifts[j] = 0.0;
                continue;
            }
            let inv = 1.0 / counts[j] as f64;
            let old = &mut centroids[j * dim..(j + 1) * dim];
            let mut s2 = 0.0;
            for (c, s) in old.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                let v = s * inv;
                s2 += (v - *c) * (v - *c);
                *c = v;
            }
            shifts[j] = s2.sqrt();
            max_shift = max_shift.max(shifts[j]);
        }
        if max_shift < SHIFT_TOL {
            converged = true;
            break;
        }
        let (mut top, mut top_j, mut second) = (0.0f64, usize::MAX, 0.0f64);
        for (j, s) in shifts.iter().enumerate() {
            if *s > top {
                second = top;
                top = *s;
                top_j = j;
            } else if *s > second {
                second = *s;
            }
        }
        for i in 0..n {
            let a = labels[i];
            upper[i] += shifts[a];
            lower[i] -= if a == top_j { second } else { top };
            if upper[i] > lower[i] {
                upper[i] = squared_distance(row(i), &centroids[a * dim..(a + 1) * dim]).sqrt();
                if upper[i] > lower[i] {
                    let (na, u, l) = two_nearest(&centroids, dim, row(i));
                    labels[i] = na;
                    upper[i] = u;
                    lower[i] = l;
                }
            }
        }
    }

    // Exact labels under the final centroids, matching `niche_index`.
    for (i, label) in labels.iter_mut().enumerate() {
        *label = nearest(&centroids, dim, row(i)).0;
    }
    KMeans {
        centroids,
        labels,
        iterations,
        converged,
    }
}

/// Tessellates behavior space from row-major training `samples`.
pub fn build_cvt<R: Rng + ?Sized>(
    samples: &[f64],
    dim: usize,
    niches: usize,
    behavior: &str,
    seed: u64,
    rng: &mut R,
) -> Result<CvtPartition> {
    let km = kmeans(samples, dim, niches, rng)?;
    CvtPartition::from_centroids(behavior.to_string(), seed, dim, km.centroids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::behavior::{sample_mapped, SimplexSampler, WeightsBehavior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn simplex_samples(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_mapped(&WeightsBehavior::new(3), SimplexSampler::Dirichlet, n, &mut rng)
    }

    /// Plain Lloyd from the same seeding, no bounds.
    fn naive_lloyd(samples: &[f64], dim: usize, init: &[f64], iters: usize) -> Vec<f64> {
        let k = init.len() / dim;
        let mut c = init.to_vec();
        for _ in 0..iters {
            let mut sums = vec![0.0; k * dim];
            let mut counts = vec![0usize; k];
            for x in samples.chunks(dim) {
                let a = nearest(&c, dim, x).0;
                counts[a] += 1;
                for d in 0..dim {
                    sums[a * dim + d] += x[d];
                }
            }
            for j in 0..k {
                if counts[j] > 0 {
                    for d in 0..dim {
                        c[j * dim + d] = sums[j * dim + d] / counts[j] as f64;
                    }
                }
            }
        }
        c
    }

    #[test]
    fn single_centroid_is_sample_mean() {
        let s = simplex_samples(500, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let km = kmeans(&s, 3, 1, &mut rng).unwrap();
        for d in 0..3 {
            let mean = s.chunks(3).map(|x| x[d]).sum::<f64>() / 500.0;
            assert!((km.centroids[d] - mean).abs() < 1e-14);
        }
        assert!(km.converged);
    }

    #[test]
    fn one_cluster_per_sample() {
        let s = simplex_samples(40, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let km = kmeans(&s, 3, 40, &mut rng).unwrap();
        let mut got: Vec<Vec<f64>> = km.centroids.chunks(3).map(<[f64]>::to_vec).collect();
        let mut want: Vec<Vec<f64>> = s.chunks(3).map(<[f64]>::to_vec).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn too_few_distinct_samples() {
        let s = [0.5, 0.5, 0.5, 0.5, 0.2, 0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kmeans(&s, 2, 3, &mut rng).is_err());
        assert!(kmeans(&s, 2, 4, &mut rng).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let s = simplex_samples(2000, 5);
        let a = kmeans(&s, 3, 50, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let b = kmeans(&s, 3, 50, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(
            a.centroids.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.centroids.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = kmeans(&s, 3, 50, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_ne!(a.centroids, c.centroids);
        assert_eq!(c.centroids.len(), 150);
    }

    #[test]
    fn bounded_assignment_matches_plain_lloyd() {
        let s = simplex_samples(3000, 8);
        let init: Vec<f64> = s[..30 * 3].to_vec();
        let km = lloyd(&s, 3, init.clone());
        let plain = naive_lloyd(&s, 3, &init, km.iterations);
        for (a, b) in km.centroids.iter().zip(&plain) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn voronoi_consistency_and_hull_membership() {
        let s = simplex_samples(4000, 10);
        let km = kmeans(&s, 3, 64, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let p = CvtPartition::from_centroids("b1".into(), 11, 3, km.centroids.clone()).unwrap();
        for (x, label) in s.chunks(3).zip(&km.labels) {
            assert_eq!(p.niche_index(x).unwrap(), *label);
        }
        // Samples live on the simplex, so their hull does too.
        for c in p.centroids() {
            assert!(c.iter().all(|v| *v >= 0.0));
            assert!((c.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut sorted: Vec<Vec<u64>> = p.centroids().map(|c| c.iter().map(|v| v.to_bits()).collect()).collect();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 64);
    }

    #[test]
    fn niche_index_examples() {
        let p = CvtPartition::from_centroids("b1".into(), 0, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(p.niche_index(&[1.0, 0.0]).unwrap(), 1);
        assert_eq!(p.niche_index(&[0.1, 0.8]).unwrap(), 2);
        // Equidistant from 1 and 2: lowest index wins.
        assert_eq!(p.niche_index(&[0.6, 0.6]).unwrap(), 1);
        assert_eq!(p.niche_index(&[0.5, 0.5]).unwrap(), 0);
        assert!(p.niche_index(&[0.5]).is_err());
        let single = CvtPartition::from_centroids("b1".into(), 0, 2, vec![0.3, 0.3]).unwrap();
        assert_eq!(single.niche_index(&[9.0, -4.0]).unwrap(), 0);
    }

    #[test]
    fn niche_index_matches_linear_scan() {
        let s = simplex_samples(2000, 12);
        let p = build_cvt(&s, 3, 100, "b1", 13, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..1000 {
            let q: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let oracle = p
                .centroids()
                .enumerate()
                .map(|(k, c)| (k, c.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>()))
                .fold((usize::MAX, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
                .0;
            assert_eq!(p.niche_index(&q).unwrap(), oracle);
        }
    }

    #[test]
    fn partition_json_round_trip() {
        let s = simplex_samples(300, 15);
        let p = build_cvt(&s, 3, 10, "b1", 15, &mut ChaCha8Rng::seed_from_u64(15)).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        let back: CvtPartition = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }
}
