//! Behavior descriptors: where a portfolio sits in behavior space.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AssetUniverse, Portfolio};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorDescriptor(pub Vec<f64>);

impl BehaviorDescriptor {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Uniform draw from the probability simplex (symmetric Dirichlet with unit
/// concentration, via normalized exponentials).
pub fn uniform_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Portfolio {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        if let Some(p) = Portfolio::normalized(raw) {
            return p;
        }
    }
}

/// `n` independent `U[0, 1)` draws scaled to unit sum. Not uniform on the
/// simplex: mass concentrates towards the barycenter.
pub fn normalized_uniform<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Portfolio {
    loop {
        let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if let Some(p) = Portfolio::normalized(raw) {
            return p;
        }
    }
}

/// Distribution of random portfolios for tessellation training and archive
/// initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimplexSampler {
    /// Uniform on the simplex.
    #[default]
    Dirichlet,
    /// Normalized uniform hypercube draws.
    NormalizedUniform,
}

impl SimplexSampler {
    pub fn sample<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Portfolio {
        match self {
            SimplexSampler::Dirichlet => uniform_simplex(n, rng),
            SimplexSampler::NormalizedUniform => normalized_uniform(n, rng),
        }
    }
}

impl std::str::FromStr for SimplexSampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dirichlet" | "uniform" => Ok(SimplexSampler::Dirichlet),
            "normalized-uniform" | "normalized" => Ok(SimplexSampler::NormalizedUniform),
            other => Err(Error::UnknownStrategy {
                kind: "simplex sampler",
                name: other.to_string(),
                available: "dirichlet, normalized-uniform".into(),
            }),
        }
    }
}

/// A behavior function mapping portfolios into a descriptor space.
pub trait BehaviorSpace: Send + Sync {
    /// Registry name, also written into partition and archive files.
    fn name(&self) -> &'static str;

    /// Dimension of the descriptors.
    fn dim(&self) -> usize;

    /// Number of assets the behavior function accepts.
    fn n_assets(&self) -> usize;

    /// Writes the descriptor of `w` into `out` (length [`Self::dim`]).
    fn describe_into(&self, w: &[f64], out: &mut [f64]);

    fn describe(&self, w: &Portfolio) -> Result<BehaviorDescriptor> {
        if w.len() != self.n_assets() {
            return Err(Error::DimensionMismatch {
                expected: self.n_assets(),
                actual: w.len(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.describe_into(w.weights(), &mut out);
        Ok(BehaviorDescriptor(out))
    }
}

/// Training samples for the tessellation: `n` random portfolios mapped
/// through `space`, since behavior spaces cannot in general be sampled directly.
/// Returns a row-major `n x dim` matrix.
pub fn sample_mapped<R: Rng + ?Sized>(
    space: &dyn BehaviorSpace,
    sampler: SimplexSampler,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let d = space.dim();
    let mut out = vec![0.0; n * d];
    for row in out.chunks_exact_mut(d) {
        let w = sampler.sample(space.n_assets(), rng);
        space.describe_into(w.weights(), row);
    }
    out
}

/// Identity behavior: the weights themselves.
#[derive(Debug, Clone)]
pub struct WeightsBehavior {
    n_assets: usize,
}

impl WeightsBehavior {
    pub fn new(n_assets: usize) -> Self {
        WeightsBehavior { n_assets }
    }
}

impl BehaviorSpace for WeightsBehavior {
    fn name(&self) -> &'static str {
        "b1"
    }
    fn dim(&self) -> usize {
        self.n_assets
    }
    fn n_assets(&self) -> usize {
        self.n_assets
    }
    fn describe_into(&self, w: &[f64], out: &mut [f64]) {
        out.copy_from_slice(w);
    }
}

/// Sector exposures followed by the capitalization-weighted average market
/// cap divided by the largest single-asset cap.
#[derive(Debug, Clone)]
pub struct SectorCapBehavior {
    sector_of: Vec<usize>,
    rel_cap: Vec<f64>,
    n_sectors: usize,
}

impl SectorCapBehavior {
    pub fn new(universe: &AssetUniverse) -> Self {
        let max = universe.max_market_cap();
        SectorCapBehavior {
            sector_of: universe.sector_of().to_vec(),
            rel_cap: universe.market_cap().iter().map(|c| c / max).collect(),
            n_sectors: universe.n_sectors(),
        }
    }
}

impl BehaviorSpace for SectorCapBehavior {
    fn name(&self) -> &'static str {
        "b2"
    }
    fn dim(&self) -> usize {
        self.n_sectors + 1
    }
    fn n_assets(&self) -> usize {
        self.sector_of.len()
    }
    fn describe_into(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut cap = 0.0;
        for ((wi, s), rc) in w.iter().zip(&self.sector_of).zip(&self.rel_cap) {
            out[*s] += wi;
            cap += wi * rc;
        }
        out[self.n_sectors] = cap;
    }
}
