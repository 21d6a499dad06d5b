//! The CVT-MAP-Elites loop.
//!
//! A single ChaCha8 stream seeded from `QdConfig::seed` is consumed in this
//! order: CVT training samples, k-means++ seeding, initial uniform portfolios,
//! then for every offspring the two parent indices, `λ`, and the `N` mutation
//! draws (plus any resampling attempts).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics;
use crate::archive::{Archive, EliteRecord};
use crate::behavior::{sample_mapped, BehaviorDescriptor, BehaviorSpace, SimplexSampler};
use crate::cvt::build_cvt;
use crate::error::{Error, Result};
use crate::fitness::{FitnessFunction, Reference};
use crate::registry;
use crate::types::{risk_return_raw, AssetUniverse, Estimates, Portfolio};

pub const DEFAULT_MUTATION_RATE: f64 = 0.05;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 10_000;
pub const DEFAULT_BATCH_SIZE: usize = 256;
const RESAMPLE_ATTEMPTS: usize = 16;

/// Run parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QdConfig {
    /// Number of niches `M`.
    pub niches: usize,
    /// Evaluation budget, initialization included.
    pub n_max: u64,
    /// CVT training samples.
    pub n_cvt: usize,
    /// Fraction of niches filled by random initialization.
    pub p_init: f64,
    pub mutation_rate: f64,
    /// Near-optimality constant.
    pub c: f64,
    pub fitness: String,
    pub behavior: String,
    /// Random portfolios for CVT training and initialization.
    pub sampler: SimplexSampler,
    pub seed: u64,
    /// Annual risk-free rate.
    pub rf: f64,
    /// 1 runs the sequential loop; more evaluates offspring in batches.
    pub threads: usize,
    pub batch_size: usize,
    pub snapshot_every: u64,
}

impl Default for QdConfig {
    fn default() -> Self {
        QdConfig {
            niches: 200,
            n_max: 250_000,
            n_cvt: 10_000,
            p_init: 0.1,
            mutation_rate: DEFAULT_MUTATION_RATE,
            c: 0.1,
            fitness: "f2".into(),
            behavior: "b1".into(),
            sampler: SimplexSampler::Dirichlet,
            seed: 0,
            rf: 0.0,
            threads: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

impl QdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if self.niches == 0 {
            return bad("niches must be >= 1".into());
        }
        if self.n_max == 0 {
            return bad("n_max must be >= 1".into());
        }
        if self.n_cvt < self.niches {
            return bad(format!(
                "n_cvt ({}) must be at least the number of niches ({})",
                self.n_cvt, self.niches
            ));
        }
        if !(self.p_init > 0.0 && self.p_init <= 1.0) {
            return bad(format!("p_init must lie in (0, 1], got {}", self.p_init));
        }
        if !(self.mutation_rate >= 0.0) || !self.mutation_rate.is_finite() {
            return bad(format!("mutation_rate must be >= 0, got {}", self.mutation_rate));
        }
        if !(self.c > 0.0 && self.c < 1.0) {
            return bad(format!("c must lie in (0, 1), got {}", self.c));
        }
        if self.threads == 0 || self.batch_size == 0 {
            return bad("threads and batch_size must be >= 1".into());
        }
        registry::fitness_functions().get(&self.fitness)?;
        registry::behavior_spaces().get(&self.behavior)?;
        Ok(())
    }

    /// Niches that random initialization must fill.
    pub fn init_target(&self) -> usize {
        ((self.p_init * self.niches as f64).ceil() as usize).clamp(1, self.niches)
    }
}

/// Offspring of two parents: `clip(λ w1 + (1 - λ) w2 + δ, 0, 1)` normalized to
/// unit sum. `None` when every coordinate clips to zero.
pub fn recombine_with(w1: &[f64], w2: &[f64], lambda: f64, delta: &[f64]) -> Option<Portfolio> {
    let raw = w1
        .iter()
        .zip(w2)
        .zip(delta)
        .map(|((a, b), d)| (lambda * a + (1.0 - lambda) * b + d).clamp(0.0, 1.0))
        .collect();
    Portfolio::normalized(raw)
}

/// Recombination with uniform mutation in `[-m, m)` per asset.
pub fn recombine<R: Rng + ?Sized>(w1: &Portfolio, w2: &Portfolio, m: f64, rng: &mut R) -> Result<Portfolio> {
    if w1.len() != w2.len() {
        return Err(Error::DimensionMismatch {
            expected: w1.len(),
            actual: w2.len(),
        });
    }
    if !(m >= 0.0) {
        return Err(Error::InvalidInput(format!("mutation rate must be >= 0, got {m}")));
    }
    let mut delta = vec![0.0; w1.len()];
    for _ in 0..RESAMPLE_ATTEMPTS {
        let lambda: f64 = rng.random();
        delta
            .iter_mut()
            .for_each(|d| *d = m * (2.0 * rng.random::<f64>() - 1.0));
        if let Some(child) = recombine_with(w1.weights(), w2.weights(), lambda, &delta) {
            return Ok(child);
        }
    }
    Ok(Portfolio::uniform(w1.len()))
}

/// A fully evaluated candidate.
#[derive(Debug, Clone)]
pub struct Evaluated {
    pub niche: usize,
    pub record: EliteRecord,
}

/// Archive metrics at one point of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub evals: u64,
    pub filled: usize,
    pub coverage: f64,
    pub qd_score1: f64,
    pub qd_score_mod: f64,
}

impl Snapshot {
    pub fn of(archive: &Archive) -> Snapshot {
        let (qd_score1, qd_score_mod) = analytics::qd_scores(archive).unwrap_or((0.0, 0.0));
        Snapshot {
            evals: archive.eval_count(),
            filled: archive.filled(),
            coverage: analytics::modified_coverage(archive),
            qd_score1,
            qd_score_mod,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub archive: Archive,
    pub snapshots: Vec<Snapshot>,
}

/// Callback receiving each evaluated candidate and whether it was placed.
pub type Observer<'a> = &'a mut dyn FnMut(&Evaluated, bool);

/// Extra instrumentation for a run.
#[derive(Default)]
pub struct RunHooks<'a> {
    /// Record every accepted archive replacement.
    pub audit: bool,
    /// Called for every evaluated candidate with whether it was placed.
    pub observer: Option<Observer<'a>>,
}

struct Evaluator<'a> {
    est: &'a Estimates,
    behavior: &'a dyn BehaviorSpace,
    fitness: &'a dyn FitnessFunction,
    reference: &'a Reference,
}

impl Evaluator<'_> {
    fn evaluate(&self, archive: &Archive, w: Portfolio) -> Result<Evaluated> {
        let rr = risk_return_raw(w.weights(), self.est)?;
        let mut bd = vec![0.0; self.behavior.dim()];
        self.behavior.describe_into(w.weights(), &mut bd);
        let niche = archive.partition().niche_index(&bd)?;
        let fitness = self.fitness.evaluate(w.weights(), rr, self.reference);
        Ok(Evaluated {
            niche,
            record: EliteRecord {
                near_optimal: self.reference.contains(rr),
                weights: w,
                bd: BehaviorDescriptor(bd),
                fitness,
                rr,
            },
        })
    }
}

/// Runs CVT-MAP-Elites and returns the final archive with exactly `n_max`
/// evaluations.
pub fn run_qd(cfg: &QdConfig, est: &Estimates, universe: &AssetUniverse, w0: &Portfolio) -> Result<RunOutput> {
    run_qd_with(cfg, est, universe, w0, RunHooks::default())
}

pub fn run_qd_with(
    cfg: &QdConfig,
    est: &Estimates,
    universe: &AssetUniverse,
    w0: &Portfolio,
    mut hooks: RunHooks<'_>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let n = est.dim();
    if universe.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: universe.len(),
        });
    }
    if w0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: w0.len(),
        });
    }
    let behavior = registry::behavior(&cfg.behavior, universe)?;
    let fitness = registry::fitness(&cfg.fitness)?;
    let reference = Reference::new(w0.clone(), est, cfg.c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let samples = sample_mapped(behavior.as_ref(), cfg.sampler, cfg.n_cvt, &mut rng);
    let partition = build_cvt(
        &samples,
        behavior.dim(),
        cfg.niches,
        behavior.name(),
        cfg.seed,
        &mut rng,
    )?;
    drop(samples);

    let mut archive = Archive::new(partition, reference.clone());
    if hooks.audit {
        archive.enable_audit();
    }
    let eval = Evaluator {
        est,
        behavior: behavior.as_ref(),
        fitness: fitness.as_ref(),
        reference: &reference,
    };
    let mut snapshots = Vec::new();
    let snapshot_every = cfg.snapshot_every.max(1);
    let mut commit = |archive: &mut Archive, cand: Evaluated, snapshots: &mut Vec<Snapshot>| {
        archive.count_evaluation();
        let placed = archive.try_insert(cand.niche, cand.record.clone());
        if let Some(obs) = hooks.observer.as_mut() {
            obs(&cand, placed);
        }
        if archive.eval_count().is_multiple_of(snapshot_every) {
            snapshots.push(Snapshot::of(archive));
        }
    };

    let required = cfg.init_target();
    while archive.filled() < required {
        if archive.eval_count() >= cfg.n_max {
            return Err(Error::InitBudgetExhausted {
                filled: archive.filled(),
                required,
                fraction: archive.filled() as f64 / cfg.niches as f64,
            });
        }
        let w = cfg.sampler.sample(n, &mut rng);
        let cand = eval.evaluate(&archive, w)?;
        commit(&mut archive, cand, &mut snapshots);
    }

    if cfg.threads <= 1 {
        while archive.eval_count() < cfg.n_max {
            let child = offspring(&archive, cfg.mutation_rate, &mut rng)?;
            let cand = eval.evaluate(&archive, child)?;
            commit(&mut archive, cand, &mut snapshots);
        }
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        while archive.eval_count() < cfg.n_max {
            let remaining = (cfg.n_max - archive.eval_count()) as usize;
            let batch: Vec<Portfolio> = (0..remaining.min(cfg.batch_size))
                .map(|_| offspring(&archive, cfg.mutation_rate, &mut rng))
                .collect::<Result<_>>()?;
            let evaluated: Vec<Evaluated> = pool.install(|| {
                batch
                    .into_par_iter()
                    .map(|w| eval.evaluate(&archive, w))
                    .collect::<Result<_>>()
            })?;
            for cand in evaluated {
                commit(&mut archive, cand, &mut snapshots);
            }
        }
    }
    if snapshots.last().map(|s| s.evals) != Some(archive.eval_count()) {
        snapshots.push(Snapshot::of(&archive));
    }
    Ok(RunOutput { archive, snapshots })
}

fn offspring<R: Rng + ?Sized>(archive: &Archive, m: f64, rng: &mut R) -> Result<Portfolio> {
    let occupied = archive.occupied();
    let a = occupied[rng.random_range(0..occupied.len())];
    let b = occupied[rng.random_range(0..occupied.len())];
    let pa = &archive.get(a).expect("occupied").weights;
    let pb = &archive.get(b).expect("occupied").weights;
    recombine(pa, pb, m, rng)
}
