//! Name-keyed registries of the interchangeable strategies: fitness functions,
//! behavior spaces, covariance estimators and return models.

use crate::behavior::{BehaviorSpace, SectorCapBehavior, WeightsBehavior};
use crate::error::{Error, Result};
use crate::estimation::{
    Capm, CovarianceEstimator, EstimatorSettings, LedoitWolf, MarketProxy, ReturnModel, SampleCovariance, SampleMean,
};
use crate::fitness::{DiversityInRegion, FitnessFunction, RiskProximity};
use crate::types::AssetUniverse;

pub struct Entry<F> {
    pub name: &'static str,
    pub aliases: &'static [&'static str],
    pub summary: &'static str,
    pub build: F,
}

pub struct Registry<F> {
    kind: &'static str,
    entries: Vec<Entry<F>>,
}

impl<F> Registry<F> {
    pub fn new(kind: &'static str) -> Self {
        Registry {
            kind,
            entries: Vec::new(),
        }
    }

    pub fn register(
        mut self,
        name: &'static str,
        aliases: &'static [&'static str],
        summary: &'static str,
        build: F,
    ) -> Self {
        self.entries.push(Entry {
            name,
            aliases,
            summary,
            build,
        });
        self
    }

    pub fn get(&self, name: &str) -> Result<&Entry<F>> {
        let key = name.trim().to_ascii_lowercase();
        self.entries
            .iter()
            .find(|e| e.name == key || e.aliases.contains(&key.as_str()))
            .ok_or_else(|| Error::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                available: self.names().join(", "),
            })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name).collect()
    }

    pub fn entries(&self) -> &[Entry<F>] {
        &self.entries
    }
}

pub type FitnessCtor = fn() -> Box<dyn FitnessFunction>;
pub type BehaviorCtor = fn(&AssetUniverse) -> Box<dyn BehaviorSpace>;
pub type CovarianceCtor = fn() -> Box<dyn CovarianceEstimator>;
pub type ReturnModelCtor = fn(MarketProxy, f64) -> Box<dyn ReturnModel>;

fn risk_proximity() -> Box<dyn FitnessFunction> {
    Box::new(RiskProximity)
}

fn diversity_in_region() -> Box<dyn FitnessFunction> {
    Box::new(DiversityInRegion)
}

fn weights_behavior(u: &AssetUniverse) -> Box<dyn BehaviorSpace> {
    Box::new(WeightsBehavior::new(u.len()))
}

fn sector_cap_behavior(u: &AssetUniverse) -> Box<dyn BehaviorSpace> {
    Box::new(SectorCapBehavior::new(u))
}

fn sample_covariance() -> Box<dyn CovarianceEstimator> {
    Box::new(SampleCovariance)
}

fn ledoit_wolf() -> Box<dyn CovarianceEstimator> {
    Box::new(LedoitWolf)
}

fn sample_mean(_: MarketProxy, _: f64) -> Box<dyn ReturnModel> {
    Box::new(SampleMean)
}

fn capm(market: MarketProxy, rf: f64) -> Box<dyn ReturnModel> {
    Box::new(Capm { market, rf })
}

pub fn fitness_functions() -> Registry<FitnessCtor> {
    Registry::<FitnessCtor>::new("fitness")
        .register(
            "f1",
            &["fitness1", "risk-proximity"],
            "negative risk-return distance to the reference",
            risk_proximity,
        )
        .register(
            "f2",
            &["fitness2", "diversity"],
            "risk proximity outside the near-optimal region, weight distance from the reference inside",
            diversity_in_region,
        )
}

pub fn behavior_spaces() -> Registry<BehaviorCtor> {
    Registry::<BehaviorCtor>::new("behavior")
        .register("b1", &["weights"], "portfolio weights", weights_behavior)
        .register(
            "b2",
            &["sector-cap"],
            "sector exposures plus normalized market capitalization",
            sector_cap_behavior,
        )
}

pub fn covariance_estimators() -> Registry<CovarianceCtor> {
    Registry::<CovarianceCtor>::new("covariance")
        .register("sample", &[], "annualized sample covariance", sample_covariance)
        .register(
            "ledoit-wolf",
            &["lw", "shrinkage"],
            "shrinkage towards the average-variance identity",
            ledoit_wolf,
        )
}

pub fn return_models() -> Registry<ReturnModelCtor> {
    Registry::<ReturnModelCtor>::new("return model")
        .register("sample", &["historical"], "annualized sample mean", sample_mean)
        .register("capm", &[], "CAPM expected returns", capm)
}

pub fn fitness(name: &str) -> Result<Box<dyn FitnessFunction>> {
    Ok((fitness_functions().get(name)?.build)())
}

pub fn behavior(name: &str, universe: &AssetUniverse) -> Result<Box<dyn BehaviorSpace>> {
    Ok((behavior_spaces().get(name)?.build)(universe))
}

pub fn covariance(name: &str) -> Result<Box<dyn CovarianceEstimator>> {
    Ok((covariance_estimators().get(name)?.build)())
}

pub fn return_model(name: &str, market: MarketProxy, rf: f64) -> Result<Box<dyn ReturnModel>> {
    Ok((return_models().get(name)?.build)(market, rf))
}

/// Estimator settings assembled from a return-model name and a covariance name.
pub fn estimator_settings(
    returns: &str,
    covariance_name: &str,
    market: MarketProxy,
    rf: f64,
    trading_days_per_year: f64,
) -> Result<EstimatorSettings> {
    Ok(EstimatorSettings {
        returns: return_model(returns, market, rf)?,
        covariance: covariance(covariance_name)?,
        trading_days_per_year,
    })
}
