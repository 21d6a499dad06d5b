//! Fitness functions and the near-optimality region around a reference portfolio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{euclidean, risk_return, Estimates, Portfolio, RiskReturnPoint};

/// `μ >= (1 - c) μ0` and `σ <= (1 + c) σ0`, both boundaries inclusive.
pub fn in_region(rr: RiskReturnPoint, rr0: RiskReturnPoint, c: f64) -> bool {
    rr.mu >= (1.0 - c) * rr0.mu && rr.sigma <= (1.0 + c) * rr0.sigma
}

/// The reference optimal portfolio and its near-optimality constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub weights: Portfolio,
    pub rr: RiskReturnPoint,
    pub c: f64,
}

impl Reference {
    pub fn new(weights: Portfolio, est: &Estimates, c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidInput(format!(
                "near-optimality constant must lie in (0, 1), got {c}"
            )));
        }
        let rr = risk_return(&weights, est)?;
        Ok(Reference { weights, rr, c })
    }

    pub fn contains(&self, rr: RiskReturnPoint) -> bool {
        in_region(rr, self.rr, self.c)
    }
}

/// Scores a candidate given its weights and risk-return point.
pub trait FitnessFunction: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, w: &[f64], rr: RiskReturnPoint, reference: &Reference) -> f64;
}

/// Negative risk-return distance to the reference.
#[derive(Debug, Clone, Copy, Default)]
pub struct RiskProximity;

impl FitnessFunction for RiskProximity {
    fn name(&self) -> &'static str {
        "f1"
    }
    fn evaluate(&self, _w: &[f64], rr: RiskReturnPoint, reference: &Reference) -> f64 {
        -reference.rr.distance(&rr)
    }
}

/// Risk proximity outside the near-optimality region; weight-space distance
/// from the reference inside it. In-region scores are `>= 0`, out-of-region
/// scores `<= 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct DiversityInRegion;

impl FitnessFunction for DiversityInRegion {
    fn name(&self) -> &'static str {
        "f2"
    }
    fn evaluate(&self, w: &[f64], rr: RiskReturnPoint, reference: &Reference) -> f64 {
        if reference.contains(rr) {
            euclidean(w, reference.weights.weights())
        } else {
            -reference.rr.distance(&rr)
        }
    }
}

pub fn fitness1(w: &Portfolio, w0: &Portfolio, est: &Estimates) -> Result<f64> {
    let reference = Reference {
        rr: risk_return(w0, est)?,
        weights: w0.clone(),
        c: 0.5,
    };
    Ok(RiskProximity.evaluate(w.weights(), risk_return(w, est)?, &reference))
}

pub fn fitness2(w: &Portfolio, w0: &Portfolio, est: &Estimates, c: f64) -> Result<f64> {
    let reference = Reference::new(w0.clone(), est, c)?;
    Ok(DiversityInRegion.evaluate(w.weights(), risk_return(w, est)?, &reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{toy_estimates, TOY_REFERENCE};
    use approx::assert_abs_diff_eq;

    fn w0() -> Portfolio {
        Portfolio::new(TOY_REFERENCE.to_vec()).unwrap()
    }

    fn rr(mu: f64, sigma: f64) -> RiskReturnPoint {
        RiskReturnPoint { mu, sigma }
    }

    #[test]
    fn fitness1_examples() {
        let est = toy_estimates();
        assert_eq!(fitness1(&w0(), &w0(), &est).unwrap(), 0.0);
        let f = fitness1(&Portfolio::vertex(3, 0), &w0(), &est).unwrap();
        let rr0 = risk_return(&w0(), &est).unwrap();
        let oracle = -((0.15876 - rr0.mu).powi(2) + (0.16603 - rr0.sigma).powi(2)).sqrt();
        assert_abs_diff_eq!(f, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(f, -0.0590, epsilon = 1e-4);
    }

    #[test]
    fn region_examples() {
        let rr0 = rr(0.137048, 0.1111);
        assert!(in_region(rr0, rr0, 0.1));
        assert!(in_region(rr(0.130, 0.115), rr0, 0.1));
        assert!(!in_region(rr(0.120, 0.110), rr0, 0.1));
        assert!(!in_region(rr(0.14, 0.1223), rr0, 0.1));
    }

    #[test]
    fn fitness2_examples() {
        let est = toy_estimates();
        assert_eq!(fitness2(&w0(), &w0(), &est, 0.1).unwrap(), 0.0);
        let w = Portfolio::new(vec![0.681, 0.128, 0.191]).unwrap();
        let reference = Reference::new(w0(), &est, 0.1).unwrap();
        assert!(reference.contains(risk_return(&w, &est).unwrap()));
        assert_abs_diff_eq!(fitness2(&w, &w0(), &est, 0.1).unwrap(), 0.02f64.sqrt(), epsilon = 1e-12);
        let far = Portfolio::vertex(3, 2);
        let f = fitness2(&far, &w0(), &est, 0.1).unwrap();
        assert!(f < 0.0);
        assert_eq!(f, fitness1(&far, &w0(), &est).unwrap());
    }

    #[test]
    fn reference_rejects_bad_constant() {
        let est = toy_estimates();
        assert!(Reference::new(w0(), &est, 0.0).is_err());
        assert!(Reference::new(w0(), &est, 1.0).is_err());
    }

    mod props {
        use super::*;
        use crate::behavior::uniform_simplex;
        use proptest::prelude::*;
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #[test]
            fn sign_separation(seed in any::<u64>(), c in 0.01f64..0.5) {
                let est = toy_estimates();
                let reference = Reference::new(w0(), &est, c).unwrap();
                let w = uniform_simplex(3, &mut ChaCha8Rng::seed_from_u64(seed));
                let rr = risk_return(&w, &est).unwrap();
                let f2 = DiversityInRegion.evaluate(w.weights(), rr, &reference);
                let f1 = RiskProximity.evaluate(w.weights(), rr, &reference);
                prop_assert!(f1 <= 0.0);
                if reference.contains(rr) { prop_assert!(f2 >= 0.0) } else { prop_assert!(f2 <= 0.0) }
            }

            #[test]
            fn regions_nest_in_c(mu in 0.0f64..0.3, sigma in 0.0f64..0.3, c1 in 0.001f64..0.99, dc in 0.0f64..0.5) {
                let rr0 = rr(0.137048, 0.1111);
                let c2 = (c1 + dc).min(0.999);
                if in_region(rr(mu, sigma), rr0, c1) {
                    prop_assert!(in_region(rr(mu, sigma), rr0, c2));
                }
            }
        }
    }
}
