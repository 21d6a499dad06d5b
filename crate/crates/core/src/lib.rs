//! Quality-diversity search for diverse near-optimal long-only mean-variance
//! portfolios.
//!
//! A run estimates returns and covariances, derives a reference optimal
//! portfolio, partitions a behavior space with a centroidal Voronoi
//! tessellation and fills it with CVT-MAP-Elites. Fitness functions, behavior
//! spaces, covariance estimators and return models are interchangeable
//! strategies looked up by name in [`registry`].

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analytics;
pub mod archive;
pub mod behavior;
pub mod cvt;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod fitness;
pub mod io;
pub mod optimizer;
pub mod registry;
pub mod selection;
pub mod synth;
pub mod types;

pub use archive::{Archive, EliteRecord};
pub use behavior::{BehaviorDescriptor, BehaviorSpace};
pub use cvt::CvtPartition;
pub use engine::{run_qd, QdConfig, RunOutput, Snapshot};
pub use error::{Error, Result};
pub use estimation::ReturnsWindow;
pub use fitness::{FitnessFunction, Reference};
pub use optimizer::ReferenceRule;
pub use types::{AssetUniverse, Estimates, Portfolio, RiskReturnPoint};
